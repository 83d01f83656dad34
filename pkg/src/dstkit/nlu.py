"""Schedule construction and per-turn NLU prediction.

Every turn runs the backend twice: once on the current utterance alone and
once on the full schedule (prior user turns, each annotated with its
resolved intent, plus the current utterance). The single-utterance run
yields ``turn_local_intent``; the scheduled run yields ``context_intent``
and the score distribution handed downstream. Disagreement between the two
is what the tracker uses to detect intent shifts.

Two backends are provided: a deterministic lexicon backend (trigger-phrase
scoring with softmax normalization, gazetteer/pattern slot extraction) and
a remote HTTP client speaking POST /v1/nlu.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from .ontology import Ontology

# Evidence contributed by an annotated schedule line to its intent's raw
# score, relative to typical trigger weights (~2.5). Keeps the context run
# anchored to the dialogue's established intent.
ANNOTATION_WEIGHT = 0.5

# Evidence per slot extracted from the current utterance, credited to every
# intent whose schema carries that slot. This is what lets a bare follow-up
# answer ("kebab") stay confidently on the active intent.
SLOT_EVIDENCE_WEIGHT = 1.5

DEFAULT_TEMPERATURE = 0.5

SCORE_SUM_TOLERANCE = 1e-6


class NluError(Exception):
    pass


class LexiconError(NluError):
    """Malformed lexicon document or dangling intent/slot reference."""


class RemoteNluError(NluError):
    """Remote backend unavailable or returned a malformed response."""


@dataclass(frozen=True)
class ScheduleInput:
    lines: tuple[tuple[str, str | None], ...]
    current: str

    def __post_init__(self):
        if not self.current:
            raise NluError("current utterance must not be empty")


@dataclass(frozen=True)
class NluOutput:
    scores: dict[str, float]
    slots: dict[str, str]
    dont_care_slots: frozenset[str]
    turn_local_intent: str
    context_intent: str

    @property
    def top1(self) -> float:
        return max(self.scores.values())


def build_schedule(
    history: list[tuple[str, str | None]], current: str
) -> ScheduleInput:
    """Assemble the scheduled input: prior user turns in order, then current."""
    return ScheduleInput(lines=tuple(history), current=current)


def render_schedule_lines(schedule: ScheduleInput) -> list[str]:
    """Wire rendering: each prior utterance tagged with its resolved intent."""
    rendered = []
    for text, intent in schedule.lines:
        rendered.append(f"{text} ⟨intent={intent}⟩" if intent else text)
    return rendered


@dataclass(frozen=True)
class BackendResult:
    scores: dict[str, float]
    slots: dict[str, str]
    dont_care_slots: frozenset[str]


class NluBackend(Protocol):
    def run(self, ontology: Ontology, schedule: ScheduleInput) -> BackendResult: ...


def predict(
    backend: NluBackend,
    ontology: Ontology,
    schedule: ScheduleInput,
    pending_slot: str | None = None,
) -> NluOutput:
    """Run the backend both ways and assemble a validated NluOutput.

    ``pending_slot`` is the slot the system just asked about, if any; when
    the single-utterance run lands on the don't-care intent and the backend
    did not bind a slot itself, the pending slot is bound.
    """
    context = _checked(backend.run(ontology, schedule), ontology)
    if schedule.lines:
        local = _checked(
            backend.run(ontology, ScheduleInput(lines=(), current=schedule.current)),
            ontology,
        )
    else:
        local = context

    turn_local = _argmax(local.scores, ontology)
    context_intent = _argmax(context.scores, ontology)

    dont_care = set(context.dont_care_slots)
    if not dont_care and pending_slot is not None:
        if turn_local == ontology.dont_care_intent:
            dont_care.add(pending_slot)

    slots = {k: v for k, v in context.slots.items() if k not in dont_care}
    return NluOutput(
        scores=context.scores,
        slots=slots,
        dont_care_slots=frozenset(dont_care),
        turn_local_intent=turn_local,
        context_intent=context_intent,
    )


def _checked(result: BackendResult, ontology: Ontology) -> BackendResult:
    known = set(ontology.intent_ids())
    extra = set(result.scores) - known
    if extra:
        raise NluError(f"score for unknown intent {sorted(extra)[0]!r}")
    scores = {i: float(result.scores.get(i, 0.0)) for i in ontology.intent_ids()}
    total = sum(scores.values())
    if any(v < 0 for v in scores.values()) or abs(total - 1.0) > SCORE_SUM_TOLERANCE:
        raise NluError(f"scores do not form a distribution (sum={total})")
    return BackendResult(scores=scores, slots=result.slots,
                         dont_care_slots=result.dont_care_slots)


def _argmax(scores: dict[str, float], ontology: Ontology) -> str:
    best_id, best = None, -1.0
    for intent_id in ontology.intent_ids():
        v = scores.get(intent_id, 0.0)
        if v > best:
            best_id, best = intent_id, v
    assert best_id is not None
    return best_id


# ---------------------------------------------------------------------------
# Lexicon backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LexiconNluBackend:
    """Pure, deterministic stand-in for a fine-tuned encoder.

    Raw intent score = matched trigger weights over all schedule texts,
    plus ANNOTATION_WEIGHT per line annotated with the intent, plus
    SLOT_EVIDENCE_WEIGHT per slot extracted from the current utterance for
    every intent carrying that slot. History refines but never substitutes
    for the current turn: when the current utterance contributes zero
    evidence (no trigger, no slot), the distribution falls back to uniform,
    so vague mid-dialogue turns read as unclear downstream. Slots come from
    the current utterance only, via gazetteer match (longest wins) or a
    regex pattern's first group.
    """

    triggers: dict[str, tuple[tuple[str, float], ...]]
    gazetteers: dict[str, tuple[str, ...]]
    patterns: dict[str, str]
    temperature: float = DEFAULT_TEMPERATURE
    _compiled: dict[str, re.Pattern] = field(default_factory=dict, repr=False,
                                             compare=False)

    def __post_init__(self):
        for slot_id, pattern in self.patterns.items():
            self._compiled[slot_id] = re.compile(pattern)

    def run(self, ontology: Ontology, schedule: ScheduleInput) -> BackendResult:
        raw = self.raw_scores(ontology, schedule)
        scores = _softmax(raw, self.temperature)
        return BackendResult(
            scores=scores,
            slots=self.extract_slots(schedule.current),
            dont_care_slots=frozenset(),
        )

    def raw_scores(self, ontology: Ontology, schedule: ScheduleInput) -> dict[str, float]:
        line_texts = [normalize_text(t) for t, _ in schedule.lines]
        current = normalize_text(schedule.current)
        slots = self.extract_slots(schedule.current)

        raw = {}
        current_evidence = 0.0
        for intent_id in ontology.intent_ids():
            schema = ontology.intent(intent_id)
            history = 0.0
            this_turn = 0.0
            for phrase, weight in self.triggers.get(intent_id, ()):
                history += weight * sum(1 for t in line_texts if phrase in t)
                if phrase in current:
                    this_turn += weight
            history += ANNOTATION_WEIGHT * sum(
                1 for _, annotated in schedule.lines if annotated == intent_id)
            this_turn += SLOT_EVIDENCE_WEIGHT * sum(
                1 for slot_id in slots if slot_id in schema.slot_ids())
            raw[intent_id] = history + this_turn
            current_evidence += this_turn

        if current_evidence == 0.0:
            return {intent_id: 0.0 for intent_id in raw}
        return raw

    def extract_slots(self, utterance: str) -> dict[str, str]:
        normalized = normalize_text(utterance)
        slots: dict[str, str] = {}
        for slot_id, entries in self.gazetteers.items():
            best: str | None = None
            for canonical in entries:
                if normalize_text(canonical) in normalized:
                    if best is None or len(canonical) > len(best):
                        best = canonical
            if best is not None:
                slots[slot_id] = best
        for slot_id, pattern in self._compiled.items():
            if slot_id in slots:
                continue
            m = pattern.search(utterance)
            if m:
                value = m.group(1) if m.groups() else m.group(0)
                slots[slot_id] = value.strip()
        return slots


def normalize_text(text: str) -> str:
    return " ".join(text.casefold().split())


def _softmax(raw: dict[str, float], temperature: float) -> dict[str, float]:
    peak = max(raw.values())
    exps = {k: math.exp((v - peak) / temperature) for k, v in raw.items()}
    total = sum(exps.values())
    return {k: v / total for k, v in exps.items()}


def build_lexicon_backend(rules, ontology: Ontology) -> LexiconNluBackend:
    """Build the lexicon backend from a rules document (JSON text or dict)."""
    if isinstance(rules, str):
        try:
            rules = json.loads(rules)
        except json.JSONDecodeError as e:
            raise LexiconError(f"line {e.lineno}: {e.msg}") from None
    if not isinstance(rules, dict):
        raise LexiconError("lexicon must be a JSON object")

    known_intents = set(ontology.intent_ids())
    known_slots = {s.id for schema in ontology.intents.values() for s in schema.slots}

    triggers: dict[str, tuple[tuple[str, float], ...]] = {}
    for entry in rules.get("intents", []):
        intent_id = entry.get("id")
        if intent_id not in known_intents:
            raise LexiconError(f"trigger references unknown intent {intent_id!r}")
        if intent_id in triggers:
            raise LexiconError(f"duplicate trigger entry for intent {intent_id!r}")
        phrases = []
        for t in entry.get("triggers", []):
            phrase, weight = t.get("phrase"), t.get("weight", 1.0)
            if not isinstance(phrase, str) or not phrase:
                raise LexiconError(f"intent {intent_id!r}: trigger needs a phrase")
            if not isinstance(weight, (int, float)) or weight <= 0:
                raise LexiconError(f"intent {intent_id!r}: weight must be positive")
            phrases.append((normalize_text(phrase), float(weight)))
        triggers[intent_id] = tuple(phrases)

    gazetteers: dict[str, tuple[str, ...]] = {}
    patterns: dict[str, str] = {}
    for entry in rules.get("slots", []):
        slot_id = entry.get("id")
        if slot_id not in known_slots:
            raise LexiconError(f"gazetteer references unknown slot {slot_id!r}")
        if slot_id in gazetteers or slot_id in patterns:
            raise LexiconError(f"duplicate slot entry {slot_id!r}")
        gaz = entry.get("gazetteer", [])
        if not isinstance(gaz, list) or not all(isinstance(g, str) for g in gaz):
            raise LexiconError(f"slot {slot_id!r}: gazetteer must be a string array")
        if gaz:
            gazetteers[slot_id] = tuple(gaz)
        pattern = entry.get("pattern")
        if pattern is not None:
            try:
                re.compile(pattern)
            except re.error as e:
                raise LexiconError(f"slot {slot_id!r}: bad pattern: {e}") from None
            patterns[slot_id] = pattern

    temperature = rules.get("temperature", DEFAULT_TEMPERATURE)
    if not isinstance(temperature, (int, float)) or temperature <= 0:
        raise LexiconError("temperature must be positive")

    return LexiconNluBackend(
        triggers=triggers,
        gazetteers=gazetteers,
        patterns=patterns,
        temperature=float(temperature),
    )


# ---------------------------------------------------------------------------
# Remote backend
# ---------------------------------------------------------------------------


class RemoteNluBackend:
    """HTTP client for a remote NLU service.

    POST {base_url}/v1/nlu with {"schedule": [rendered lines], "current": str}
    and expect {"scores": {...}, "slots": {...}, "dont_care": [...]}.
    Concurrent calls are safe; each request honors ``timeout``.
    """

    def __init__(self, base_url: str, timeout: float = 10.0,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def run(self, ontology: Ontology, schedule: ScheduleInput) -> BackendResult:
        body = {"schedule": render_schedule_lines(schedule), "current": schedule.current}
        try:
            response = self._client.post(f"{self.base_url}/v1/nlu", json=body)
        except httpx.HTTPError as e:
            raise RemoteNluError(f"backend unavailable: {e}") from e
        if response.status_code != 200:
            raise RemoteNluError(f"backend returned status {response.status_code}")
        try:
            payload = response.json()
            scores = {str(k): float(v) for k, v in payload["scores"].items()}
            slots = {str(k): str(v) for k, v in payload.get("slots", {}).items()}
            dont_care = frozenset(str(s) for s in payload.get("dont_care", []))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise RemoteNluError(f"malformed backend response: {e}") from e
        return BackendResult(scores=scores, slots=slots, dont_care_slots=dont_care)

    def close(self):
        self._client.close()
