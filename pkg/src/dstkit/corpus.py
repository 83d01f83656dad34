"""MultiWOZ-style multi-turn dialogue corpora: load, validate, serialize, split.

Annotation conventions
----------------------
Gold annotations live on user turns only. ``state`` is cumulative: each
turn's state equals the previous state overlaid with that turn's ``slots``
and don't-care resolutions. A turn may carry ``shift: true`` when the user
changes intent; the previous state is then restricted to slot ids the new
intent shares before the overlay (carryover). ``dont_care`` lists the slot
ids whose *current* value in the state originates from a don't-care
resolution under the current intent; a slot leaves the set once the user
supplies an explicit value or the dialogue shifts away and carries it over.

Validation failures raise :class:`CorpusError` with a stable ``code`` (see
``ERROR_CODES``) plus the dialogue id and turn index where applicable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .ontology import IntentSchema, Ontology

ERROR_CODES = (
    "syntax",
    "bad_speaker",
    "first_turn_not_user",
    "turns_not_alternating",
    "no_user_turn",
    "system_turn_annotated",
    "duplicate_dialogue_id",
    "unknown_intent",
    "unknown_slot",
    "unknown_value",
    "slots_not_in_state",
    "dont_care_overlap",
    "intent_change_without_shift",
    "non_monotone_state",
    "state_mismatch",
)


class CorpusError(Exception):
    def __init__(self, code: str, message: str, dialogue_id: str | None = None,
                 turn_index: int | None = None):
        assert code in ERROR_CODES, code
        self.code = code
        self.dialogue_id = dialogue_id
        self.turn_index = turn_index
        where = ""
        if dialogue_id is not None:
            where = f" [dialogue {dialogue_id}"
            if turn_index is not None:
                where += f", turn {turn_index}"
            where += "]"
        super().__init__(f"{code}: {message}{where}")


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str
    gold_intent: str | None = None
    gold_slots: dict[str, str] = field(default_factory=dict)
    gold_dont_care: frozenset[str] = frozenset()
    gold_state: dict[str, str] = field(default_factory=dict)
    shift: bool = False

    @property
    def annotated(self) -> bool:
        return self.speaker == "user" and self.gold_intent is not None


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[Turn, ...]
    domain_hint: str | None = None

    def user_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.speaker == "user"]


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...]
    ontology_ref: str = ""

    def __len__(self) -> int:
        return len(self.dialogues)


def load_corpus(text: str, ontology: Ontology) -> Corpus:
    """Parse a corpus document and verify every annotation invariant."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorpusError("syntax", f"line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("dialogues"), list):
        raise CorpusError("syntax", "top level must be an object with a 'dialogues' array")

    dialogues: list[Dialogue] = []
    seen_ids: set[str] = set()
    for raw in doc["dialogues"]:
        dialogue = _parse_dialogue(raw)
        if dialogue.id in seen_ids:
            raise CorpusError("duplicate_dialogue_id", f"id {dialogue.id!r} repeats",
                              dialogue.id)
        seen_ids.add(dialogue.id)
        _validate_dialogue(dialogue, ontology)
        dialogues.append(dialogue)

    return Corpus(dialogues=tuple(dialogues),
                  ontology_ref=str(doc.get("ontology_checksum", "")))


def serialize_corpus(corpus: Corpus) -> str:
    doc = {
        "ontology_checksum": corpus.ontology_ref,
        "dialogues": [
            {
                "id": d.id,
                **({"domain_hint": d.domain_hint} if d.domain_hint else {}),
                "turns": [_turn_to_dict(t) for t in d.turns],
            }
            for d in corpus.dialogues
        ],
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)


def _turn_to_dict(t: Turn) -> dict:
    out: dict = {"speaker": t.speaker, "text": t.text}
    if t.speaker == "user" and t.gold_intent is not None:
        out["intent"] = t.gold_intent
        if t.gold_slots:
            out["slots"] = dict(t.gold_slots)
        if t.gold_dont_care:
            out["dont_care"] = sorted(t.gold_dont_care)
        out["state"] = dict(t.gold_state)
        if t.shift:
            out["shift"] = True
    return out


def _parse_dialogue(raw) -> Dialogue:
    if not isinstance(raw, dict) or not isinstance(raw.get("id"), str):
        raise CorpusError("syntax", "dialogue entries need a string 'id'")
    did = raw["id"]
    raw_turns = raw.get("turns")
    if not isinstance(raw_turns, list):
        raise CorpusError("syntax", "missing 'turns' array", did)
    turns = []
    for i, rt in enumerate(raw_turns):
        if not isinstance(rt, dict):
            raise CorpusError("syntax", "turn entries must be objects", did, i)
        speaker = rt.get("speaker")
        if speaker not in ("user", "system"):
            raise CorpusError("bad_speaker", f"speaker {speaker!r}", did, i)
        text = rt.get("text")
        if not isinstance(text, str):
            raise CorpusError("syntax", "turn needs a string 'text'", did, i)
        annotated_keys = [k for k in ("intent", "slots", "dont_care", "state", "shift")
                          if k in rt]
        if speaker == "system" and annotated_keys:
            raise CorpusError("system_turn_annotated",
                              f"system turn carries {annotated_keys[0]!r}", did, i)
        turns.append(Turn(
            speaker=speaker,
            text=text,
            gold_intent=rt.get("intent"),
            gold_slots=dict(rt.get("slots", {})),
            gold_dont_care=frozenset(rt.get("dont_care", [])),
            gold_state=dict(rt.get("state", {})),
            shift=bool(rt.get("shift", False)),
        ))
    return Dialogue(id=did, turns=tuple(turns), domain_hint=raw.get("domain_hint"))


def _validate_dialogue(dialogue: Dialogue, ontology: Ontology) -> None:
    did = dialogue.id
    if not dialogue.turns or dialogue.turns[0].speaker != "user":
        if not dialogue.turns:
            raise CorpusError("no_user_turn", "dialogue has no turns", did)
        raise CorpusError("first_turn_not_user", "dialogue must open with the user", did)
    for i in range(1, len(dialogue.turns)):
        if dialogue.turns[i].speaker == dialogue.turns[i - 1].speaker:
            raise CorpusError("turns_not_alternating",
                              f"consecutive {dialogue.turns[i].speaker} turns", did, i)

    prev_state: dict[str, str] = {}
    prev_intent: str | None = None
    for i, turn in enumerate(dialogue.turns):
        if turn.speaker != "user":
            continue
        if turn.gold_intent is None:
            # Unannotated user turn: state chain carries forward untouched.
            continue
        if turn.gold_intent not in ontology.intents:
            raise CorpusError("unknown_intent", f"intent {turn.gold_intent!r}", did, i)
        schema = ontology.intents[turn.gold_intent]
        _check_turn_annotations(turn, schema, did, i)

        if prev_intent is not None and turn.gold_intent != prev_intent and not turn.shift:
            raise CorpusError(
                "intent_change_without_shift",
                f"{prev_intent!r} -> {turn.gold_intent!r} lacks shift marker", did, i)

        expected = dict(prev_state)
        if turn.shift:
            expected = {k: v for k, v in expected.items() if k in schema.slot_ids()}
        expected.update(turn.gold_slots)
        for slot_id in sorted(turn.gold_dont_care):
            expected[slot_id] = schema.slot(slot_id).default_value

        if expected != turn.gold_state:
            dropped = set(expected) - set(turn.gold_state)
            if dropped and not turn.shift:
                raise CorpusError(
                    "non_monotone_state",
                    f"slot {sorted(dropped)[0]!r} left the state without intent shift",
                    did, i)
            raise CorpusError(
                "state_mismatch",
                f"state does not equal previous state overlaid with this turn's "
                f"annotations (expected {expected})", did, i)
        prev_state = dict(turn.gold_state)
        prev_intent = turn.gold_intent


def _check_turn_annotations(turn: Turn, schema: IntentSchema, did: str, i: int) -> None:
    known = set(schema.slot_ids())
    for slot_id in list(turn.gold_slots) + sorted(turn.gold_dont_care) + list(turn.gold_state):
        if slot_id not in known:
            raise CorpusError("unknown_slot",
                              f"slot {slot_id!r} not in intent {schema.id!r}", did, i)
    for slot_id, value in turn.gold_slots.items():
        if slot_id not in turn.gold_state or turn.gold_state[slot_id] != value:
            raise CorpusError("slots_not_in_state",
                              f"slot {slot_id!r} not reflected in state", did, i)
    overlap = turn.gold_dont_care & set(turn.gold_slots)
    if overlap:
        raise CorpusError("dont_care_overlap",
                          f"slot {sorted(overlap)[0]!r} both extracted and dont-care",
                          did, i)
    for slot_id, value in turn.gold_state.items():
        slot = schema.slot(slot_id)
        if slot.value_list and value not in slot.value_list:
            raise CorpusError("unknown_value",
                              f"value {value!r} not in value list of {slot_id!r}", did, i)
        if not slot.value_list and value == "*" and slot_id not in turn.gold_dont_care:
            raise CorpusError("unknown_value",
                              f"sentinel '*' on {slot_id!r} without dont_care", did, i)


def split_kfold(corpus: Corpus, k: int, seed: int) -> list[tuple[Corpus, Corpus]]:
    """Deterministic k-fold split by dialogue; fold sizes differ by at most 1."""
    n = len(corpus.dialogues)
    if k < 2 or k > n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    folds: list[tuple[Corpus, Corpus]] = []
    start = 0
    for size in sizes:
        test_idx = set(order[start:start + size])
        start += size
        train = tuple(d for j, d in enumerate(corpus.dialogues) if j not in test_idx)
        test = tuple(d for j, d in enumerate(corpus.dialogues) if j in test_idx)
        folds.append((
            Corpus(dialogues=train, ontology_ref=corpus.ontology_ref),
            Corpus(dialogues=test, ontology_ref=corpus.ontology_ref),
        ))
    return folds
