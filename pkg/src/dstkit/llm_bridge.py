"""Prompt selection/rendering, structured-output parsing, completion clients,
and the online answer agent.

The completion wire format is the de facto chat-completion shape: POST
``{base_url}/v1/chat/completions`` with ``{"model", "messages", "temperature": 0}``
returning ``{"choices": [{"message": {"content": ...}}]}``. Any conforming
server or mock works. API keys are looked up from the environment by name at
request time and never appear in prompts, logs, or serialized results.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import httpx

from . import tracker
from .nlu import NluOutput, ScheduleInput, render_schedule_lines
from .ontology import IntentSchema, Ontology
from .querygen import ANY_VALUE, SqlQuery
from .tracker import DialogueState, DstResult
from .validator import ValidationVerdict

logger = logging.getLogger(__name__)

WILDCARD = "*"

PLACEHOLDERS = ("schedule", "state", "schema", "output_spec")

OUTPUT_SPEC = (
    'Respond with exactly one JSON object of this shape and nothing else:\n'
    '{"dialogue_status": "in_progress" | "complete", "intent": "<intent id>", '
    '"state": {"<slot id>": "<value>", ...}, '
    '"sql": {"text": "<SELECT with ? placeholders>", "params": ["<value>", ...]}, '
    '"followup": "<next question>" | null}\n'
    'Set dialogue_status to "complete" only when every mandatory slot is filled, '
    'and then set followup to null.'
)

RETRY_BASE_DELAY = 0.25


class PromptError(Exception):
    pass


class StructuredOutputError(Exception):
    pass


class CompletionError(Exception):
    pass


class AnswerError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    intent_id: str  # ontology id or "*"
    system_text: str
    user_text: str
    exemplars: tuple[tuple[str, str], ...] = ()


def load_prompt_library(text) -> list[PromptTemplate]:
    """Load and validate the prompt library (JSON array of templates)."""
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise PromptError(f"line {e.lineno}: {e.msg}") from None
    else:
        doc = text
    if not isinstance(doc, list):
        raise PromptError("prompt library must be a JSON array")

    templates = []
    seen: set[str] = set()
    for raw in doc:
        intent_id = raw.get("intent")
        user_text = raw.get("user")
        if not isinstance(intent_id, str) or not isinstance(user_text, str):
            raise PromptError("template needs string 'intent' and 'user' fields")
        if intent_id in seen:
            raise PromptError(f"duplicate template for intent {intent_id!r}")
        seen.add(intent_id)
        _check_placeholders(user_text)
        exemplars = tuple(
            (ex["input"], ex["output"]) for ex in raw.get("exemplars", [])
        )
        templates.append(PromptTemplate(
            intent_id=intent_id,
            system_text=raw.get("system", ""),
            user_text=user_text,
            exemplars=exemplars,
        ))
    if WILDCARD not in seen:
        raise PromptError("prompt library needs exactly one wildcard template")
    return templates


def _check_placeholders(text: str) -> None:
    import re
    for name in re.findall(r"\{([a-z_]+)\}", text):
        if name not in PLACEHOLDERS:
            raise PromptError(f"unresolved placeholder {{{name}}}")


def select_prompt(library: Sequence[PromptTemplate], intent: str) -> PromptTemplate:
    """Exact intent match preferred, wildcard otherwise."""
    wildcard = None
    for template in library:
        if template.intent_id == intent:
            return template
        if template.intent_id == WILDCARD:
            wildcard = template
    if wildcard is None:
        raise PromptError("prompt library has no wildcard template")
    return wildcard


def render_prompt(
    template: PromptTemplate,
    schedule: ScheduleInput,
    state: DialogueState,
    schema: IntentSchema,
) -> str:
    """Pure substitution; rendering the same inputs twice is byte-identical."""
    schedule_text = "\n".join(render_schedule_lines(schedule) + [schedule.current])
    state_text = json.dumps(
        {slot_id: f.value for slot_id, f in state.fills.items()},
        ensure_ascii=False,
    )
    schema_text = json.dumps(
        {
            "intent": schema.id,
            "slots": [
                {"id": s.id, "mandatory": s.mandatory, "values": list(s.value_list)}
                for s in schema.slots
            ],
        },
        ensure_ascii=False,
    )
    _check_placeholders(template.user_text)
    user = template.user_text
    for name, value in (("schedule", schedule_text), ("state", state_text),
                        ("schema", schema_text), ("output_spec", OUTPUT_SPEC)):
        user = user.replace("{" + name + "}", value)

    parts = []
    if template.system_text:
        parts.append(template.system_text)
    for example_in, example_out in template.exemplars:
        parts.append(f"Input:\n{example_in}\nOutput:\n{example_out}")
    parts.append(user)
    return "\n\n".join(parts)


# ---------------------------------------------------------------------------
# Structured output
# ---------------------------------------------------------------------------


def dst_result_to_json(result: DstResult) -> str:
    """Canonical serialization: fixed key order, raw UTF-8."""
    return json.dumps(result.to_dict(), ensure_ascii=False)


def parse_structured_output(raw: str) -> DstResult:
    """Strict parse of the DstResult shape with a single repair pass.

    The repair pass strips markdown code fences and anything outside the
    outermost braces; after that the JSON must be exact.
    """
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError:
        repaired = _repair(raw)
        try:
            doc = json.loads(repaired)
        except json.JSONDecodeError as e:
            raise StructuredOutputError(f"unparseable after repair: {e.msg}") from None
    if not isinstance(doc, dict):
        raise StructuredOutputError("output must be a JSON object")

    for key in ("intent", "state", "sql", "dialogue_status"):
        if key not in doc:
            raise StructuredOutputError(f"missing key: {key}")

    intent = doc["intent"]
    state = doc["state"]
    sql = doc["sql"]
    status = doc["dialogue_status"]
    followup = doc.get("followup")

    if not isinstance(intent, str) or not intent:
        raise StructuredOutputError("intent must be a non-empty string")
    if not isinstance(state, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in state.items()
    ):
        raise StructuredOutputError("state must map slot ids to string values")
    if not isinstance(sql, dict) or "text" not in sql or "params" not in sql:
        raise StructuredOutputError("sql must carry 'text' and 'params'")
    if status not in ("in_progress", "complete"):
        raise StructuredOutputError(f"bad dialogue_status {status!r}")
    if followup is not None and not isinstance(followup, str):
        raise StructuredOutputError("followup must be a string or null")
    if status == "complete" and followup is not None:
        raise StructuredOutputError("complete result must not carry a followup")

    params = tuple(str(p) for p in sql["params"])
    text = str(sql["text"])
    if text.count("?") != len(params):
        raise StructuredOutputError("sql placeholder count does not match params")

    return DstResult(
        intent=intent,
        state=dict(state),
        query=SqlQuery(text=text, params=params),
        followup=followup,
        dialogue_status=status,
    )


def _repair(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        body = [ln for ln in lines if not ln.strip().startswith("```")]
        text = "\n".join(body)
    start, end = text.find("{"), text.rfind("}")
    if start >= 0 and end > start:
        text = text[start:end + 1]
    return text


# ---------------------------------------------------------------------------
# Completion clients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompletionEndpoint:
    base_url: str
    model_name: str = "gpt-4o-mini"
    timeout: float = 30.0
    max_retries: int = 2
    api_key_ref: str = ""  # environment variable NAME, never the key itself

    def __post_init__(self):
        if self.timeout <= 0:
            raise CompletionError("timeout must be positive")
        if self.max_retries < 0:
            raise CompletionError("max_retries must be >= 0")


@dataclass(frozen=True)
class TurnContext:
    """Side channel handing mock backends what a live tracker would know."""
    state: DialogueState
    nlu: NluOutput
    verdict: ValidationVerdict
    ontology: Ontology


class CompletionBackend(Protocol):
    def complete(self, prompt: str, context: TurnContext | None = None) -> str: ...


class HttpCompletionClient:
    """Chat-completion client with exponential backoff on transient errors.

    Retries transport failures and 5xx/429 statuses at most ``max_retries``
    times, sleeping base 250 ms doubled per attempt with multiplicative
    jitter. The prompt is sent as a single user message at temperature 0.
    """

    def __init__(
        self,
        endpoint: CompletionEndpoint,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=endpoint.timeout, transport=transport)
        self._sleep = sleep
        self._rng = rng or random.Random()

    def complete(self, prompt: str, context: TurnContext | None = None) -> str:
        body = {
            "model": self.endpoint.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {}
        if self.endpoint.api_key_ref:
            key = os.environ.get(self.endpoint.api_key_ref)
            if key:
                headers["Authorization"] = f"Bearer {key}"

        url = f"{self.endpoint.base_url.rstrip('/')}/v1/chat/completions"
        attempts = self.endpoint.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(1, attempts + 1):
            try:
                response = self._client.post(url, json=body, headers=headers)
            except httpx.HTTPError as e:
                last_error = CompletionError(f"transport error: {e}")
            else:
                if response.status_code == 200:
                    return self._extract(response)
                if response.status_code in (429,) or response.status_code >= 500:
                    last_error = CompletionError(
                        f"transient status {response.status_code}")
                else:
                    raise CompletionError(f"status {response.status_code}")
            if attempt < attempts:
                delay = RETRY_BASE_DELAY * (2 ** (attempt - 1))
                delay *= self._rng.uniform(0.5, 1.5)
                logger.warning("completion attempt %d/%d failed (%s); retrying in %.2fs",
                               attempt, attempts, last_error, delay)
                self._sleep(delay)
        assert last_error is not None
        raise last_error

    @staticmethod
    def _extract(response: httpx.Response) -> str:
        try:
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as e:
            raise CompletionError(f"malformed response envelope: {e}") from e

    def close(self):
        self._client.close()


class CannedCompletionBackend:
    """Deterministic mock: a map from prompt hash to canned response text."""

    def __init__(self, responses: dict[str, str]):
        self.responses = responses

    @classmethod
    def from_file(cls, path: str) -> CannedCompletionBackend:
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @staticmethod
    def prompt_key(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def complete(self, prompt: str, context: TurnContext | None = None) -> str:
        key = self.prompt_key(prompt)
        if key not in self.responses:
            raise CompletionError(f"no canned response for prompt hash {key[:12]}")
        return self.responses[key]


class TrackerMockBackend:
    """Mock completion backend that answers like a perfect model would:
    it applies the rule tracker to the turn context and serializes the
    resulting structured output."""

    def complete(self, prompt: str, context: TurnContext | None = None) -> str:
        if context is None:
            raise CompletionError("tracker mock needs a turn context")
        state, action = tracker.update(
            copy.deepcopy(context.state), context.nlu, context.verdict,
            context.ontology)
        result = action.result or tracker.emit_result(state, context.ontology)
        return dst_result_to_json(result)


# ---------------------------------------------------------------------------
# Online answer agent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentAnswer:
    text: str
    sources: tuple[str, ...] = ()


class Retriever(Protocol):
    def retrieve(self, intent: str, constraints: dict[str, str]) -> list[dict]: ...


class FixtureRetriever:
    """File-backed retriever: rows per intent, filtered by constraints."""

    def __init__(self, rows_by_intent: dict[str, list[dict]]):
        self.rows_by_intent = rows_by_intent

    @classmethod
    def from_file(cls, path: str) -> FixtureRetriever:
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def retrieve(self, intent: str, constraints: dict[str, str]) -> list[dict]:
        rows = self.rows_by_intent.get(intent, [])
        return [
            row for row in rows
            if all(str(row.get(k)) == v for k, v in constraints.items())
        ]


def retrieval_key(intent: str, constraints: dict[str, str]) -> str:
    query = "&".join(f"{k}={v}" for k, v in sorted(constraints.items()))
    return f"{intent}?{query}" if query else intent


def generate_answer(
    result: DstResult,
    retriever: Retriever,
    completion: CompletionBackend | None = None,
) -> AgentAnswer:
    """Answer a completed request from retrieved rows.

    With no completion backend the answer comes from a fixed template; with
    one, a second completion call is made with the rows inlined.
    """
    if result.dialogue_status != "complete":
        raise AnswerError("answer generation needs a complete result")
    constraints = {k: v for k, v in result.state.items() if v != ANY_VALUE}
    try:
        rows = retriever.retrieve(result.intent, constraints)
    except Exception as e:
        raise AnswerError(f"retrieval failed: {e}") from e
    key = retrieval_key(result.intent, constraints)

    if completion is not None:
        prompt = (
            f"User request: {result.intent} with {json.dumps(constraints, ensure_ascii=False)}.\n"
            f"Retrieved rows: {json.dumps(rows, ensure_ascii=False)}.\n"
            "Write one short, helpful answer using only the retrieved rows."
        )
        return AgentAnswer(text=completion.complete(prompt), sources=(key,))

    about = ", ".join(f"{k}={v}" for k, v in constraints.items()) or "your request"
    if not rows:
        return AgentAnswer(
            text=f"I could not find any data for {result.intent} ({about}).",
            sources=(key,),
        )
    summaries = ["; ".join(f"{k}: {v}" for k, v in row.items()) for row in rows]
    return AgentAnswer(
        text=f"Here is what I found for {result.intent} ({about}): "
             + " | ".join(summaries),
        sources=(key,),
    )
