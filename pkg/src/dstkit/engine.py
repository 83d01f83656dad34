"""Pipeline orchestration: schedule -> NLU -> validation -> tracking -> reply.

An Engine wires one ontology to an NLU backend, a validator mode, a tracker
mode (pure rules, or LLM-backed through the prompt library and a completion
backend), and the answer agent. Sessions advance one user turn per
:meth:`Engine.step`; every turn is persisted to the session store before the
call returns, and :meth:`Engine.load_session` rebuilds a session from its
log alone.

In LLM tracker mode the engine still advances its own rule state (it needs
the schedule annotations and pending bookkeeping either way); the rendered
prompt and parsed model output form the turn's reported result, with the
question bank overriding the model's follow-up proposal on conflict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from . import llm_bridge, tracker
from .corpus import Turn
from .llm_bridge import (
    CompletionBackend,
    FixtureRetriever,
    PromptTemplate,
    Retriever,
    TurnContext,
    dst_result_to_json,
)
from .nlu import BackendResult, NluBackend, NluOutput, build_schedule, predict
from .ontology import Ontology
from .tracker import DialogueState, DstResult, StateRecord, TrackerAction
from .validator import (
    FeatureTrace,
    GbtModel,
    RuleThresholds,
    ValidationVerdict,
    classify_rule,
    predict_gbt,
    update_feature_trace,
)


class EngineError(Exception):
    pass


@dataclass
class SessionRuntime:
    state: DialogueState
    lines: list[tuple[str, str | None]] = field(default_factory=list)
    trace: FeatureTrace | None = None
    transcript: list[dict] = field(default_factory=list)
    created_at: float = 0.0
    last_active: float = 0.0

    @property
    def session_id(self) -> str:
        return self.state.session_id


@dataclass(frozen=True)
class TurnOutcome:
    action: TrackerAction
    verdict: ValidationVerdict
    nlu: NluOutput
    result: DstResult | None
    reply: str

    @property
    def result_json(self) -> str | None:
        return dst_result_to_json(self.result) if self.result else None


class GoldEchoBackend:
    """Oracle NLU: echoes the gold annotations of the turn under evaluation.

    The evaluation loop points it at each gold turn before stepping the
    engine; both the single-utterance and scheduled runs then return the
    same one-hot distribution, this turn's extracted slots, and the newly
    don't-cared slots (the delta against the previous turn's cumulative
    annotation).
    """

    def __init__(self):
        self._turn: Turn | None = None
        self._prev: Turn | None = None

    def set_turn(self, turn: Turn, prev: Turn | None) -> None:
        self._turn, self._prev = turn, prev

    def run(self, ontology: Ontology, schedule) -> BackendResult:
        turn = self._turn
        if turn is None:
            raise EngineError("gold echo backend has no turn set")
        if turn.gold_intent is None:
            n = len(ontology.intent_ids())
            return BackendResult(scores={i: 1.0 / n for i in ontology.intent_ids()},
                                 slots={}, dont_care_slots=frozenset())
        scores = {i: 0.0 for i in ontology.intent_ids()}
        scores[turn.gold_intent] = 1.0
        prev_dc = self._prev.gold_dont_care if self._prev else frozenset()
        return BackendResult(
            scores=scores,
            slots=dict(turn.gold_slots),
            dont_care_slots=turn.gold_dont_care - prev_dc,
        )


class Engine:
    def __init__(
        self,
        ontology: Ontology,
        nlu_backend: NluBackend,
        *,
        validator_mode: str = "rule",
        thresholds: RuleThresholds = RuleThresholds(),
        gbt_model: GbtModel | None = None,
        tracker_mode: str = "rule",
        prompt_library: list[PromptTemplate] | None = None,
        completion: CompletionBackend | None = None,
        retriever: Retriever | None = None,
        answer_completion: CompletionBackend | None = None,
        store=None,
        seed: int = 0,
    ):
        if validator_mode not in ("rule", "gbt"):
            raise EngineError(f"unknown validator mode {validator_mode!r}")
        if validator_mode == "gbt" and gbt_model is None:
            raise EngineError("gbt validator mode needs a model")
        if tracker_mode not in ("rule", "llm"):
            raise EngineError(f"unknown tracker mode {tracker_mode!r}")
        if tracker_mode == "llm" and (prompt_library is None or completion is None):
            raise EngineError("llm tracker mode needs a prompt library and a backend")
        self.ontology = ontology
        self.nlu_backend = nlu_backend
        self.validator_mode = validator_mode
        self.thresholds = thresholds
        self.gbt_model = gbt_model
        self.tracker_mode = tracker_mode
        self.prompt_library = prompt_library
        self.completion = completion
        self.retriever = retriever if retriever is not None else FixtureRetriever({})
        self.answer_completion = answer_completion
        self.store = store
        self.seed = seed

    # -- sessions ----------------------------------------------------------

    def create_session(self, session_id: str | None = None) -> SessionRuntime:
        state = tracker.new_session(self.ontology, self.seed, session_id=session_id)
        now = time.time()
        rt = SessionRuntime(state=state, created_at=now, last_active=now)
        if self.store is not None:
            self.store.append(state.session_id, {
                "event": "created",
                "session_id": state.session_id,
                "seed": self.seed,
                "created_at": now,
            })
        return rt

    def load_session(self, session_id: str) -> SessionRuntime:
        if self.store is None:
            raise EngineError("engine has no session store")
        events = self.store.read(session_id)
        if not events:
            raise KeyError(session_id)
        if events[0].get("event") != "created":
            raise EngineError(f"corrupt session log for {session_id}")
        seed = events[0]["seed"]
        created_at = events[0]["created_at"]

        records: list[StateRecord] = []
        lines: list[tuple[str, str | None]] = []
        trace: FeatureTrace | None = None
        transcript: list[dict] = []
        last_active = created_at
        for event in events[1:]:
            if event.get("event") != "user_turn":
                continue
            records.extend(StateRecord.from_dict(r) for r in event["records"])
            lines.append((event["text"], event["resolved_intent"]))
            trace = FeatureTrace(smoothed=event["smoothed"], max_top1=event["max_top1"])
            transcript.append({"speaker": "user", "text": event["text"]})
            transcript.append({"speaker": "system", "text": event["reply"]})
            last_active = event.get("at", last_active)

        state = tracker.replay(self.ontology, seed, session_id, records)
        return SessionRuntime(
            state=state,
            lines=lines,
            trace=trace,
            transcript=transcript,
            created_at=created_at,
            last_active=last_active,
        )

    # -- one user turn -----------------------------------------------------

    def step(self, rt: SessionRuntime, text: str) -> TurnOutcome:
        schedule = build_schedule(rt.lines, text)
        pending_slot = tracker.pending_followup_slot(rt.state, self.ontology)
        nlu_out = predict(self.nlu_backend, self.ontology, schedule,
                          pending_slot=pending_slot)

        features, rt.trace = update_feature_trace(rt.trace, nlu_out)
        if self.validator_mode == "gbt":
            verdict = predict_gbt(self.gbt_model, features,
                                  chosen_intent=nlu_out.context_intent)
        else:
            verdict = classify_rule(features, self.thresholds,
                                    chosen_intent=nlu_out.context_intent)

        parsed: DstResult | None = None
        if self.tracker_mode == "llm" and verdict.label == "confirmed":
            template = llm_bridge.select_prompt(self.prompt_library,
                                                nlu_out.context_intent)
            prompt = llm_bridge.render_prompt(
                template, schedule, rt.state,
                self.ontology.intent(nlu_out.context_intent))
            raw = self.completion.complete(prompt, context=TurnContext(
                state=rt.state, nlu=nlu_out, verdict=verdict,
                ontology=self.ontology))
            parsed = llm_bridge.parse_structured_output(raw)

        old_len = len(rt.state.history)
        new_state, action = tracker.update(rt.state, nlu_out, verdict, self.ontology)
        rt.state = new_state
        new_records = new_state.history[old_len:]

        result = self._turn_result(new_state, action, parsed)
        reply = self._reply(action, result)

        # The schedule annotation is the intent the turn actually resolved
        # to, i.e. the active intent after adoption/shift handling; on the
        # rare anchored disagreement (context argmax != active, no shift)
        # that is the retained active intent, not the raw argmax.
        resolved = new_state.active_intent if verdict.label == "confirmed" else None
        rt.lines.append((text, resolved))
        rt.transcript.append({"speaker": "user", "text": text})
        rt.transcript.append({"speaker": "system", "text": reply})
        rt.last_active = time.time()

        if self.store is not None:
            self.store.append(rt.session_id, {
                "event": "user_turn",
                "turn_no": rt.state.turn_no,
                "text": text,
                "resolved_intent": resolved,
                "top1": nlu_out.top1,
                "smoothed": rt.trace.smoothed,
                "max_top1": rt.trace.max_top1,
                "verdict": verdict.label,
                "action": action.kind,
                "question": action.question,
                "reply": reply,
                "at": rt.last_active,
                "records": [r.to_dict() for r in new_records],
            })

        return TurnOutcome(action=action, verdict=verdict, nlu=nlu_out,
                           result=result, reply=reply)

    def _turn_result(self, state: DialogueState, action: TrackerAction,
                     parsed: DstResult | None) -> DstResult | None:
        if parsed is not None:
            # Bank-authored questions win over model proposals, and the
            # status/followup pair must stay consistent with the tracker.
            if action.kind == "ask_followup":
                return replace(parsed, followup=action.question,
                               dialogue_status="in_progress")
            if action.kind == "complete":
                return replace(parsed, followup=None, dialogue_status="complete")
            return parsed
        if action.result is not None:
            return action.result
        if state.active_intent is not None:
            return tracker.emit_result(state, self.ontology)
        return None

    def _reply(self, action: TrackerAction, result: DstResult | None) -> str:
        if action.kind in ("ask_followup", "ask_clarify_intent", "ask_clarify_unclear"):
            assert action.question is not None
            return action.question
        assert result is not None
        answer = llm_bridge.generate_answer(result, self.retriever,
                                            completion=self.answer_completion)
        return answer.text
