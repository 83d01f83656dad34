"""Dialogue state tracking core.

State is advanced one user turn at a time by :func:`update`, which applies a
fixed rule order: pause on unclear/ambiguous verdicts, adopt or shift the
active intent, merge extracted slots (latest turn wins), resolve don't-care
fills to deterministic defaults, then either ask the next follow-up question
or emit the completed result with its SQL query.

Every mutation appends a :class:`StateRecord` to the append-only history, and
:func:`replay` folds a record log back into the exact same state, which is
what session persistence and crash recovery build on.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

from .nlu import NluOutput
from .ontology import Ontology, missing_mandatory, pick_followup_question
from .querygen import SqlQuery, build_query
from .validator import ValidationVerdict

SOURCE_EXTRACTED = "extracted"
SOURCE_DONT_CARE = "dont_care_default"
SOURCE_CARRIED = "carried_over"

PENDING_NONE = "none"
PENDING_UNCLEAR = "awaiting_clarification_unclear"
PENDING_AMBIGUOUS = "awaiting_clarification_ambiguous"

# StateRecord kinds
REC_TURN = "turn"
REC_PENDING_SET = "pending_set"
REC_PENDING_CLEARED = "pending_cleared"
REC_INTENT_ADOPTED = "intent_adopted"
REC_INTENT_SHIFT = "intent_shift"
REC_SLOT_FILLED = "slot_filled"
REC_SLOT_CARRIED = "slot_carried"
REC_SLOT_DONT_CARE = "slot_dont_care"

CLARIFY_UNCLEAR_TEMPLATE = (
    "Sorry, I did not catch that. Could you rephrase what you need?"
)
CLARIFY_INTENT_TEMPLATE = "Just to be sure: do you want {first} or {second}?"


class TrackerError(Exception):
    pass


@dataclass(frozen=True)
class SlotFill:
    value: str
    source: str
    turn_no: int


@dataclass(frozen=True)
class StateRecord:
    turn_no: int
    kind: str
    intent: str | None = None
    slot: str | None = None
    value: str | None = None

    def to_dict(self) -> dict:
        return {"turn_no": self.turn_no, "kind": self.kind, "intent": self.intent,
                "slot": self.slot, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> StateRecord:
        return cls(turn_no=d["turn_no"], kind=d["kind"], intent=d.get("intent"),
                   slot=d.get("slot"), value=d.get("value"))


@dataclass(frozen=True)
class DstResult:
    intent: str
    state: dict[str, str]
    query: SqlQuery
    followup: str | None
    dialogue_status: str  # in_progress | complete

    def to_dict(self) -> dict:
        return {
            "dialogue_status": self.dialogue_status,
            "intent": self.intent,
            "state": dict(self.state),
            "sql": self.query.to_dict(),
            "followup": self.followup,
        }


@dataclass(frozen=True)
class TrackerAction:
    kind: str  # ask_followup | ask_clarify_intent | ask_clarify_unclear | complete
    question: str | None = None
    result: DstResult | None = None


@dataclass
class DialogueState:
    session_id: str
    active_intent: str | None = None
    fills: dict[str, SlotFill] = field(default_factory=dict)
    history: list[StateRecord] = field(default_factory=list)
    pending: str = PENDING_NONE
    turn_no: int = 0
    rng_seed: int = 0


def new_session(ontology: Ontology, seed: int, session_id: str | None = None) -> DialogueState:
    return DialogueState(
        session_id=session_id if session_id is not None else uuid.uuid4().hex,
        rng_seed=seed,
    )


def detect_intent_shift(state: DialogueState, nlu: NluOutput) -> bool:
    """True when both NLU runs agree on a new intent different from the
    active one; the context run anchoring suppresses one-turn noise."""
    if state.active_intent is None:
        raise TrackerError("no active intent")
    return (
        nlu.turn_local_intent != state.active_intent
        and nlu.context_intent != state.active_intent
        and nlu.turn_local_intent == nlu.context_intent
    )


def update(
    state: DialogueState,
    nlu: NluOutput,
    verdict: ValidationVerdict,
    ontology: Ontology,
) -> tuple[DialogueState, TrackerAction]:
    """Advance the state by one user turn; returns (new state, action)."""
    t = state.turn_no + 1
    new = DialogueState(
        session_id=state.session_id,
        active_intent=state.active_intent,
        fills=dict(state.fills),
        history=list(state.history),
        pending=state.pending,
        turn_no=t,
        rng_seed=state.rng_seed,
    )

    def rec(kind, intent=None, slot=None, value=None):
        new.history.append(StateRecord(turn_no=t, kind=kind, intent=intent,
                                       slot=slot, value=value))

    rec(REC_TURN, intent=verdict.chosen_intent)

    if verdict.label == "unclear":
        new.pending = PENDING_UNCLEAR
        rec(REC_PENDING_SET, value="unclear")
        return new, TrackerAction(kind="ask_clarify_unclear",
                                  question=CLARIFY_UNCLEAR_TEMPLATE)

    if verdict.label == "ambiguous":
        new.pending = PENDING_AMBIGUOUS
        rec(REC_PENDING_SET, value="ambiguous")
        first, second = _top_two(nlu)
        question = CLARIFY_INTENT_TEMPLATE.format(first=first, second=second)
        return new, TrackerAction(kind="ask_clarify_intent", question=question)

    # confirmed
    chosen = verdict.chosen_intent
    if chosen is None or chosen not in ontology.intents:
        raise TrackerError(f"confirmed verdict carries unknown intent {chosen!r}")
    if chosen != _argmax_intent(nlu, ontology):
        raise TrackerError("verdict/nlu mismatch: chosen intent is not the score argmax")

    if new.pending != PENDING_NONE:
        new.pending = PENDING_NONE
        rec(REC_PENDING_CLEARED)

    if new.active_intent is None:
        new.active_intent = chosen
        rec(REC_INTENT_ADOPTED, intent=chosen)
    elif detect_intent_shift(state, nlu):
        target = ontology.intent(nlu.context_intent)
        # Shifts land only on normal intents; the special don't-care and
        # out-of-domain pseudo-intents never become the dialogue goal.
        if target.is_special == "normal":
            carried = {
                slot.id: new.fills[slot.id]
                for slot in target.slots
                if slot.id in new.fills
            }
            new.active_intent = target.id
            new.fills = {}
            rec(REC_INTENT_SHIFT, intent=target.id)
            for slot_id, fill in carried.items():
                new.fills[slot_id] = SlotFill(value=fill.value, source=SOURCE_CARRIED,
                                              turn_no=t)
                rec(REC_SLOT_CARRIED, intent=target.id, slot=slot_id, value=fill.value)

    schema = ontology.intent(new.active_intent)
    known = set(schema.slot_ids())

    for slot in schema.slots:
        if slot.id in nlu.slots:
            value = nlu.slots[slot.id]
            new.fills[slot.id] = SlotFill(value=value, source=SOURCE_EXTRACTED, turn_no=t)
            rec(REC_SLOT_FILLED, intent=new.active_intent, slot=slot.id, value=value)

    for slot in schema.slots:
        if slot.id in nlu.dont_care_slots and slot.id in known:
            value = slot.default_value
            new.fills[slot.id] = SlotFill(value=value, source=SOURCE_DONT_CARE, turn_no=t)
            rec(REC_SLOT_DONT_CARE, intent=new.active_intent, slot=slot.id, value=value)

    missing = missing_mandatory(schema, set(new.fills))
    if missing:
        question = pick_followup_question(
            ontology, new.active_intent, missing[0], seed=new.rng_seed + t)
        return new, TrackerAction(kind="ask_followup", question=question)

    return new, TrackerAction(kind="complete", result=emit_result(new, ontology))


def emit_result(state: DialogueState, ontology: Ontology) -> DstResult:
    """Snapshot the current state as the structured tracker output."""
    if state.active_intent is None:
        raise TrackerError("no active intent")
    schema = ontology.intent(state.active_intent)
    state_map = {
        slot.id: state.fills[slot.id].value
        for slot in schema.slots
        if slot.id in state.fills
    }
    query = build_query(schema, state_map)
    missing = missing_mandatory(schema, set(state_map))
    if missing:
        followup = pick_followup_question(
            ontology, state.active_intent, missing[0], seed=state.rng_seed + state.turn_no)
        status = "in_progress"
    else:
        followup = None
        status = "complete"
    return DstResult(
        intent=state.active_intent,
        state=state_map,
        query=query,
        followup=followup,
        dialogue_status=status,
    )


def pending_followup_slot(state: DialogueState, ontology: Ontology) -> str | None:
    """The slot the tracker would ask about next (don't-care binding target)."""
    if state.active_intent is None or state.pending != PENDING_NONE:
        return None
    schema = ontology.intent(state.active_intent)
    missing = missing_mandatory(schema, set(state.fills))
    return missing[0] if missing else None


def replay(
    ontology: Ontology,
    seed: int,
    session_id: str,
    records: list[StateRecord],
) -> DialogueState:
    """Fold a record log into the state it produced (event sourcing)."""
    state = new_session(ontology, seed, session_id=session_id)
    for r in records:
        state.turn_no = max(state.turn_no, r.turn_no)
        if r.kind == REC_TURN:
            pass
        elif r.kind == REC_PENDING_SET:
            state.pending = (PENDING_UNCLEAR if r.value == "unclear"
                             else PENDING_AMBIGUOUS)
        elif r.kind == REC_PENDING_CLEARED:
            state.pending = PENDING_NONE
        elif r.kind == REC_INTENT_ADOPTED:
            state.active_intent = r.intent
        elif r.kind == REC_INTENT_SHIFT:
            state.active_intent = r.intent
            state.fills = {}
        elif r.kind == REC_SLOT_FILLED:
            state.fills[r.slot] = SlotFill(r.value, SOURCE_EXTRACTED, r.turn_no)
        elif r.kind == REC_SLOT_CARRIED:
            state.fills[r.slot] = SlotFill(r.value, SOURCE_CARRIED, r.turn_no)
        elif r.kind == REC_SLOT_DONT_CARE:
            state.fills[r.slot] = SlotFill(r.value, SOURCE_DONT_CARE, r.turn_no)
        else:
            raise TrackerError(f"unknown record kind {r.kind!r}")
        state.history.append(r)
    return state


def dont_care_slots(state: DialogueState) -> frozenset[str]:
    """Slots whose current value came from a don't-care resolution."""
    return frozenset(
        slot_id for slot_id, fill in state.fills.items()
        if fill.source == SOURCE_DONT_CARE
    )


def state_view(state: DialogueState, ontology: Ontology | None = None) -> dict:
    """JSON-friendly view of the state including fill provenance."""
    view = {
        "session_id": state.session_id,
        "active_intent": state.active_intent,
        "pending": state.pending,
        "turn_no": state.turn_no,
        "fills": {
            slot_id: {"value": f.value, "source": f.source, "turn_no": f.turn_no}
            for slot_id, f in state.fills.items()
        },
        "history": [r.to_dict() for r in state.history],
    }
    if ontology is not None and state.active_intent is not None:
        schema = ontology.intent(state.active_intent)
        view["missing_mandatory"] = missing_mandatory(schema, set(state.fills))
    else:
        view["missing_mandatory"] = []
    return view


def _top_two(nlu: NluOutput) -> tuple[str, str]:
    ranked = sorted(nlu.scores.items(), key=lambda kv: (-kv[1], kv[0]))
    first = ranked[0][0]
    second = ranked[1][0] if len(ranked) > 1 else first
    return first, second


def _argmax_intent(nlu: NluOutput, ontology: Ontology) -> str:
    best_id, best = None, -1.0
    for intent_id in ontology.intent_ids():
        v = nlu.scores.get(intent_id, 0.0)
        if v > best:
            best_id, best = intent_id, v
    return best_id
