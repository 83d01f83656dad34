"""Domain/intent/slot ontology and the follow-up question bank.

The ontology is a single JSON document (see ``parse_ontology``) declaring
domains, intents with up to four slots each, and a bank of follow-up
questions keyed by (intent, slot). Parsed ontologies are immutable and can
be shared freely across threads.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

SPECIAL_KINDS = ("normal", "dont_care", "out_of_domain")


class OntologyError(Exception):
    """Base error for ontology parsing and lookups."""


class OntologySyntaxError(OntologyError):
    """The document is not well-formed JSON (position reported)."""


class OntologySemanticError(OntologyError):
    """The document parses but violates an ontology invariant."""


@dataclass(frozen=True)
class SlotDef:
    """One slot of an intent.

    ``value_list`` empty means free-text; otherwise values are the canonical
    forms and ``default_index`` names the don't-care default.
    """

    id: str
    name: str
    mandatory: bool
    value_list: tuple[str, ...] = ()
    default_index: int = 0

    @property
    def default_value(self) -> str:
        return self.value_list[self.default_index] if self.value_list else "*"


@dataclass(frozen=True)
class IntentSchema:
    id: str
    domain: str
    slots: tuple[SlotDef, ...] = ()
    is_special: str = "normal"

    def slot_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.slots)

    def slot(self, slot_id: str) -> SlotDef:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise OntologyError(f"intent {self.id!r} has no slot {slot_id!r}")

    def mandatory_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.slots if s.mandatory)


@dataclass(frozen=True)
class Ontology:
    domains: tuple[str, ...]
    intents: dict[str, IntentSchema] = field(default_factory=dict)
    questions: dict[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)

    @property
    def dont_care_intent(self) -> str:
        for schema in self.intents.values():
            if schema.is_special == "dont_care":
                return schema.id
        raise OntologyError("ontology has no dont_care intent")

    def intent(self, intent_id: str) -> IntentSchema:
        try:
            return self.intents[intent_id]
        except KeyError:
            raise OntologyError(f"unknown intent {intent_id!r}") from None

    def intent_ids(self) -> tuple[str, ...]:
        return tuple(self.intents)


def parse_ontology(text: str) -> Ontology:
    """Parse and fully validate an ontology document.

    Raises OntologySyntaxError for malformed JSON (with line/column) and
    OntologySemanticError naming the offending element for invariant
    violations.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise OntologySyntaxError(
            f"line {e.lineno} column {e.colno}: {e.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise OntologySemanticError("top level must be an object")

    domains = _string_list(doc.get("domains"), "domains")
    if len(set(domains)) != len(domains):
        raise OntologySemanticError("duplicate domain id")

    intents: dict[str, IntentSchema] = {}
    for raw in _object_list(doc.get("intents"), "intents"):
        schema = _parse_intent(raw)
        if schema.id in intents:
            raise OntologySemanticError(f"duplicate intent id {schema.id!r}")
        if schema.domain not in domains:
            raise OntologySemanticError(
                f"intent {schema.id!r} references unknown domain {schema.domain!r}"
            )
        intents[schema.id] = schema

    dont_care = [i for i in intents.values() if i.is_special == "dont_care"]
    if len(dont_care) == 0:
        raise OntologySemanticError("missing dont_care intent")
    if len(dont_care) > 1:
        ids = ", ".join(sorted(i.id for i in dont_care))
        raise OntologySemanticError(f"multiple dont_care intents: {ids}")

    questions: dict[tuple[str, str], tuple[str, ...]] = {}
    for raw in _object_list(doc.get("questions", []), "questions"):
        intent_id = _require_str(raw, "intent", "questions entry")
        slot_id = _require_str(raw, "slot", "questions entry")
        texts = _string_list(raw.get("texts"), f"questions for ({intent_id}, {slot_id})")
        if not texts:
            raise OntologySemanticError(
                f"empty question list for ({intent_id}, {slot_id})"
            )
        if intent_id not in intents:
            raise OntologySemanticError(
                f"question bound to unknown intent {intent_id!r}"
            )
        schema = intents[intent_id]
        if slot_id not in schema.slot_ids():
            raise OntologySemanticError(
                f"question bound to unknown slot {slot_id!r} of intent {intent_id!r}"
            )
        if not schema.slot(slot_id).mandatory:
            raise OntologySemanticError(
                f"question bound to non-mandatory slot {slot_id!r} of intent {intent_id!r}"
            )
        key = (intent_id, slot_id)
        if key in questions:
            raise OntologySemanticError(f"duplicate question key ({intent_id}, {slot_id})")
        questions[key] = tuple(texts)

    for schema in intents.values():
        if schema.is_special != "normal":
            continue
        for slot_id in schema.mandatory_ids():
            if (schema.id, slot_id) not in questions:
                raise OntologySemanticError(
                    f"mandatory slot {slot_id!r} of intent {schema.id!r} has no questions"
                )

    return Ontology(domains=tuple(domains), intents=intents, questions=questions)


def _parse_intent(raw: dict) -> IntentSchema:
    intent_id = _require_str(raw, "id", "intent")
    domain = _require_str(raw, "domain", f"intent {intent_id!r}")
    special = raw.get("special", "normal")
    if special not in SPECIAL_KINDS:
        raise OntologySemanticError(
            f"intent {intent_id!r}: special must be one of {SPECIAL_KINDS}, got {special!r}"
        )

    slots = []
    seen: set[str] = set()
    for raw_slot in _object_list(raw.get("slots", []), f"slots of {intent_id!r}"):
        slot = _parse_slot(raw_slot, intent_id)
        if slot.id in seen:
            raise OntologySemanticError(
                f"duplicate slot id {slot.id!r} in intent {intent_id!r}"
            )
        seen.add(slot.id)
        slots.append(slot)

    if special != "normal" and slots:
        raise OntologySemanticError(
            f"special intent {intent_id!r} must have zero slots"
        )
    if len(slots) > 4:
        raise OntologySemanticError(
            f"intent {intent_id!r}: slot count exceeds 4"
        )
    return IntentSchema(id=intent_id, domain=domain, slots=tuple(slots), is_special=special)


def _parse_slot(raw: dict, intent_id: str) -> SlotDef:
    slot_id = _require_str(raw, "id", f"slot of intent {intent_id!r}")
    name = _require_str(raw, "name", f"slot {slot_id!r}")
    mandatory = raw.get("mandatory", False)
    if not isinstance(mandatory, bool):
        raise OntologySemanticError(f"slot {slot_id!r}: mandatory must be boolean")
    values = _string_list(raw.get("values", []), f"values of slot {slot_id!r}")
    if len(set(values)) != len(values):
        raise OntologySemanticError(f"slot {slot_id!r}: duplicate values")
    default_index = raw.get("default_index", 0)
    if not isinstance(default_index, int) or isinstance(default_index, bool):
        raise OntologySemanticError(f"slot {slot_id!r}: default_index must be an integer")
    if values and not 0 <= default_index < len(values):
        raise OntologySemanticError(
            f"slot {slot_id!r}: default_index {default_index} out of range"
        )
    return SlotDef(
        id=slot_id,
        name=name,
        mandatory=mandatory,
        value_list=tuple(values),
        default_index=default_index if values else 0,
    )


def serialize_ontology(ontology: Ontology) -> str:
    """Inverse of parse_ontology; UTF-8 text survives byte-exact."""
    doc = {
        "domains": list(ontology.domains),
        "intents": [
            {
                "id": s.id,
                "domain": s.domain,
                "special": s.is_special,
                "slots": [
                    {
                        "id": slot.id,
                        "name": slot.name,
                        "mandatory": slot.mandatory,
                        "values": list(slot.value_list),
                        "default_index": slot.default_index,
                    }
                    for slot in s.slots
                ],
            }
            for s in ontology.intents.values()
        ],
        "questions": [
            {"intent": intent_id, "slot": slot_id, "texts": list(texts)}
            for (intent_id, slot_id), texts in ontology.questions.items()
        ],
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)


def missing_mandatory(schema: IntentSchema, filled: set[str]) -> list[str]:
    """Mandatory slot ids not yet filled, in declaration order."""
    known = set(schema.slot_ids())
    unknown = filled - known
    if unknown:
        raise OntologyError(
            f"unknown slot id {sorted(unknown)[0]!r} for intent {schema.id!r}"
        )
    return [s.id for s in schema.slots if s.mandatory and s.id not in filled]


def pick_followup_question(
    ontology: Ontology, intent_id: str, slot_id: str, seed: int
) -> str:
    """Pick one banked question; a pure function of (seed, list length)."""
    key = (intent_id, slot_id)
    if key not in ontology.questions:
        raise OntologyError(f"no questions for ({intent_id}, {slot_id})")
    texts = ontology.questions[key]
    return texts[random.Random(seed).randrange(len(texts))]


def _require_str(raw: dict, key: str, where: str) -> str:
    value = raw.get(key)
    if not isinstance(value, str) or not value:
        raise OntologySemanticError(f"{where}: missing or invalid {key!r}")
    return value


def _string_list(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise OntologySemanticError(f"{where}: expected an array of strings")
    return value


def _object_list(value, where: str) -> list[dict]:
    if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
        raise OntologySemanticError(f"{where}: expected an array of objects")
    return value
