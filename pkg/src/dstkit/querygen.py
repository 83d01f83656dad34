"""Parameterized SQL generation from an intent schema and its filled slots.

Queries use positional ``?`` placeholders only; user values never enter the
query text, so the output is safe against injection by construction. Slots
filled with the ``"*"`` sentinel (don't-care on a free-text slot) are left
unconstrained.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ontology import IntentSchema

ANY_VALUE = "*"

_IDENT_RE = re.compile(r"[^a-z0-9_]")


class QueryError(Exception):
    pass


@dataclass(frozen=True)
class SqlQuery:
    text: str
    params: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"text": self.text, "params": list(self.params)}


def sanitize_identifier(raw: str) -> str:
    """Lowercase and squash anything outside [a-z0-9_] to underscores."""
    return _IDENT_RE.sub("_", raw.lower())


def build_query(
    schema: IntentSchema, fills: dict[str, str], mandatory_only: bool = False
) -> SqlQuery:
    """SELECT over the intent's table with one equality clause per filled slot.

    Clauses follow schema declaration order regardless of the fills map's
    iteration order; ``mandatory_only`` drops constraints on optional slots.
    """
    known = set(schema.slot_ids())
    for slot_id in fills:
        if slot_id not in known:
            raise QueryError(f"unknown slot id {slot_id!r} for intent {schema.id!r}")

    clauses: list[str] = []
    params: list[str] = []
    for slot in schema.slots:
        if slot.id not in fills:
            continue
        if mandatory_only and not slot.mandatory:
            continue
        value = fills[slot.id]
        if value == ANY_VALUE:
            continue
        clauses.append(f"{sanitize_identifier(slot.id)} = ?")
        params.append(value)

    text = f"SELECT * FROM {sanitize_identifier(schema.id)}"
    if clauses:
        text += " WHERE " + " AND ".join(clauses)
    return SqlQuery(text=text, params=tuple(params))
