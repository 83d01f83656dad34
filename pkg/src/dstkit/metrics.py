"""Evaluation suite: per-turn benchmark vectors, JGA/FGA/AGA, slot and intent
accuracy, F1 micro/macro, and k-fold pipeline evaluation.

All aggregates are computed with exact rational arithmetic and converted to
float once at the end, so results are reproducible bit-for-bit and agree
exactly with naive recomputation.

Benchmark semantics per turn: intent match; slot match (the predicted state
restricted to gold keys must equal the gold state); don't-care match (the
predicted don't-care-sourced slots equal the gold set); state match (the
conjunction of the three); plus an optional externally annotated human
judgment. JGA counts state matches, AGA averages the present components,
FGA counts turns with at least one present component true.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .corpus import Turn
from .querygen import ANY_VALUE
from .tracker import DstResult


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class BenchmarkVector:
    intent_ok: bool
    slots_ok: bool
    dont_care_ok: bool
    state_ok: bool
    human_ok: bool | None = None

    def components(self) -> tuple[bool, ...]:
        comps = [self.intent_ok, self.slots_ok, self.dont_care_ok, self.state_ok]
        if self.human_ok is not None:
            comps.append(self.human_ok)
        return tuple(comps)


@dataclass(frozen=True)
class MetricReport:
    jga: float
    jga_dialogue: float
    fga: float
    aga: float
    slot_accuracy: float
    intent_accuracy: float
    f1_micro: float
    f1_macro: float
    turns: int
    per_fold: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        return {
            "jga": self.jga,
            "jga_dialogue": self.jga_dialogue,
            "fga": self.fga,
            "aga": self.aga,
            "slot_accuracy": self.slot_accuracy,
            "intent_accuracy": self.intent_accuracy,
            "f1_micro": self.f1_micro,
            "f1_macro": self.f1_macro,
            "turns": self.turns,
            "per_fold": list(self.per_fold),
        }


def benchmark_vector(
    gold: Turn,
    pred: DstResult,
    pred_dont_care: frozenset[str] | set[str] | None = None,
    human_ok: bool | None = None,
) -> BenchmarkVector:
    """Score one predicted result against one annotated gold turn.

    ``pred_dont_care`` names the slots the pipeline filled via don't-care
    resolution; when unavailable it is derived from the "*" sentinel.
    """
    if not gold.annotated:
        raise MetricsError("gold turn carries no annotations")
    if pred_dont_care is None:
        pred_dont_care = {k for k, v in pred.state.items() if v == ANY_VALUE}

    intent_ok = pred.intent == gold.gold_intent
    slots_ok = all(
        slot_id in pred.state and pred.state[slot_id] == value
        for slot_id, value in gold.gold_state.items()
    )
    dont_care_ok = frozenset(pred_dont_care) == gold.gold_dont_care
    state_ok = intent_ok and slots_ok and dont_care_ok
    return BenchmarkVector(
        intent_ok=intent_ok,
        slots_ok=slots_ok,
        dont_care_ok=dont_care_ok,
        state_ok=state_ok,
        human_ok=human_ok,
    )


def jga(vectors: Sequence[BenchmarkVector]) -> Fraction:
    """Per-turn joint goal accuracy (the field-standard strict reading)."""
    _nonempty(vectors)
    return Fraction(sum(1 for v in vectors if v.state_ok), len(vectors))


def jga_dialogue(grouped: Sequence[Sequence[BenchmarkVector]]) -> Fraction:
    """Per-dialogue variant: a dialogue counts only if every turn is right."""
    _nonempty(grouped)
    good = sum(1 for vecs in grouped if all(v.state_ok for v in vecs))
    return Fraction(good, len(grouped))


def fga(vectors: Sequence[BenchmarkVector]) -> Fraction:
    """Turns with at least one present benchmark satisfied."""
    _nonempty(vectors)
    return Fraction(sum(1 for v in vectors if any(v.components())), len(vectors))


def aga(vectors: Sequence[BenchmarkVector]) -> Fraction:
    """Mean over turns of the mean of present benchmark components."""
    _nonempty(vectors)
    total = Fraction(0)
    for v in vectors:
        comps = v.components()
        total += Fraction(sum(comps), len(comps))
    return total / len(vectors)


def _nonempty(seq) -> None:
    if not seq:
        raise MetricsError("empty input")


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    f1_micro: float
    f1_macro: float
    per_class: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_micro": self.f1_micro,
            "f1_macro": self.f1_macro,
            "per_class": {k: dict(v) for k, v in self.per_class.items()},
        }


def classification_report(golds: Sequence[str], preds: Sequence[str]) -> ClassificationReport:
    """Accuracy, micro/macro F1, and per-class precision/recall/F1.

    Classes absent from both gold and pred are excluded from the macro
    average; a class with P + R = 0 scores F1 = 0.
    """
    if len(golds) != len(preds):
        raise MetricsError("gold/pred length mismatch")
    _nonempty(golds)

    labels = sorted(set(golds) | set(preds))
    correct = sum(1 for g, p in zip(golds, preds) if g == p)
    accuracy = Fraction(correct, len(golds))

    per_class: dict[str, dict[str, float]] = {}
    macro_sum = Fraction(0)
    micro_tp = micro_fp = micro_fn = 0
    for label in labels:
        tp = sum(1 for g, p in zip(golds, preds) if g == label and p == label)
        fp = sum(1 for g, p in zip(golds, preds) if g != label and p == label)
        fn = sum(1 for g, p in zip(golds, preds) if g == label and p != label)
        precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else Fraction(0))
        per_class[label] = {
            "precision": float(precision),
            "recall": float(recall),
            "f1": float(f1),
            "support": tp + fn,
        }
        macro_sum += f1
        micro_tp += tp
        micro_fp += fp
        micro_fn += fn

    denom = 2 * micro_tp + micro_fp + micro_fn
    f1_micro = Fraction(2 * micro_tp, denom) if denom else Fraction(0)
    f1_macro = macro_sum / len(labels) if labels else Fraction(0)
    return ClassificationReport(
        accuracy=float(accuracy),
        f1_micro=float(f1_micro),
        f1_macro=float(f1_macro),
        per_class=per_class,
    )


@dataclass(frozen=True)
class TurnScore:
    """One scored user turn, grouped per dialogue for the dialogue-level JGA."""
    dialogue_id: str
    vector: BenchmarkVector
    gold_intent: str
    pred_intent: str
    gold_state: dict[str, str]
    pred_state: dict[str, str]


def summarize(scores: Sequence[TurnScore]) -> dict:
    """Aggregate one batch of scored turns into a flat metric dict."""
    _nonempty(scores)
    vectors = [s.vector for s in scores]
    grouped: dict[str, list[BenchmarkVector]] = {}
    for s in scores:
        grouped.setdefault(s.dialogue_id, []).append(s.vector)

    slot_total = slot_good = 0
    for s in scores:
        for slot_id, value in s.gold_state.items():
            slot_total += 1
            if s.pred_state.get(slot_id) == value:
                slot_good += 1

    report = classification_report([s.gold_intent for s in scores],
                                   [s.pred_intent for s in scores])
    return {
        "jga": float(jga(vectors)),
        "jga_dialogue": float(jga_dialogue(list(grouped.values()))),
        "fga": float(fga(vectors)),
        "aga": float(aga(vectors)),
        "slot_accuracy": float(Fraction(slot_good, slot_total)) if slot_total else 1.0,
        "intent_accuracy": report.accuracy,
        "f1_micro": report.f1_micro,
        "f1_macro": report.f1_macro,
        "turns": len(scores),
    }


def mean_report(per_fold: Sequence[dict]) -> MetricReport:
    """Unweighted mean of per-fold metrics (cross-validation reporting)."""
    _nonempty(per_fold)
    keys = ("jga", "jga_dialogue", "fga", "aga", "slot_accuracy",
            "intent_accuracy", "f1_micro", "f1_macro")
    means = {}
    for key in keys:
        means[key] = float(sum(Fraction(f[key]) for f in per_fold) / len(per_fold))
    return MetricReport(
        **means,
        turns=sum(f["turns"] for f in per_fold),
        per_fold=tuple(dict(f) for f in per_fold),
    )
