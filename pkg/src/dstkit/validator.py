"""Three-way intent validation: confirmed / ambiguous / unclear.

Features are engineered from the NLU score distributions of the dialogue so
far: the top three scores, distribution entropy, an exponentially smoothed
top score across turns (alpha = 0.7), and the top score normalized by the
dialogue's running maximum. Those six plus all 21 degree-2 products fix the
feature vector at 27. The ``margin`` field (top1 - top2) is carried for the
threshold-rule mode but is a difference of two base features, so it stays
out of the vector.

Two classifier modes: a transparent threshold rule and a class-weighted
gradient-boosted tree ensemble (see :mod:`dstkit.gbt`) with per-class
decision-threshold offsets tuned for macro-F1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import gbt
from .gbt import GbtModel
from .nlu import NluOutput

CLASSES = ("confirmed", "ambiguous", "unclear")

SMOOTHING_ALPHA = 0.7

N_BASE_FEATURES = 6
N_FEATURES = 27

OFFSET_GRID_STEP = 0.01
OFFSET_GRID_LIMIT = 0.5


class ValidatorError(Exception):
    pass


@dataclass(frozen=True)
class ValidatorFeatures:
    top1: float
    top2: float
    top3: float
    margin: float
    entropy: float
    smoothed_max: float
    normalized_top1: float

    def base(self) -> tuple[float, ...]:
        return (self.top1, self.top2, self.top3, self.entropy,
                self.smoothed_max, self.normalized_top1)

    def vector(self) -> np.ndarray:
        b = self.base()
        interactions = [b[i] * b[j] for i in range(len(b)) for j in range(i, len(b))]
        return np.array(list(b) + interactions)


@dataclass(frozen=True)
class ValidationVerdict:
    label: str
    probabilities: dict[str, float]
    chosen_intent: str | None = None

    def with_intent(self, intent_id: str | None) -> ValidationVerdict:
        return ValidationVerdict(self.label, self.probabilities, intent_id)


@dataclass(frozen=True)
class RuleThresholds:
    tau_min: float = 0.5
    tau_margin: float = 0.2
    tau_high: float = 0.35


@dataclass(frozen=True)
class FeatureTrace:
    """Running smoothed/max top-score state, one per dialogue."""
    smoothed: float
    max_top1: float


def extract_features(outputs: Sequence[NluOutput]) -> ValidatorFeatures:
    """Features for the last turn given the dialogue's NLU outputs so far."""
    if not outputs:
        raise ValidatorError("empty output sequence")
    trace: FeatureTrace | None = None
    features = None
    for output in outputs:
        features, trace = update_feature_trace(trace, output)
    assert features is not None
    return features


def update_feature_trace(
    trace: FeatureTrace | None, output: NluOutput
) -> tuple[ValidatorFeatures, FeatureTrace]:
    """Incremental form of extract_features; equivalent on full replays."""
    ranked = sorted(output.scores.values(), reverse=True)
    ranked += [0.0] * (3 - len(ranked))
    top1, top2, top3 = ranked[0], ranked[1], ranked[2]
    entropy = -sum(p * math.log(p) for p in output.scores.values() if p > 0)

    if trace is None:
        smoothed = top1
        max_top1 = top1
    else:
        smoothed = SMOOTHING_ALPHA * top1 + (1 - SMOOTHING_ALPHA) * trace.smoothed
        max_top1 = max(trace.max_top1, top1)

    features = ValidatorFeatures(
        top1=top1,
        top2=top2,
        top3=top3,
        margin=top1 - top2,
        entropy=entropy,
        smoothed_max=smoothed,
        normalized_top1=top1 / max_top1 if max_top1 > 0 else 0.0,
    )
    return features, FeatureTrace(smoothed=smoothed, max_top1=max_top1)


def classify_rule(
    features: ValidatorFeatures,
    thresholds: RuleThresholds = RuleThresholds(),
    chosen_intent: str | None = None,
) -> ValidationVerdict:
    """Threshold rule: unclear below tau_min, ambiguous on a strong runner-up
    or a thin margin, confirmed otherwise. Probabilities are one-hot."""
    if features.top1 < thresholds.tau_min:
        label = "unclear"
    elif features.top2 >= thresholds.tau_high:
        label = "ambiguous"
    elif features.margin >= thresholds.tau_margin:
        label = "confirmed"
    else:
        label = "ambiguous"
    probabilities = {c: 1.0 if c == label else 0.0 for c in CLASSES}
    return ValidationVerdict(
        label=label,
        probabilities=probabilities,
        chosen_intent=chosen_intent if label == "confirmed" else None,
    )


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.3
    class_weights: tuple[float, float, float] | None = None
    seed: int = 0


LabeledExample = tuple[ValidatorFeatures, str]


def _as_matrix(dataset: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    if not dataset:
        raise ValidatorError("empty dataset")
    X = np.stack([f.vector() for f, _ in dataset])
    try:
        y = np.array([CLASSES.index(label) for _, label in dataset])
    except ValueError:
        raise ValidatorError(f"labels must be one of {CLASSES}") from None
    return X, y


def train_gbt(dataset: Sequence[LabeledExample], params: GbtParams = GbtParams()) -> GbtModel:
    X, y = _as_matrix(dataset)
    if not np.isfinite(X).all():
        raise ValidatorError("non-finite feature")
    try:
        return gbt.train(
            X, y,
            n_classes=len(CLASSES),
            n_trees=params.n_trees,
            max_depth=params.max_depth,
            learning_rate=params.learning_rate,
            class_weights=params.class_weights,
            seed=params.seed,
        )
    except gbt.GbtError as e:
        raise ValidatorError(str(e)) from e


def _max_feature_index(model: GbtModel) -> int:
    best = -1

    def walk(node: dict):
        nonlocal best
        if "leaf" in node:
            return
        best = max(best, node["feat"])
        walk(node["left"])
        walk(node["right"])

    for round_trees in model.trees:
        for tree in round_trees:
            walk(tree)
    return best


def predict_gbt(
    model: GbtModel,
    features: ValidatorFeatures,
    chosen_intent: str | None = None,
) -> ValidationVerdict:
    x = features.vector()
    if _max_feature_index(model) >= len(x):
        raise ValidatorError("feature dimension mismatch")
    probs = model.predict_proba(x)
    adjusted = probs + np.asarray(model.decision_thresholds)
    label = CLASSES[int(np.argmax(adjusted))]
    return ValidationVerdict(
        label=label,
        probabilities={c: float(p) for c, p in zip(CLASSES, probs)},
        chosen_intent=chosen_intent if label == "confirmed" else None,
    )


def tune_thresholds(
    model: GbtModel, dev: Sequence[LabeledExample]
) -> tuple[float, float, float]:
    """Per-class offsets maximizing macro-F1 on the dev set.

    The search space is the full grid of step 0.01 in [-0.5, 0.5] per class.
    Labelings depend only on offset differences, so the scan enumerates
    relative offsets and the winner is projected back to the absolute grid
    point closest to zero (minimal L1 norm, then lexicographic). Offsets are
    handled in integer centi-units so the grid is exact.
    """
    if not dev:
        raise ValidatorError("empty dev set")
    X, y = _as_matrix(dev)
    P = model.predict_proba(X)

    limit = int(round(OFFSET_GRID_LIMIT / OFFSET_GRID_STEP))  # 50
    rel_values = np.arange(-2 * limit, 2 * limit + 1)          # centi-units
    r1_grid, r2_grid = np.meshgrid(rel_values, rel_values, indexing="ij")
    r1_flat, r2_flat = r1_grid.ravel(), r2_grid.ravel()

    f1 = _macro_f1_for_relative(P, y, r1_flat, r2_flat)
    best = f1.max()
    winners = np.flatnonzero(f1 >= best - 1e-12)

    best_offsets: tuple[int, int, int] | None = None
    for w in winners:
        candidate = _project_to_grid(int(r1_flat[w]), int(r2_flat[w]), limit)
        if candidate is None:
            continue
        if best_offsets is None or _tie_key(candidate) < _tie_key(best_offsets):
            best_offsets = candidate
    assert best_offsets is not None

    # Guard against float ties between relative and absolute labelings: the
    # returned point must actually achieve the best macro-F1.
    offsets = tuple(v / 100.0 for v in best_offsets)
    achieved = _macro_f1(y, np.argmax(P + np.array(offsets), axis=1))
    if achieved < best - 1e-12:
        r1, r2 = best_offsets[1] - best_offsets[0], best_offsets[2] - best_offsets[0]
        for c in sorted(_feasible_bases(r1, r2, limit), key=lambda c: _tie_key((c, c + r1, c + r2))):
            offsets = (c / 100.0, (c + r1) / 100.0, (c + r2) / 100.0)
            if _macro_f1(y, np.argmax(P + np.array(offsets), axis=1)) >= best - 1e-12:
                break
    return tuple(float(v) for v in offsets)


def _macro_f1_for_relative(P: np.ndarray, y: np.ndarray,
                           r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    n_combos = len(r1)
    out = np.empty(n_combos)
    chunk = 512
    gold_onehot = [(y == c) for c in range(len(CLASSES))]
    for start in range(0, n_combos, chunk):
        end = min(start + chunk, n_combos)
        offs = np.zeros((end - start, 1, len(CLASSES)))
        offs[:, 0, 1] = r1[start:end] / 100.0
        offs[:, 0, 2] = r2[start:end] / 100.0
        labels = np.argmax(P[None, :, :] + offs, axis=2)
        f1_sum = np.zeros(end - start)
        present = np.zeros(end - start)
        for c in range(len(CLASSES)):
            pred_c = labels == c
            tp = (pred_c & gold_onehot[c]).sum(axis=1)
            fp = (pred_c & ~gold_onehot[c]).sum(axis=1)
            fn = (~pred_c & gold_onehot[c]).sum(axis=1)
            denom = 2 * tp + fp + fn
            f1_c = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
            has_c = gold_onehot[c].any() | pred_c.any(axis=1)
            f1_sum += np.where(has_c, f1_c, 0.0)
            present += has_c
        out[start:end] = f1_sum / np.maximum(present, 1)
    return out


def _macro_f1(gold: np.ndarray, pred: np.ndarray) -> float:
    f1_sum, present = 0.0, 0
    for c in range(len(CLASSES)):
        gc, pc = gold == c, pred == c
        if not gc.any() and not pc.any():
            continue
        tp = int((gc & pc).sum())
        denom = 2 * tp + int((pc & ~gc).sum()) + int((gc & ~pc).sum())
        f1_sum += 2 * tp / denom if denom > 0 else 0.0
        present += 1
    return f1_sum / present if present else 0.0


def _feasible_bases(r1: int, r2: int, limit: int) -> range:
    low = -limit - min(0, r1, r2)
    high = limit - max(0, r1, r2)
    return range(low, high + 1)


def _project_to_grid(r1: int, r2: int, limit: int) -> tuple[int, int, int] | None:
    bases = _feasible_bases(r1, r2, limit)
    if not bases:
        return None
    best = min(bases, key=lambda c: _tie_key((c, c + r1, c + r2)))
    return (best, best + r1, best + r2)


def _tie_key(offsets: tuple[int, int, int]) -> tuple[int, tuple[int, int, int]]:
    return (sum(abs(v) for v in offsets), offsets)
