"""Multiclass gradient-boosted regression trees with a softmax objective.

Second-order boosting: per round and per class, a regression tree is fit to
the class's gradient/hessian pair and its leaves take the Newton value
-G/(H+lambda). Class weights multiply per-sample gradients and hessians,
which is how minority sensitivity enters training. After each round the
applied step is halved (leaf values scaled in place) until the weighted
training log-loss is non-increasing, so the loss curve is monotone by
construction.

Trees serialize to plain dicts ({"feat", "thr", "left", "right"} or
{"leaf"}) and the whole model round-trips through JSON bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

LAMBDA = 1.0          # L2 regularization on leaf values
MIN_GAIN = 1e-12      # split only on strictly positive gain
MAX_HALVINGS = 40


class GbtError(Exception):
    pass


@dataclass
class GbtModel:
    n_classes: int
    learning_rate: float
    class_weights: tuple[float, ...]
    decision_thresholds: tuple[float, ...]
    trees: list[list[dict]] = field(default_factory=list)  # [round][class]
    train_loss: list[float] = field(default_factory=list)

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        """Additive raw score per class; uniform (all-zero) before any round."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        raw = np.zeros((x.shape[0], self.n_classes))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                raw[:, c] += eval_tree(tree, x)
        return raw[0] if single else raw

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.raw_scores(x))

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "class_weights": list(self.class_weights),
            "thresholds": list(self.decision_thresholds),
            "trees": self.trees,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> GbtModel:
        return cls(
            n_classes=d["n_classes"],
            learning_rate=d["learning_rate"],
            class_weights=tuple(d["class_weights"]),
            decision_thresholds=tuple(d["thresholds"]),
            trees=d["trees"],
        )

    @classmethod
    def from_json(cls, text: str) -> GbtModel:
        return cls.from_dict(json.loads(text))


def softmax(raw: np.ndarray) -> np.ndarray:
    shifted = raw - np.max(raw, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def eval_tree(tree: dict, X: np.ndarray) -> np.ndarray:
    """Vectorized tree evaluation over a sample matrix."""
    out = np.empty(X.shape[0])
    _eval_into(tree, X, np.arange(X.shape[0]), out)
    return out


def _eval_into(node: dict, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if "leaf" in node:
        out[idx] = node["leaf"]
        return
    go_left = X[idx, node["feat"]] < node["thr"]
    _eval_into(node["left"], X, idx[go_left], out)
    _eval_into(node["right"], X, idx[~go_left], out)


def _fit_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, idx: np.ndarray,
              depth: int, max_depth: int) -> dict:
    G, H = g[idx].sum(), h[idx].sum()
    leaf = {"leaf": float(-G / (H + LAMBDA))}
    if depth >= max_depth or len(idx) < 2:
        return leaf

    base_score = G * G / (H + LAMBDA)
    best_gain, best_feat, best_thr = MIN_GAIN, -1, 0.0
    for feat in range(X.shape[1]):
        col = X[idx, feat]
        order = np.argsort(col, kind="stable")
        sorted_col = col[order]
        gl = np.cumsum(g[idx][order])[:-1]
        hl = np.cumsum(h[idx][order])[:-1]
        # candidate split between consecutive distinct values only
        distinct = sorted_col[1:] != sorted_col[:-1]
        if not distinct.any():
            continue
        gr, hr = G - gl, H - hl
        gains = gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - base_score
        gains[~distinct] = -np.inf
        pos = int(np.argmax(gains))
        gain = 0.5 * float(gains[pos])
        if gain > best_gain:
            best_gain = gain
            best_feat = feat
            best_thr = float((sorted_col[pos] + sorted_col[pos + 1]) / 2.0)

    if best_feat < 0:
        return leaf
    go_left = X[idx, best_feat] < best_thr
    return {
        "feat": best_feat,
        "thr": best_thr,
        "left": _fit_tree(X, g, h, idx[go_left], depth + 1, max_depth),
        "right": _fit_tree(X, g, h, idx[~go_left], depth + 1, max_depth),
    }


def _scale_leaves(node: dict, factor: float) -> None:
    if "leaf" in node:
        node["leaf"] = float(node["leaf"] * factor)
        return
    _scale_leaves(node["left"], factor)
    _scale_leaves(node["right"], factor)


def weighted_log_loss(raw: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    p = softmax(raw)
    picked = np.clip(p[np.arange(len(y)), y], 1e-15, None)
    return float(np.sum(w * -np.log(picked)) / np.sum(w))


def inverse_frequency_weights(y: np.ndarray, n_classes: int,
                              cap: float = 50.0) -> tuple[float, ...]:
    """Weights inverse-proportional to class frequency, majority = 1, capped."""
    counts = np.bincount(y, minlength=n_classes).astype(float)
    top = counts.max()
    return tuple(min(top / c, cap) if c > 0 else cap for c in counts)


def train(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    n_trees: int = 50,
    max_depth: int = 3,
    learning_rate: float = 0.3,
    class_weights: tuple[float, ...] | None = None,
    seed: int = 0,
) -> GbtModel:
    """Fit the boosted ensemble; loss is non-increasing every round.

    ``seed`` is accepted for interface stability; fitting is exact greedy
    and needs no randomness, so results are identical for any seed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.size == 0 or len(y) == 0:
        raise GbtError("empty dataset")
    if not np.isfinite(X).all():
        raise GbtError("non-finite feature value")
    if y.min() < 0 or y.max() >= n_classes:
        raise GbtError("label out of range")
    if class_weights is None:
        class_weights = inverse_frequency_weights(y, n_classes)
    if len(class_weights) != n_classes:
        raise GbtError("class_weights length mismatch")

    n = X.shape[0]
    w = np.asarray(class_weights, dtype=float)[y]
    y_onehot = np.zeros((n, n_classes))
    y_onehot[np.arange(n), y] = 1.0

    model = GbtModel(
        n_classes=n_classes,
        learning_rate=learning_rate,
        class_weights=tuple(float(c) for c in class_weights),
        decision_thresholds=(0.0,) * n_classes,
    )
    raw = np.zeros((n, n_classes))
    loss = weighted_log_loss(raw, y, w)
    model.train_loss.append(loss)
    all_idx = np.arange(n)

    for _ in range(n_trees):
        p = softmax(raw)
        round_trees = []
        contrib = np.zeros_like(raw)
        for c in range(n_classes):
            g = w * (p[:, c] - y_onehot[:, c])
            h = w * np.maximum(p[:, c] * (1.0 - p[:, c]), 1e-16)
            tree = _fit_tree(X, g, h, all_idx, 0, max_depth)
            _scale_leaves(tree, learning_rate)
            round_trees.append(tree)
            contrib[:, c] = eval_tree(tree, X)

        # Halve the step until the loss stops increasing; leaves are scaled
        # in place so serialization matches what was applied.
        for _halving in range(MAX_HALVINGS):
            new_loss = weighted_log_loss(raw + contrib, y, w)
            if new_loss <= loss + 1e-12:
                break
            contrib *= 0.5
            for tree in round_trees:
                _scale_leaves(tree, 0.5)
        else:
            contrib[:] = 0.0
            for tree in round_trees:
                _scale_leaves(tree, 0.0)
            new_loss = loss

        raw += contrib
        loss = min(new_loss, loss)
        model.trees.append(round_trees)
        model.train_loss.append(new_loss)

    return model


def training_accuracy(model: GbtModel, X: np.ndarray, y: np.ndarray) -> float:
    pred = np.argmax(model.predict_proba(np.asarray(X, dtype=float)), axis=1)
    return float(np.mean(pred == np.asarray(y)))
