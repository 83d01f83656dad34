"""Evaluation report writers: JSON, aligned text table, and figures.

``write_report(report, base_path)`` emits ``<base>.json`` and ``<base>.txt``
plus two PNG figures (overall metric bars and per-fold goal-accuracy lines)
derived from the same report.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricReport

HEADLINE_KEYS = ("jga", "jga_dialogue", "fga", "aga", "slot_accuracy",
                 "intent_accuracy", "f1_micro", "f1_macro")


def format_table(report: MetricReport) -> str:
    rows = [("metric", "mean")] + [
        (key, f"{getattr(report, key):.4f}") for key in HEADLINE_KEYS
    ] + [("turns", str(report.turns))]
    width = max(len(r[0]) for r in rows)
    lines = [f"{name.ljust(width)}  {value}" for name, value in rows]
    if report.per_fold:
        lines.append("")
        header = ["fold"] + list(HEADLINE_KEYS)
        lines.append("  ".join(h.ljust(10) for h in header))
        for i, fold in enumerate(report.per_fold):
            cells = [str(i).ljust(10)] + [f"{fold[k]:.4f}".ljust(10)
                                          for k in HEADLINE_KEYS]
            lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def write_report(report: MetricReport, base_path: str | Path,
                 figures: bool = True) -> list[Path]:
    base = Path(base_path)
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = base.with_suffix(".json")
    json_path.write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=2),
                         encoding="utf-8")
    written.append(json_path)

    txt_path = base.with_suffix(".txt")
    txt_path.write_text(format_table(report), encoding="utf-8")
    written.append(txt_path)

    if figures:
        written.extend(render_figures(report, base))
    return written


def render_figures(report: MetricReport, base: Path) -> list[Path]:
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    values = [getattr(report, k) for k in HEADLINE_KEYS]
    ax.bar(range(len(HEADLINE_KEYS)), values, color="#4878a8")
    ax.set_xticks(range(len(HEADLINE_KEYS)))
    ax.set_xticklabels(HEADLINE_KEYS, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Evaluation summary")
    for i, v in enumerate(values):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    fig.tight_layout()
    metrics_png = base.parent / f"{base.stem}_metrics.png"
    fig.savefig(metrics_png, dpi=120)
    plt.close(fig)
    written.append(metrics_png)

    if report.per_fold:
        fig, ax = plt.subplots(figsize=(7, 4))
        xs = list(range(len(report.per_fold)))
        for key, marker in (("jga", "o"), ("aga", "s"), ("fga", "^")):
            ax.plot(xs, [f[key] for f in report.per_fold], marker=marker, label=key)
        ax.set_xlabel("fold")
        ax.set_ylabel("score")
        ax.set_ylim(0, 1.05)
        ax.set_title("Goal accuracy per fold")
        ax.legend()
        fig.tight_layout()
        folds_png = base.parent / f"{base.stem}_folds.png"
        fig.savefig(folds_png, dpi=120)
        plt.close(fig)
        written.append(folds_png)
    return written
