"""Figure rendering for experiment reports and attention traces.

Figures are written next to the delimited report files: a scale-sweep line
chart per metric (condition per line) and a key-matching heatmap (memory
slots vs resume fields, grouped by part) for a generation trace.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

SWEEP_METRICS = ("bleu1", "bleu2", "dist1", "entity_f1", "cor", "emb_average")


def scale_sweep_figures(records: list[dict], out_dir: Path) -> list[str]:
    """One figure with a panel per headline metric, value vs data scale."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_key: dict[tuple, list[float]] = {}
    for r in records:
        by_key.setdefault((r["metric"], r["condition"], r["scale"]), []).append(r["value"])
    metrics = [m for m in SWEEP_METRICS if any(k[0] == m for k in by_key)]
    if not metrics:
        return []
    conditions = sorted({k[1] for k in by_key})
    ncols = 3
    nrows = int(np.ceil(len(metrics) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), squeeze=False)
    for ax in axes.flat[len(metrics):]:
        ax.axis("off")
    for ax, metric in zip(axes.flat, metrics):
        for condition in conditions:
            scales = sorted({k[2] for k in by_key if k[0] == metric and k[1] == condition})
            means = [float(np.mean(by_key[(metric, condition, s)])) for s in scales]
            ax.plot(scales, means, marker="o", label=condition)
        ax.set_title(metric)
        ax.set_xlabel("training data scale")
        ax.set_ylabel("score")
        ax.invert_xaxis()
        ax.grid(True, alpha=0.3)
    axes.flat[0].legend()
    fig.tight_layout()
    path = out_dir / "scale_sweep.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [str(path)]


def attention_heatmap(trace: dict, out_path: Path, title: str = "key matching") -> str:
    """Slot-by-field heatmap of the key-matching weights in a trace."""
    memory = trace["memory"]
    slots = memory["slots"]
    keys = memory["field_keys"]
    parts = memory["field_parts"]
    if not slots:
        raise ValueError("attention_heatmap: trace has no memory slots")
    order = sorted(range(len(keys)), key=lambda i: (parts[i], i))
    grid = np.array([[s["beta"][i] for i in order] for s in slots])
    fig, ax = plt.subplots(
        figsize=(max(6.0, 0.42 * len(keys)), max(2.4, 0.5 * len(slots) + 1.2))
    )
    im = ax.imshow(grid, aspect="auto", cmap="viridis", vmin=0.0)
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels([f"{keys[i]}\n({parts[i][:4]})" for i in order],
                       rotation=75, fontsize=7)
    ax.set_yticks(range(len(slots)))
    ax.set_yticklabels([f"turn {s['slot'] + 1}" for s in slots], fontsize=8)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return str(out_path)


def gate_sparkline(trace: dict, out_path: Path) -> str:
    """Fusion-gate trajectory over decode steps."""
    gates = [s["gate"] for s in trace["steps"]]
    fig, ax = plt.subplots(figsize=(5.0, 1.8))
    ax.plot(range(1, len(gates) + 1), gates, marker=".")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("decode step")
    ax.set_ylabel("gate")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return str(out_path)
