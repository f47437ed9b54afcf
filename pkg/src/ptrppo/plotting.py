"""Figures written next to the CSV outputs: priority heatmaps and learning curves."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Numeric matrix from a CSV with one header row. Ragged rows are an error."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    width = len(header)
    for i, r in enumerate(body, start=2):
        if len(r) != width:
            raise ValueError(f"{path}: line {i} has {len(r)} fields, header has {width}")
    if not body:
        return np.zeros((0, width))
    return np.array([[float(x) for x in r] for r in body])


def render_heatmap(matrix: np.ndarray, out: str | Path, cell_size: int = 8, cmap: str = "viridis") -> Path:
    """Raster image with one ``cell_size`` x ``cell_size`` block per matrix entry.

    Rows are training iterations (top = first), columns are memory slots.
    Brighter means higher priority; a constant matrix renders as one color.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"heatmap needs a non-empty 2-D matrix, got shape {m.shape}")
    lo, hi = float(m.min()), float(m.max())
    norm = np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo)
    img = np.kron(norm, np.ones((cell_size, cell_size)))
    out = Path(out)
    plt.imsave(out, img, cmap=cmap, vmin=0.0, vmax=1.0)
    return out


def plot_learning_curves(curves: Mapping[str, Sequence[tuple[Sequence[float], Sequence[float]]]],
                         out: str | Path, title: str = "", threshold: float | None = None) -> Path:
    """Mean evaluation return vs env steps, one line per algorithm with a +-1 std band over seeds.

    ``curves`` maps a label to a list of ``(steps, returns)`` pairs, one per seed.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, runs in curves.items():
        runs = [(np.asarray(s), np.asarray(r)) for s, r in runs if len(s)]
        if not runs:
            continue
        n = min(len(s) for s, _ in runs)
        steps = runs[0][0][:n]
        vals = np.stack([r[:n] for _, r in runs])
        mu, sd = vals.mean(axis=0), vals.std(axis=0)
        ax.plot(steps, mu, label=label)
        ax.fill_between(steps, mu - sd, mu + sd, alpha=0.2)
    if threshold is not None:
        ax.axhline(threshold, color="gray", linestyle="--", linewidth=0.8)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean evaluation return")
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    out = Path(out)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
