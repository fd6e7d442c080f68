"""Render diagnostics reports to image files.

Companion to the CSV/JSON emission: each function draws one report onto a
fresh figure and writes it to the given path (PNG by default via the Agg
backend, format inferred from the suffix).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import AlignmentTable, ShiftHistogram, TransferMatrices

_DPI = 150


def save_alignment_figure(table: AlignmentTable, path: str | Path) -> Path:
    """Bar panels of mean cosine and mean norm gap per adjustment."""
    labels = [row.kind.value.replace("_", "‑") for row in table.rows]
    cosines = [row.mean_cosine for row in table.rows]
    gaps = [row.mean_norm_gap for row in table.rows]
    fig, (ax_cos, ax_gap) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    x = np.arange(len(labels))
    ax_cos.bar(x, cosines, color="#4878d0")
    ax_cos.set_ylabel("mean cosine to clean")
    ax_cos.set_ylim(min(0.0, min(cosines)) - 0.05, 1.05)
    ax_gap.bar(x, gaps, color="#d65f5f")
    ax_gap.set_ylabel("mean |norm gap|")
    for ax in (ax_cos, ax_gap):
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_histogram_figure(hist: ShiftHistogram, path: str | Path, max_rank: int = 50) -> Path:
    """Top-dimension vote counts with the cumulative coverage curve."""
    k = min(max_rank, hist.counts.shape[0])
    ranks = np.arange(1, k + 1)
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    ax.bar(ranks, hist.counts[:k], color="#4878d0", label="votes")
    ax.set_xlabel("dimension rank")
    ax.set_ylabel("samples voting")
    ax2 = ax.twinx()
    ax2.plot(ranks, hist.cumulative_fraction[:k], color="#d65f5f", lw=1.8, label="cumulative")
    ax2.set_ylabel("cumulative fraction")
    ax2.set_ylim(0.0, 1.02)
    ax.spines[["top"]].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def _heatmap(ax, matrix: np.ndarray, names: tuple[str, ...], title: str) -> None:
    im = ax.imshow(matrix, cmap="RdBu_r")
    ax.set_xticks(range(len(names)))
    ax.set_yticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_title(title, fontsize=10)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            ax.text(j, i, f"{matrix[i, j]:+.2f}", ha="center", va="center", fontsize=7)
    ax.figure.colorbar(im, ax=ax, fraction=0.046)


def save_transfer_figure(tm: TransferMatrices, path: str | Path) -> Path:
    """Side-by-side heatmaps of centroid cosines and accuracy deltas."""
    k = len(tm.domains)
    fig, (ax_cos, ax_acc) = plt.subplots(1, 2, figsize=(3.2 + 1.1 * k, 2.2 + 0.9 * k))
    _heatmap(ax_cos, tm.centroid_cosine, tm.domains, "centroid cosine")
    _heatmap(ax_acc, tm.accuracy_delta, tm.domains, "accuracy delta vs unadapted")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
