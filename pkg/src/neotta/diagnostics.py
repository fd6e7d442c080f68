"""Diagnostics for paired clean/corrupt embedding sets.

Everything here explains *why* centroid re-centering works on a given
corruption: how much of the damage is one global offset, how much is
class-conditional, how concentrated the damage is across dimensions, and
how well one domain's centroid transfers to another.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .adapter import AdapterState, EmbeddingBatch, LinearHead, predict
from .errors import DimensionMismatch, EmptyClass, NonZeroBias, ZeroNormVector
from .geometry import PairedDataset
from .metrics import accuracy

_ZERO_NORM = 1e-30


@dataclass(frozen=True)
class ShiftDecomposition:
    """Additive split of corrupt - clean into global + per-class + residual.

    Reconstruction is exact by construction:
    corrupt_i = clean_i + global_shift + per_class[label_i] + residuals_i.
    Classes never seen in the labels get a zero per_class row and are listed
    in missing_classes.
    """

    global_shift: np.ndarray
    per_class: np.ndarray
    residuals: np.ndarray
    missing_classes: tuple[int, ...]


def decompose_shift(dataset: PairedDataset) -> ShiftDecomposition:
    """Split the observed corruption into global, class, and residual parts.

    The global part is the difference of overall means; each class part is
    the difference of class means minus the global part; residuals are the
    exact remainder per sample.
    """
    labels = dataset.labels
    if labels.size == 0:
        raise EmptyClass("dataset has no samples for any class")
    diff = dataset.corrupt.data - dataset.clean.data
    global_shift = diff.mean(axis=0)
    per_class = np.zeros((dataset.num_classes, dataset.dim))
    missing = []
    for c in range(dataset.num_classes):
        mask = labels == c
        if not np.any(mask):
            missing.append(c)
            continue
        per_class[c] = diff[mask].mean(axis=0) - global_shift
    residuals = diff - global_shift - per_class[labels]
    return ShiftDecomposition(
        global_shift=global_shift,
        per_class=per_class,
        residuals=residuals,
        missing_classes=tuple(missing),
    )


class AdjustmentKind(str, Enum):
    """Which correction is subtracted from the corrupt rows before comparison."""

    RAW = "raw"
    MINUS_GLOBAL = "minus_global"
    MINUS_GLOBAL_CLASS = "minus_global_class"
    MINUS_ALL = "minus_all"
    MINUS_CORRUPT_MEAN = "minus_corrupt_mean"


@dataclass(frozen=True)
class AlignmentRow:
    """Mean alignment of adjusted corrupt rows against their clean originals.

    mean_cosine averages per-sample cosine similarity; mean_norm_gap averages
    the per-sample absolute difference of vector norms.
    """

    kind: AdjustmentKind
    mean_cosine: float
    mean_norm_gap: float


@dataclass(frozen=True)
class AlignmentTable:
    """One AlignmentRow per adjustment, in enum order."""

    rows: tuple[AlignmentRow, ...]

    def row(self, kind: AdjustmentKind) -> AlignmentRow:
        for r in self.rows:
            if r.kind is kind:
                return r
        raise KeyError(kind)


def _mean_alignment(clean: np.ndarray, adjusted: np.ndarray) -> tuple[float, float]:
    clean_norms = np.linalg.norm(clean, axis=1)
    adj_norms = np.linalg.norm(adjusted, axis=1)
    if np.any(clean_norms < _ZERO_NORM) or np.any(adj_norms < _ZERO_NORM):
        raise ZeroNormVector("cannot compare a vector of (near-)zero norm")
    cosines = np.sum(clean * adjusted, axis=1) / (clean_norms * adj_norms)
    return float(cosines.mean()), float(np.abs(clean_norms - adj_norms).mean())


def alignment_table(dataset: PairedDataset) -> AlignmentTable:
    """How close each correction brings the corrupt rows back to clean.

    Subtracting everything (global + class + residual) restores the clean
    rows exactly, so the minus-all row reads (1.0, 0.0) up to rounding; the
    minus-corrupt-mean row is the correction the streaming adapter actually
    applies, using no clean-side knowledge beyond this table's comparison.
    """
    parts = decompose_shift(dataset)
    clean = dataset.clean.data
    corrupt = dataset.corrupt.data
    minus_global = corrupt - parts.global_shift
    minus_global_class = minus_global - parts.per_class[dataset.labels]
    adjustments = {
        AdjustmentKind.RAW: corrupt,
        AdjustmentKind.MINUS_GLOBAL: minus_global,
        AdjustmentKind.MINUS_GLOBAL_CLASS: minus_global_class,
        AdjustmentKind.MINUS_ALL: minus_global_class - parts.residuals,
        AdjustmentKind.MINUS_CORRUPT_MEAN: corrupt - corrupt.mean(axis=0),
    }
    rows = []
    for kind in AdjustmentKind:
        cos, gap = _mean_alignment(clean, adjustments[kind])
        rows.append(AlignmentRow(kind=kind, mean_cosine=cos, mean_norm_gap=gap))
    return AlignmentTable(rows=tuple(rows))


@dataclass(frozen=True)
class ShiftHistogram:
    """Where the corruption concentrates, one vote per sample.

    Each sample votes for the dimension with the largest absolute
    clean-to-corrupt change (lowest index on ties).  dimensions/counts are
    sorted by count descending (ties by dimension index); cumulative_fraction
    is the running share of samples covered by the top-k dimensions.
    """

    n: int
    dimensions: np.ndarray
    counts: np.ndarray
    cumulative_fraction: np.ndarray


def top_shift_histogram(dataset: PairedDataset) -> ShiftHistogram:
    """Histogram of per-sample dominant shift dimensions, sorted by frequency."""
    diff = np.abs(dataset.corrupt.data - dataset.clean.data)
    votes = np.argmax(diff, axis=1)
    counts = np.bincount(votes, minlength=dataset.dim)
    order = np.argsort(-counts, kind="stable")  # stable: ties keep index order
    sorted_counts = counts[order]
    cumulative = np.cumsum(sorted_counts) / dataset.rows
    return ShiftHistogram(
        n=dataset.rows,
        dimensions=order.astype(np.int64),
        counts=sorted_counts.astype(np.int64),
        cumulative_fraction=cumulative,
    )


@dataclass(frozen=True)
class ArgmaxConsistency:
    """Agreement between plain-logit argmax and its norm-cosine factorization."""

    per_row: np.ndarray
    agree_fraction: float

    @property
    def n(self) -> int:
        return int(self.per_row.shape[0])


def check_cosine_argmax(head: LinearHead, batch: EmbeddingBatch) -> ArgmaxConsistency:
    """Compare argmax over w_c . x against argmax over ||w_c|| ||x|| cos(w_c, x).

    The two coincide in exact arithmetic for a bias-free head; this probe
    recomputes the second route through explicit normalization to confirm the
    equivalence numerically.  Heads with any non-zero bias are rejected.
    """
    if np.max(np.abs(head.bias)) > 1e-12:
        raise NonZeroBias("cosine factorization of the argmax needs a zero bias")
    if head.dim != batch.dim:
        raise DimensionMismatch(
            f"head dim {head.dim} does not match batch dim {batch.dim}"
        )
    w = head.weights
    w_norms = np.linalg.norm(w, axis=1)
    if np.any(w_norms < _ZERO_NORM):
        raise ZeroNormVector("head has a zero-norm weight row")
    x = batch.data
    x_norms = np.linalg.norm(x, axis=1)

    direct = np.argmax(x @ w.T, axis=1)

    unit_w = w / w_norms[:, None]
    safe = x_norms >= _ZERO_NORM
    unit_x = np.where(safe[:, None], x / np.where(safe, x_norms, 1.0)[:, None], 0.0)
    cosines = unit_x @ unit_w.T
    factored_logits = cosines * (x_norms[:, None] * w_norms[None, :])
    factored = np.argmax(factored_logits, axis=1)

    per_row = direct == factored
    return ArgmaxConsistency(per_row=per_row, agree_fraction=float(per_row.mean()))


@dataclass(frozen=True)
class TransferMatrices:
    """Cross-domain centroid geometry and its effect on accuracy.

    centroid_cosine[i, j] is the cosine between domain centroids i and j.
    accuracy_delta[i, j] is the accuracy on domain j when centering with
    domain i's centroid, minus domain j's unadapted accuracy.
    """

    domains: tuple[str, ...]
    centroid_cosine: np.ndarray
    accuracy_delta: np.ndarray


def transfer_matrix(
    domains: list[tuple[str, PairedDataset] | tuple[str, EmbeddingBatch, np.ndarray]],
    head: LinearHead,
) -> TransferMatrices:
    """Pairwise centroid cosines and cross-centering accuracy deltas.

    Each domain is (name, PairedDataset), scored on its corrupt side, or
    (name, EmbeddingBatch, labels).  Needs at least two domains.
    """
    if len(domains) < 2:
        raise ValueError(f"transfer needs >= 2 domains, got {len(domains)}")
    names = []
    batches = []
    labels = []
    for entry in domains:
        if len(entry) == 2:
            name, ds = entry
            batches.append(ds.corrupt)
            labels.append(ds.labels)
        else:
            name, batch, y = entry
            batches.append(batch)
            labels.append(np.asarray(y, dtype=np.int64))
        names.append(str(name))
    if len(set(names)) != len(names):
        raise ValueError("domain names must be unique")

    centroids = np.stack([b.data.mean(axis=0) for b in batches])
    norms = np.linalg.norm(centroids, axis=1)
    if np.any(norms < _ZERO_NORM):
        raise ZeroNormVector("a domain centroid has (near-)zero norm")
    cosine = (centroids @ centroids.T) / np.outer(norms, norms)

    k = len(batches)
    baseline = [
        accuracy(predict(head, batches[j], None).predicted, labels[j]) for j in range(k)
    ]
    delta = np.zeros((k, k))
    for i in range(k):
        state = AdapterState(
            dim=centroids.shape[1],
            mean=centroids[i],
            count=batches[i].rows,
        )
        for j in range(k):
            acc = accuracy(predict(head, batches[j], state).predicted, labels[j])
            delta[i, j] = acc - baseline[j]
    return TransferMatrices(
        domains=tuple(names),
        centroid_cosine=cosine,
        accuracy_delta=delta,
    )
