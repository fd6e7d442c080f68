"""Synthetic embedding geometry with a known ground truth.

Class means are laid out as a simplex equiangular tight frame (ETF): C unit
vectors with pairwise inner products -1/(C-1), scaled and embedded into d
dimensions by a seeded orthonormal map.  Their global mean is the zero
vector, the configuration that a well-trained penultimate layer collapses
to, which is exactly the regime where re-centering a shifted stream at its
running centroid restores the source geometry.

All sampling uses NumPy's default_rng (PCG64) seeded per call, so every
dataset here is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapter import EmbeddingBatch, LinearHead
from .errors import DimensionMismatch, InvalidDimension, NonFiniteInput

# Hard caps on construction error; the ETF recipe lands orders of magnitude
# below these for any sane size.
_GRAM_TOL = 1e-9
_NORM_TOL = 1e-9
_GLOBAL_MEAN_TOL = 1e-10


def _etf_gram(num_classes: int) -> np.ndarray:
    c = num_classes
    return (c / (c - 1.0)) * np.eye(c) - 1.0 / (c - 1.0)


@dataclass(frozen=True)
class EtfGeometry:
    """C class-mean rows in d dimensions forming a scaled simplex ETF."""

    class_means: np.ndarray
    scale: float
    seed: int

    def __post_init__(self) -> None:
        m = np.array(self.class_means, dtype=np.float64, order="C")
        if m.ndim != 2 or m.shape[0] < 2:
            raise ValueError(f"class_means must be (C >= 2, d), got {m.shape}")
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if np.linalg.norm(m.mean(axis=0)) > _GLOBAL_MEAN_TOL:
            raise ValueError("class means must average to the zero vector")
        norms = np.linalg.norm(m, axis=1)
        if np.max(np.abs(norms - self.scale)) > _NORM_TOL * max(1.0, self.scale):
            raise ValueError("class means must share norm == scale")
        unit = m / norms[:, None]
        dev = np.max(np.abs(unit @ unit.T - _etf_gram(m.shape[0])))
        if dev > _GRAM_TOL:
            raise ValueError(f"normalized Gram deviates from ETF by {dev:.3g}")
        m.setflags(write=False)
        object.__setattr__(self, "class_means", m)

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


@dataclass(frozen=True)
class ShiftModel:
    """Additive corruption: global offset + per-class offsets + isotropic noise.

    class_shifts rows sum to the zero vector, so the global component is
    identified; sparse_support, when set, lists the only dimensions on which
    the global offset may be non-zero.
    """

    global_shift: np.ndarray
    class_shifts: np.ndarray
    residual_std: float
    seed: int
    sparse_support: np.ndarray | None = None

    def __post_init__(self) -> None:
        g = np.array(self.global_shift, dtype=np.float64)
        cs = np.array(self.class_shifts, dtype=np.float64, order="C")
        if g.ndim != 1:
            raise ValueError(f"global_shift must be 1-D, got shape {g.shape}")
        if cs.ndim != 2 or cs.shape[1] != g.shape[0]:
            raise DimensionMismatch(
                f"class_shifts shape {cs.shape} does not match dim {g.shape[0]}"
            )
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(cs))):
            raise NonFiniteInput("shift model contains NaN or Inf")
        if self.residual_std < 0.0:
            raise ValueError(f"residual_std must be >= 0, got {self.residual_std}")
        col_sum = np.max(np.abs(cs.sum(axis=0)))
        if col_sum > 1e-9:
            raise ValueError(f"class_shifts must sum to zero per dim, off by {col_sum:.3g}")
        support = self.sparse_support
        if support is not None:
            support = np.array(support, dtype=np.int64)
            mask = np.zeros(g.shape[0], dtype=bool)
            mask[support] = True
            if np.any(g[~mask] != 0.0):
                raise ValueError("global_shift is non-zero outside sparse_support")
            support.setflags(write=False)
        g.setflags(write=False)
        cs.setflags(write=False)
        object.__setattr__(self, "global_shift", g)
        object.__setattr__(self, "class_shifts", cs)
        object.__setattr__(self, "sparse_support", support)

    @property
    def num_classes(self) -> int:
        return self.class_shifts.shape[0]

    @property
    def dim(self) -> int:
        return self.global_shift.shape[0]


@dataclass(frozen=True)
class PairedDataset:
    """Row-aligned clean/corrupt embeddings with integer labels."""

    clean: EmbeddingBatch
    corrupt: EmbeddingBatch
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.int64)
        if self.clean.data.shape != self.corrupt.data.shape:
            raise DimensionMismatch(
                f"clean {self.clean.data.shape} vs corrupt {self.corrupt.data.shape}"
            )
        if labels.shape != (self.clean.rows,):
            raise DimensionMismatch(
                f"labels shape {labels.shape}, expected ({self.clean.rows},)"
            )
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels out of range [0, num_classes)")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.clean.rows

    @property
    def dim(self) -> int:
        return self.clean.dim

    def take(self, n: int) -> PairedDataset:
        """First n rows, same class universe."""
        if not (1 <= n <= self.rows):
            raise ValueError(f"cannot take {n} of {self.rows} rows")
        return PairedDataset(
            clean=EmbeddingBatch(self.clean.data[:n]),
            corrupt=EmbeddingBatch(self.corrupt.data[:n]),
            labels=self.labels[:n],
            num_classes=self.num_classes,
        )


def _helmert_basis(num_classes: int) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to the all-ones vector.

    Row k is (1, ..., 1, -k, 0, ..., 0) / sqrt(k (k + 1)) with k leading ones.
    """
    c = num_classes
    basis = np.zeros((c - 1, c))
    for k in range(1, c):
        basis[k - 1, :k] = 1.0
        basis[k - 1, k] = -k
        basis[k - 1] /= np.sqrt(k * (k + 1.0))
    return basis


def build_etf(num_classes: int, dim: int, scale: float = 1.0, seed: int = 0) -> EtfGeometry:
    """Scaled simplex ETF of num_classes means embedded in dim dimensions.

    The C simplex vertices sqrt(C/(C-1)) (I - 11^T / C) are reduced to their
    (C-1)-dimensional span, then carried into d dimensions by the Q factor of
    a seeded Gaussian matrix (columns sign-fixed), so the layout is a pure
    function of (num_classes, dim, scale, seed).
    """
    c = num_classes
    if c < 2:
        raise ValueError(f"num_classes must be >= 2, got {c}")
    if dim < c - 1:
        raise InvalidDimension(f"dim {dim} cannot hold a {c}-class simplex (needs >= {c - 1})")
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    vertices = np.sqrt(c / (c - 1.0)) * (np.eye(c) - np.ones((c, c)) / c)
    coords = _helmert_basis(c) @ vertices  # (c-1, c), norms preserved
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((dim, c - 1))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))  # canonical column signs
    means = scale * (q @ coords).T  # (c, dim)
    return EtfGeometry(class_means=means, scale=float(scale), seed=seed)


def head_from_etf(geometry: EtfGeometry) -> LinearHead:
    """Self-dual zero-bias head whose weight rows are the class means."""
    return LinearHead(weights=geometry.class_means, bias=None)


def sample_clean(
    geometry: EtfGeometry, n_per_class: int, within_std: float, seed: int
) -> PairedDataset:
    """Balanced draw around the class means with isotropic within-class noise.

    Rows interleave classes (row i has label i mod C), so any prefix is close
    to balanced; corrupt starts out identical to clean until a shift model is
    applied.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if within_std < 0.0:
        raise ValueError(f"within_std must be >= 0, got {within_std}")
    c, d = geometry.num_classes, geometry.dim
    n = c * n_per_class
    labels = np.arange(n, dtype=np.int64) % c
    rng = np.random.default_rng(seed)
    clean = geometry.class_means[labels] + within_std * rng.standard_normal((n, d))
    return PairedDataset(
        clean=EmbeddingBatch(clean),
        corrupt=EmbeddingBatch(clean),
        labels=labels,
        num_classes=c,
    )


def apply_shift(dataset: PairedDataset, shift: ShiftModel) -> PairedDataset:
    """Corrupt each clean row by the shift model.

    corrupt_i = clean_i + global + class_shifts[label_i] + noise_i with
    noise ~ N(0, residual_std^2 I) drawn from the model's seed.
    """
    if shift.dim != dataset.dim:
        raise DimensionMismatch(f"shift dim {shift.dim} vs dataset dim {dataset.dim}")
    if shift.num_classes != dataset.num_classes:
        raise DimensionMismatch(
            f"shift has {shift.num_classes} classes, dataset {dataset.num_classes}"
        )
    rng = np.random.default_rng(shift.seed)
    noise = (
        shift.residual_std * rng.standard_normal((dataset.rows, dataset.dim))
        if shift.residual_std > 0.0
        else 0.0
    )
    corrupt = (
        dataset.clean.data
        + shift.global_shift
        + shift.class_shifts[dataset.labels]
        + noise
    )
    return PairedDataset(
        clean=dataset.clean,
        corrupt=EmbeddingBatch(corrupt),
        labels=dataset.labels,
        num_classes=dataset.num_classes,
    )


def random_global_shift(
    dim: int, norm: float, seed: int, support: np.ndarray | None = None
) -> np.ndarray:
    """Seeded random direction scaled to the given norm.

    With a support index list the direction lives on those dimensions only.
    """
    if norm < 0.0:
        raise ValueError(f"norm must be >= 0, got {norm}")
    rng = np.random.default_rng(seed)
    g = np.zeros(dim)
    idx = np.arange(dim) if support is None else np.asarray(support, dtype=np.int64)
    direction = rng.standard_normal(idx.shape[0])
    g[idx] = direction / np.linalg.norm(direction) * norm
    return g


def random_class_shifts(num_classes: int, dim: int, norm: float, seed: int) -> np.ndarray:
    """Seeded per-class offsets with zero column mean and mean row norm ``norm``."""
    if norm < 0.0:
        raise ValueError(f"norm must be >= 0, got {norm}")
    rng = np.random.default_rng(seed)
    cs = rng.standard_normal((num_classes, dim))
    cs -= cs.mean(axis=0)  # identifiability: no hidden global component
    if norm == 0.0:
        return np.zeros((num_classes, dim))
    return cs * (norm / np.linalg.norm(cs, axis=1).mean())


@dataclass(frozen=True)
class NcTolerances:
    """Pass thresholds for collapse checks; None means report-only."""

    within_scatter: float | None = None
    gram_deviation: float = 1e-9
    global_mean_norm: float = 1e-10
    self_duality_gap: float = 1e-9
    nearest_center_disagreement: float = 0.0


@dataclass(frozen=True)
class NcReport:
    """Measured collapse statistics with per-property pass flags.

    within_scatter: mean squared distance of samples to their empirical
    class mean (trace of the within-class scatter).
    gram_deviation: max |Gram - target| over normalized geometry means.
    self_duality_gap: || W/||W||_F - M/||M||_F ||_F between head and means.
    nearest_center_disagreement: fraction of samples where the head argmax
    and the nearest-class-mean rule disagree.
    """

    within_scatter: float
    gram_deviation: float
    global_mean_norm: float
    self_duality_gap: float
    nearest_center_disagreement: float
    tolerances: NcTolerances = field(default_factory=NcTolerances)

    def _checks(self) -> dict[str, tuple[float, float | None]]:
        t = self.tolerances
        return {
            "within_scatter": (self.within_scatter, t.within_scatter),
            "gram_deviation": (self.gram_deviation, t.gram_deviation),
            "global_mean_norm": (self.global_mean_norm, t.global_mean_norm),
            "self_duality_gap": (self.self_duality_gap, t.self_duality_gap),
            "nearest_center_disagreement": (
                self.nearest_center_disagreement,
                t.nearest_center_disagreement,
            ),
        }

    def passed(self) -> dict[str, bool]:
        return {
            name: (tol is None or value <= tol)
            for name, (value, tol) in self._checks().items()
        }

    def all_passed(self) -> bool:
        return all(self.passed().values())

    def to_dict(self) -> dict:
        passed = self.passed()
        return {
            name: {"value": value, "tolerance": tol, "passed": passed[name]}
            for name, (value, tol) in self._checks().items()
        }


def verify_nc(
    geometry: EtfGeometry,
    dataset: PairedDataset,
    head: LinearHead,
    tolerances: NcTolerances | None = None,
) -> NcReport:
    """Measure how collapsed the clean samples, geometry, and head are.

    Uses clean rows for the sample-level statistics; the corrupt side is the
    diagnostics modules' business.
    """
    if geometry.dim != dataset.dim or head.dim != dataset.dim:
        raise DimensionMismatch("geometry, head, and dataset dims must agree")
    if geometry.num_classes != dataset.num_classes or head.num_classes != geometry.num_classes:
        raise DimensionMismatch("geometry, head, and dataset class counts must agree")
    tol = tolerances if tolerances is not None else NcTolerances()
    x = dataset.clean.data
    labels = dataset.labels

    sq_dists = np.zeros(dataset.rows)
    for c in range(dataset.num_classes):
        mask = labels == c
        if not np.any(mask):
            continue
        class_mean = x[mask].mean(axis=0)
        sq_dists[mask] = np.sum((x[mask] - class_mean) ** 2, axis=1)
    within_scatter = float(sq_dists.mean())

    m = geometry.class_means
    unit = m / np.linalg.norm(m, axis=1)[:, None]
    gram_deviation = float(np.max(np.abs(unit @ unit.T - _etf_gram(geometry.num_classes))))
    global_mean_norm = float(np.linalg.norm(m.mean(axis=0)))

    w = head.weights
    # matrix norm defaults to Frobenius
    gap = float(np.linalg.norm(w / np.linalg.norm(w) - m / np.linalg.norm(m)))

    head_pick = np.argmax(x @ w.T + head.bias, axis=1)
    dists = np.sum((x[:, None, :] - m[None, :, :]) ** 2, axis=2)
    center_pick = np.argmin(dists, axis=1)
    disagreement = float(np.mean(head_pick != center_pick))

    return NcReport(
        within_scatter=within_scatter,
        gram_deviation=gram_deviation,
        global_mean_norm=global_mean_norm,
        self_duality_gap=gap,
        nearest_center_disagreement=disagreement,
        tolerances=tol,
    )
