"""Streaming centroid re-centering for frozen linear classifier heads.

A target-domain embedding stream is summarized by a single running mean
vector.  Each incoming batch is re-centered by subtracting that mean before
the (frozen) linear head is applied, which removes the global component of a
distribution shift without touching the head weights.

Two update rules are provided:

* ``update``: exact sample-weighted running mean.  The result depends only on
  the multiset of rows seen, never on how they were batched, so batch size 1
  and batch size 1000 converge to bit-for-bit comparable states.
* ``update_continual``: exponential moving average of per-batch means, for
  targets whose shift drifts over time.

States are immutable values; every update returns a fresh state.  All
accumulation is float64 regardless of how embeddings were stored on disk,
and reductions use a fixed (single-threaded, row-major) order so repeated
runs are bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, WrongMode


class UpdateMode(str, Enum):
    """How an adapter state folds new batches into its mean."""

    CUMULATIVE = "cumulative"
    EMA = "ema"


@dataclass(frozen=True)
class EmbeddingBatch:
    """One batch of row-vector embeddings, shape (rows, dim), float64.

    The array is copied on construction, validated to be finite, and frozen,
    so a batch can be shared without defensive copies downstream.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ValueError(f"embedding batch must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"embedding batch must be non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("embedding batch contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @classmethod
    def _from_owned(cls, arr: np.ndarray) -> EmbeddingBatch:
        # Internal: wrap an array we just computed without re-copying it.
        # Finiteness still holds: any NaN/Inf element poisons the sum, and
        # the one-pass sum is cheaper than scanning a boolean temp.  A
        # finite-but-overflowing sum triggers the precise recheck instead.
        if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
            raise NonFiniteInput("operation produced non-finite values")
        arr.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", arr)
        return obj


@dataclass(frozen=True)
class AdapterState:
    """Running summary of every embedding seen so far.

    ``count`` is the number of rows consumed.  A zero count means the state
    is neutral: its mean is the zero vector and centering with it is a no-op.
    EMA states carry their smoothing factor ``alpha`` in (0, 1].
    """

    dim: int
    mean: np.ndarray
    count: int
    mode: UpdateMode = UpdateMode.CUMULATIVE
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        mean = np.array(self.mean, dtype=np.float64)
        if mean.shape != (self.dim,):
            raise DimensionMismatch(
                f"mean has shape {mean.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(mean)):
            raise NonFiniteInput("adapter mean contains NaN or Inf")
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        if self.count == 0 and np.any(mean != 0.0):
            raise ValueError("a state with count 0 must have a zero mean")
        mode = UpdateMode(self.mode)
        if mode is UpdateMode.EMA:
            if self.alpha is None or not (0.0 < self.alpha <= 1.0):
                raise ValueError(f"ema alpha must be in (0, 1], got {self.alpha}")
        elif self.alpha is not None:
            raise ValueError("alpha is only meaningful for ema states")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "mode", mode)

    @classmethod
    def initial(
        cls,
        dim: int,
        mode: UpdateMode = UpdateMode.CUMULATIVE,
        alpha: float | None = None,
    ) -> AdapterState:
        """Neutral state: zero mean, zero count."""
        return cls(dim=dim, mean=np.zeros(dim), count=0, mode=mode, alpha=alpha)

    def _advance(self, mean: np.ndarray, count: int) -> AdapterState:
        # Internal successor constructor for the update rules: the arithmetic
        # preserves every invariant except finiteness, which the sum guard
        # re-establishes without a full validation pass.
        if not np.isfinite(mean.sum()) and not np.all(np.isfinite(mean)):
            raise NonFiniteInput("update produced a non-finite mean")
        mean.setflags(write=False)
        obj = object.__new__(AdapterState)
        object.__setattr__(obj, "dim", self.dim)
        object.__setattr__(obj, "mean", mean)
        object.__setattr__(obj, "count", count)
        object.__setattr__(obj, "mode", self.mode)
        object.__setattr__(obj, "alpha", self.alpha)
        return obj


@dataclass(frozen=True)
class LinearHead:
    """Frozen linear classifier: logits = x @ weights.T + bias.

    weights has shape (num_classes, dim) with num_classes >= 2; bias has
    length num_classes and defaults to zero.
    """

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64, order="C")
        if w.ndim != 2:
            raise ValueError(f"head weights must be 2-D, got shape {w.shape}")
        if w.shape[0] < 2:
            raise ValueError(f"head needs >= 2 classes, got {w.shape[0]}")
        if w.shape[1] < 1:
            raise ValueError(f"head dim must be >= 1, got {w.shape[1]}")
        if not np.all(np.isfinite(w)):
            raise NonFiniteInput("head weights contain NaN or Inf")
        b = self.bias
        b = np.zeros(w.shape[0]) if b is None else np.array(b, dtype=np.float64)
        if b.shape != (w.shape[0],):
            raise DimensionMismatch(
                f"bias has shape {b.shape}, expected ({w.shape[0]},)"
            )
        if not np.all(np.isfinite(b)):
            raise NonFiniteInput("head bias contains NaN or Inf")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class PredictionBatch:
    """Per-row logits, argmax class, and softmax confidence at the argmax."""

    logits: np.ndarray
    predicted: np.ndarray
    confidence: np.ndarray

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> PredictionBatch:
        # np.argmax already breaks ties toward the lowest index.
        predicted = np.argmax(logits, axis=1)
        probs = _softmax(logits)
        confidence = probs[np.arange(logits.shape[0]), predicted]
        for arr in (logits, predicted, confidence):
            arr.setflags(write=False)
        return cls(logits=logits, predicted=predicted, confidence=confidence)


def _softmax(logits: np.ndarray) -> np.ndarray:
    # Max-subtraction keeps exp() in range for any finite logits.
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_confidence(logits: np.ndarray) -> np.ndarray:
    """Softmax probabilities of one logit row; sums to 1 within 1e-12."""
    row = np.asarray(logits, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] < 1:
        raise ValueError(f"expected a 1-D logit row, got shape {row.shape}")
    if not np.all(np.isfinite(row)):
        raise NonFiniteInput("logits contain NaN or Inf")
    return _softmax(row)


def _check_dim(state_dim: int, batch_dim: int) -> None:
    if state_dim != batch_dim:
        raise DimensionMismatch(
            f"state dim {state_dim} does not match batch dim {batch_dim}"
        )


def update(state: AdapterState, batch: EmbeddingBatch) -> AdapterState:
    """Fold a batch into a cumulative state with exact sample weighting.

    mean' = mean + (sum(batch) - rows * mean) / (count + rows), so the result
    depends only on which rows were seen, not on the batching.
    """
    if state.mode is not UpdateMode.CUMULATIVE:
        raise WrongMode("update() needs a cumulative state; use update_continual()")
    _check_dim(state.dim, batch.dim)
    new_count = state.count + batch.rows
    delta = batch.data.sum(axis=0) - batch.rows * state.mean
    new_mean = state.mean + delta / new_count
    return state._advance(new_mean, new_count)


def update_continual(state: AdapterState, batch: EmbeddingBatch) -> AdapterState:
    """Fold a batch into an EMA state: mean' = (1 - a) * mean + a * avg(batch)."""
    if state.mode is not UpdateMode.EMA:
        raise WrongMode("update_continual() needs an ema state; use update()")
    _check_dim(state.dim, batch.dim)
    a = state.alpha
    assert a is not None  # guaranteed by AdapterState invariants
    new_mean = (1.0 - a) * state.mean + a * batch.data.mean(axis=0)
    return state._advance(new_mean, state.count + batch.rows)


def merge(a: AdapterState, b: AdapterState) -> AdapterState:
    """Combine two cumulative states as if their streams were concatenated."""
    if a.mode is not UpdateMode.CUMULATIVE or b.mode is not UpdateMode.CUMULATIVE:
        raise WrongMode("merge() is defined for cumulative states only")
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot merge dims {a.dim} and {b.dim}")
    total = a.count + b.count
    if total == 0:
        return AdapterState.initial(a.dim)
    mean = (a.count * a.mean + b.count * b.mean) / total
    return AdapterState(dim=a.dim, mean=mean, count=total, mode=UpdateMode.CUMULATIVE)


def center(batch: EmbeddingBatch, state: AdapterState) -> EmbeddingBatch:
    """Subtract the state's mean from every row.

    Allocates exactly one batch-sized buffer.  With a count-0 state the mean
    is the zero vector and the rows pass through unchanged.
    """
    _check_dim(state.dim, batch.dim)
    return EmbeddingBatch._from_owned(batch.data - state.mean)


def predict(
    head: LinearHead, batch: EmbeddingBatch, state: AdapterState | None = None
) -> PredictionBatch:
    """Apply the head to centered rows: logits = (x - mean) @ W.T + bias.

    With no state (or a count-0 state) this is the unadapted head output.
    The centered matrix is formed explicitly, so predict(head, batch, state)
    equals predict(head, center(batch, state)) element-exactly.
    """
    if head.dim != batch.dim:
        raise DimensionMismatch(
            f"head dim {head.dim} does not match batch dim {batch.dim}"
        )
    if state is None:
        x = batch.data
    else:
        _check_dim(state.dim, batch.dim)
        x = batch.data - state.mean
    logits = x @ head.weights.T + head.bias
    if not np.all(np.isfinite(logits)):
        raise NonFiniteInput("logits overflowed to non-finite values")
    return PredictionBatch.from_logits(logits)


def predict_mse(
    head: LinearHead, batch: EmbeddingBatch, state: AdapterState
) -> PredictionBatch:
    """Centered prediction for a head trained with squared error to one-hot targets.

    The stored bias is replaced by the constant 1/num_classes, which is what
    such a head's bias converges to once features collapse to class means.
    """
    if head.dim != batch.dim:
        raise DimensionMismatch(
            f"head dim {head.dim} does not match batch dim {batch.dim}"
        )
    _check_dim(state.dim, batch.dim)
    x = batch.data - state.mean
    logits = x @ head.weights.T + 1.0 / head.num_classes
    if not np.all(np.isfinite(logits)):
        raise NonFiniteInput("logits overflowed to non-finite values")
    return PredictionBatch.from_logits(logits)
