"""Accuracy, calibration error, and streaming evaluation protocols."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .adapter import (
    AdapterState,
    EmbeddingBatch,
    LinearHead,
    UpdateMode,
    predict,
    predict_mse,
    update,
    update_continual,
)
from .errors import EmptyInput, LengthMismatch, OutOfRangeConfidence, WrongMode


class AdaptMode(str, Enum):
    """Which adaptation rule an evaluation run applies."""

    NONE = "none"
    NEO = "neo"
    NEO_CONTINUAL = "neo-continual"
    NEO_MSE = "neo-mse"


class Protocol(str, Enum):
    """online folds each batch into the state before predicting it; frozen never mutates."""

    ONLINE = "online"
    FROZEN = "frozen"


@dataclass(frozen=True)
class BinStats:
    """One calibration bin: sample count and within-bin means (0.0 when empty)."""

    count: int
    mean_confidence: float
    mean_accuracy: float


@dataclass(frozen=True)
class EceReport:
    """Expected calibration error over right-closed equal-width bins of (0, 1]."""

    n_bins: int
    bin_edges: np.ndarray
    per_bin: tuple[BinStats, ...]
    ece: float

    def to_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "bin_edges": [float(e) for e in self.bin_edges],
            "per_bin": [
                {
                    "count": b.count,
                    "mean_confidence": b.mean_confidence,
                    "mean_accuracy": b.mean_accuracy,
                }
                for b in self.per_bin
            ],
            "ece": self.ece,
        }


def accuracy(predicted: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of exact matches between two equal-length integer sequences."""
    p = np.asarray(predicted)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise LengthMismatch(f"predicted shape {p.shape} vs labels shape {y.shape}")
    if p.size == 0:
        raise EmptyInput("cannot score zero predictions")
    return float(np.mean(p == y))


def ece(confidence: np.ndarray, correct: np.ndarray, n_bins: int = 15) -> EceReport:
    """Expected calibration error with equal-width right-closed bins.

    Confidence c lands in the bin whose edges satisfy (b-1)/n_bins < c <= b/n_bins;
    empty bins contribute zero.  Confidences must lie in (0, 1].
    """
    conf = np.asarray(confidence, dtype=np.float64)
    corr = np.asarray(correct)
    if conf.shape != corr.shape or conf.ndim != 1:
        raise LengthMismatch(f"confidence shape {conf.shape} vs correct shape {corr.shape}")
    if conf.size == 0:
        raise EmptyInput("cannot calibrate zero predictions")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    if np.any(~np.isfinite(conf)) or np.any(conf <= 0.0) or np.any(conf > 1.0):
        raise OutOfRangeConfidence("confidences must lie in (0, 1]")
    corr = corr.astype(np.float64)

    edges = np.array([b / n_bins for b in range(n_bins + 1)])
    # First edge index >= c, minus one: right-closed binning without the
    # rounding hazards of multiplying c by n_bins.
    idx = np.searchsorted(edges, conf, side="left") - 1
    counts = np.bincount(idx, minlength=n_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=n_bins)
    corr_sums = np.bincount(idx, weights=corr, minlength=n_bins)

    n = conf.size
    per_bin = []
    total = 0.0
    for b in range(n_bins):
        if counts[b] == 0:
            per_bin.append(BinStats(count=0, mean_confidence=0.0, mean_accuracy=0.0))
            continue
        mc = conf_sums[b] / counts[b]
        ma = corr_sums[b] / counts[b]
        per_bin.append(BinStats(count=int(counts[b]), mean_confidence=float(mc), mean_accuracy=float(ma)))
        total += (counts[b] / n) * abs(ma - mc)
    edges.setflags(write=False)
    return EceReport(n_bins=n_bins, bin_edges=edges, per_bin=tuple(per_bin), ece=float(total))


@dataclass(frozen=True)
class EvalReport:
    """Scores for one evaluation run."""

    n: int
    accuracy: float
    ece: EceReport
    mode: AdaptMode

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "ece": self.ece.to_dict(),
            "mode": self.mode.value,
        }


def _initial_state(dim: int, mode: AdaptMode, alpha: float) -> AdapterState:
    if mode is AdaptMode.NEO_CONTINUAL:
        return AdapterState.initial(dim, mode=UpdateMode.EMA, alpha=alpha)
    return AdapterState.initial(dim)


def evaluate(
    head: LinearHead,
    batch: EmbeddingBatch,
    labels: np.ndarray,
    mode: AdaptMode = AdaptMode.NEO,
    protocol: Protocol = Protocol.ONLINE,
    state: AdapterState | None = None,
    batch_size: int = 64,
    n_bins: int = 15,
    alpha: float = 0.01,
) -> EvalReport:
    """Score a labeled stream under an adaptation mode and protocol.

    online consumes the rows in consecutive batch_size chunks, folding each
    chunk into the state before predicting that same chunk.  frozen predicts
    every row with the state exactly as given (or unadapted when absent).
    The no-adaptation mode ignores the state and protocol entirely.
    """
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (batch.rows,):
        raise LengthMismatch(f"labels shape {y.shape}, expected ({batch.rows},)")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    mode = AdaptMode(mode)
    protocol = Protocol(protocol)

    if mode is AdaptMode.NONE:
        pred = predict(head, batch, None)
        return EvalReport(
            n=batch.rows,
            accuracy=accuracy(pred.predicted, y),
            ece=ece(pred.confidence, pred.predicted == y, n_bins=n_bins),
            mode=mode,
        )

    predict_fn = predict_mse if mode is AdaptMode.NEO_MSE else predict
    if state is None:
        state = _initial_state(batch.dim, mode, alpha)
    else:
        wanted = (
            UpdateMode.EMA
            if mode is AdaptMode.NEO_CONTINUAL
            else UpdateMode.CUMULATIVE
        )
        if state.mode is not wanted:
            raise WrongMode(
                f"{mode.value} needs a {wanted.value} state, "
                f"got {state.mode.value}"
            )

    if protocol is Protocol.FROZEN:
        pred = predict_fn(head, batch, state)
        predicted, confidence = pred.predicted, pred.confidence
    else:
        update_fn = update_continual if mode is AdaptMode.NEO_CONTINUAL else update
        predicted = np.empty(batch.rows, dtype=np.int64)
        confidence = np.empty(batch.rows, dtype=np.float64)
        for start in range(0, batch.rows, batch_size):
            stop = min(start + batch_size, batch.rows)
            chunk = EmbeddingBatch(batch.data[start:stop])
            state = update_fn(state, chunk)
            pred = predict_fn(head, chunk, state)
            predicted[start:stop] = pred.predicted
            confidence[start:stop] = pred.confidence

    return EvalReport(
        n=batch.rows,
        accuracy=accuracy(predicted, y),
        ece=ece(confidence, predicted == y, n_bins=n_bins),
        mode=mode,
    )
