"""Shared fixtures: a seeded collapsed geometry with a known global shift."""

from __future__ import annotations

import numpy as np
import pytest

from neotta import apply_shift, build_etf, head_from_etf, sample_clean
from neotta.geometry import EtfGeometry, PairedDataset, ShiftModel, random_global_shift

# One geometry family used across tests: 10 classes in 64 dims, unit scale.
GEOM_SEED = 7
SAMPLE_SEED = 11
SHIFT_SEED = 13
NUM_CLASSES = 10
DIM = 64
SHIFT_NORM = 3.0


def recovery_dataset(
    within_std: float,
    n: int = 512,
    sample_seed: int = SAMPLE_SEED,
    shift_sign: float = 1.0,
    residual_std: float = 0.0,
    residual_seed: int = 0,
) -> tuple[EtfGeometry, PairedDataset]:
    """The pure-global-shift fixture: ETF clean data plus one norm-3 offset."""
    geometry = build_etf(NUM_CLASSES, DIM, scale=1.0, seed=GEOM_SEED)
    per_class = -(-n // NUM_CLASSES)  # ceil division, then trim to n rows
    dataset = sample_clean(geometry, per_class, within_std, seed=sample_seed).take(n)
    shift = ShiftModel(
        global_shift=shift_sign * random_global_shift(DIM, SHIFT_NORM, seed=SHIFT_SEED),
        class_shifts=np.zeros((NUM_CLASSES, DIM)),
        residual_std=residual_std,
        seed=residual_seed,
    )
    return geometry, apply_shift(dataset, shift)


@pytest.fixture(scope="session")
def etf_10_64() -> EtfGeometry:
    return build_etf(NUM_CLASSES, DIM, scale=1.0, seed=GEOM_SEED)


@pytest.fixture(scope="session")
def shifted_noisy():
    """Recovery fixture with small within-class noise, 512 rows."""
    geometry, dataset = recovery_dataset(within_std=0.05)
    return geometry, head_from_etf(geometry), dataset


@pytest.fixture(scope="session")
def shifted_exact():
    """Recovery fixture with zero within-class noise, 512 rows."""
    geometry, dataset = recovery_dataset(within_std=0.0)
    return geometry, head_from_etf(geometry), dataset
