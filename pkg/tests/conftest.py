"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from permll.data import BlobSpec, make_blobs
from permll.noise import NoiseSpec, apply_noise, holdout_split
from permll.numerics import make_rng
from permll.trainer import DataBundle


def random_simplex(rng: np.random.Generator, c: int) -> np.ndarray:
    """Strictly interior simplex point (softmax of standard-normal logits)."""
    z = rng.standard_normal(c)
    e = np.exp(z - z.max())
    return e / e.sum()


@pytest.fixture
def rng():
    return make_rng(0)


@pytest.fixture
def tiny_bundle():
    """Small noisy blobs bundle for fast trainer tests."""
    train = make_blobs(BlobSpec(c=3, per_class=40, m=2, separation=4.0,
                                std=0.8, seed=5))
    test = make_blobs(BlobSpec(c=3, per_class=30, m=2, separation=4.0,
                               std=0.8, seed=6))
    noisy = apply_noise(train, NoiseSpec(kind="symmetric", rate=0.3, seed=7))
    tr, val = holdout_split(noisy, 0.125, make_rng(8))
    return DataBundle(train=tr, validation=val, test=test)
