"""Synthetic label-noise injection and the validation holdout.

Symmetric noise redraws a fixed fraction of labels uniformly over all c
classes (self-flips allowed; set exclude_self for the c-1 variant). Asymmetric
noise flips per-sample with the given probability, either through an explicit
class map or cyclically inside contiguous class groups. Injectors touch labels
only; features pass through bitwise-unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .data import Dataset
from .numerics import make_rng


@dataclass
class NoiseSpec:
    kind: str                      # symmetric | asymmetric_map | asymmetric_cyclic | none
    rate: float = 0.0
    class_map: list | None = None  # [(from, to)] 0-based
    group_size: int | None = None
    seed: int = 0
    exclude_self: bool = False

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric_map", "asymmetric_cyclic", "none"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("noise rate must lie in [0, 1]")
        if self.kind == "asymmetric_map" and not self.class_map:
            raise ConfigError("asymmetric_map noise requires class_map")
        if self.kind == "asymmetric_cyclic" and not self.group_size:
            raise ConfigError("asymmetric_cyclic noise requires group_size")


@dataclass
class NoisyDataset:
    features: np.ndarray
    noisy_labels: np.ndarray
    clean_labels: np.ndarray     # metric computation only; the trainer's loss never sees these
    flip_mask: np.ndarray
    c: int
    name: str = ""

    def __post_init__(self):
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
        self.flip_mask = np.asarray(self.flip_mask, dtype=bool)
        if not np.array_equal(self.flip_mask, self.noisy_labels != self.clean_labels):
            raise DomainError("flip_mask inconsistent with labels")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def clean_fraction(self) -> float:
        return float(np.mean(~self.flip_mask))


def inject_symmetric(labels, rate: float, c: int, rng: np.random.Generator,
                     exclude_self: bool = False):
    """Redraw round(rate*N) uniformly-chosen labels uniformly over the classes."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("rate must lie in [0, 1]")
    n = labels.shape[0]
    k = int(round(rate * n))
    noisy = labels.copy()
    if k > 0:
        idx = rng.choice(n, size=k, replace=False)
        if exclude_self:
            draws = rng.integers(0, c - 1, size=k)
            draws += draws >= labels[idx]
        else:
            draws = rng.integers(0, c, size=k)
        noisy[idx] = draws
    return noisy, noisy != labels


def inject_asymmetric_map(labels, rate: float, class_map, rng: np.random.Generator):
    """Flip each sample of a mapped class to its target with probability rate."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("rate must lie in [0, 1]")
    mapping = {}
    for src, dst in class_map:
        if src == dst:
            raise ConfigError(f"class map entry {src}->{dst} maps a class to itself")
        if src in mapping:
            raise ConfigError(f"class {src} appears twice in the map")
        mapping[int(src)] = int(dst)
    noisy = labels.copy()
    coins = rng.random(labels.shape[0]) < rate
    for src, dst in mapping.items():
        hit = (labels == src) & coins
        noisy[hit] = dst
    return noisy, noisy != labels


def inject_asymmetric_cyclic(labels, rate: float, group_size: int, c: int,
                             rng: np.random.Generator):
    """Flip within contiguous groups of group_size classes, to the next class
    cyclically, with per-sample probability rate."""
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("rate must lie in [0, 1]")
    if group_size < 1 or c % group_size != 0:
        raise ConfigError(f"group_size {group_size} does not divide c={c}")
    group = labels // group_size
    pos = labels % group_size
    shifted = group * group_size + (pos + 1) % group_size
    coins = rng.random(labels.shape[0]) < rate
    noisy = np.where(coins, shifted, labels)
    return noisy, noisy != labels


def apply_noise(dataset: Dataset, spec: NoiseSpec) -> NoisyDataset:
    """Run the injector named by the spec with its own seeded generator."""
    rng = make_rng(spec.seed)
    if spec.kind == "none" or spec.rate == 0.0:
        noisy, mask = dataset.labels.copy(), np.zeros(dataset.n, dtype=bool)
    elif spec.kind == "symmetric":
        noisy, mask = inject_symmetric(dataset.labels, spec.rate, dataset.c, rng,
                                       exclude_self=spec.exclude_self)
    elif spec.kind == "asymmetric_map":
        noisy, mask = inject_asymmetric_map(dataset.labels, spec.rate, spec.class_map, rng)
    else:
        noisy, mask = inject_asymmetric_cyclic(dataset.labels, spec.rate,
                                               spec.group_size, dataset.c, rng)
    return NoisyDataset(dataset.features, noisy, dataset.labels.copy(), mask,
                        dataset.c, name=dataset.name)


def holdout_split(dataset: NoisyDataset, fraction: float, rng: np.random.Generator):
    """Disjoint uniform split; the holdout keeps its noisy labels (that is all
    the protocol possesses). Returns (train, validation)."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError("holdout fraction must lie in (0, 1)")
    n = dataset.n
    n_val = int(round(fraction * n))
    if n_val < 1 or n_val >= n:
        raise ConfigError(f"degenerate split sizes for N={n}, fraction={fraction}")
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    def take(idx):
        return NoisyDataset(dataset.features[idx], dataset.noisy_labels[idx],
                            dataset.clean_labels[idx], dataset.flip_mask[idx],
                            dataset.c, name=dataset.name)

    return take(train_idx), take(val_idx)
