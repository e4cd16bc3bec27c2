"""Dataset construction and file ingestion.

Synthetic Gaussian blobs serve as the desk-scale classification problem; CSV
and IDX readers let external corpora in. Labels are 1-based in the file
formats and 0-based everywhere inside the library; the translation happens
here and nowhere else.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .numerics import make_rng


@dataclass
class Dataset:
    features: np.ndarray   # (N, m) float64
    labels: np.ndarray     # (N,) int64, 0-based
    c: int
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DomainError("features and labels disagree in length")
        if self.features.shape[0] < 1:
            raise DomainError("empty dataset")
        if not np.all(np.isfinite(self.features)):
            raise DomainError("dataset features contain NaN/Inf")
        if np.any(self.labels < 0) or np.any(self.labels >= self.c):
            raise DomainError("label out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass
class BlobSpec:
    c: int
    per_class: int
    m: int
    separation: float
    std: float
    seed: int = 0

    def __post_init__(self):
        if self.separation <= 0 or self.std <= 0:
            raise ConfigError("separation and std must be positive")
        if self.c < 2 or self.per_class < 1 or self.m < 1:
            raise ConfigError("invalid blob dimensions")


def _blob_centers(c: int, m: int, separation: float) -> np.ndarray:
    """Class centers on a radius-`separation` sphere in the leading dimensions."""
    centers = np.zeros((c, m))
    if c <= m:
        centers[np.arange(c), np.arange(c)] = separation
    elif m >= 2:
        angles = 2.0 * np.pi * np.arange(c) / c
        centers[:, 0] = separation * np.cos(angles)
        centers[:, 1] = separation * np.sin(angles)
    else:  # m == 1
        if c > 2:
            raise ConfigError("cannot place more than 2 separated classes in 1 dimension")
        centers[:, 0] = separation * np.array([1.0, -1.0])[:c]
    return centers


def make_blobs(spec: BlobSpec) -> Dataset:
    """Gaussian clusters around symmetric class centers; deterministic per seed."""
    rng = make_rng(spec.seed)
    centers = _blob_centers(spec.c, spec.m, spec.separation)
    labels = np.repeat(np.arange(spec.c), spec.per_class)
    noise = rng.standard_normal((labels.shape[0], spec.m)) * spec.std
    features = centers[labels] + noise
    return Dataset(features, labels, spec.c, name=f"blobs-c{spec.c}-s{spec.seed}")


def standardize(train_features: np.ndarray):
    """Per-dimension zero-mean unit-variance transform fit on the training split."""
    mean = train_features.mean(axis=0)
    std = train_features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)

    def transform(X: np.ndarray) -> np.ndarray:
        return (X - mean) / std

    return transform


# ---------------------------------------------------------------------------
# CSV: header f1..fm,label (optionally a trailing clean_label column written by
# the noise-injection exporter). Labels are 1-based in the file.

def _format_float(x: float) -> str:
    return repr(float(x))


def write_csv_dataset(dataset: Dataset, path, clean_labels=None) -> None:
    cols = [f"f{i + 1}" for i in range(dataset.m)] + ["label"]
    if clean_labels is not None:
        cols.append("clean_label")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(dataset.n):
            row = [_format_float(v) for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i]) + 1))
            if clean_labels is not None:
                row.append(str(int(clean_labels[i]) + 1))
            fh.write(",".join(row) + "\n")


def read_csv_dataset(path, num_classes: int | None = None):
    """Parse the documented CSV schema; errors carry 1-based line numbers.

    Returns (Dataset, clean_labels or None).
    """
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot open dataset file {path}: {exc}") from exc
    with fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        has_clean = cols and cols[-1] == "clean_label"
        if has_clean:
            cols = cols[:-1]
        m = len(cols) - 1
        if m < 1 or cols[-1] != "label" or cols[:-1] != [f"f{i + 1}" for i in range(m)]:
            raise DomainError(f"{path}:1: bad header {header!r}; expected f1..fm,label")
        feats, labels, cleans = [], [], []
        expected = m + 1 + (1 if has_clean else 0)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != expected:
                raise DomainError(f"{path}:{lineno}: expected {expected} fields, got {len(parts)}")
            try:
                feats.append([float(v) for v in parts[:m]])
                labels.append(int(parts[m]))
                if has_clean:
                    cleans.append(int(parts[m + 1]))
            except ValueError as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from exc
            if not all(np.isfinite(feats[-1])):
                raise DomainError(f"{path}:{lineno}: non-finite feature value")
    if not labels:
        raise DomainError(f"{path}: no data rows")
    labels = np.asarray(labels)
    c = num_classes if num_classes is not None else int(labels.max())
    bad = np.nonzero((labels < 1) | (labels > c))[0]
    if bad.size:
        raise DomainError(f"{path}: row {bad[0] + 1} has label {labels[bad[0]]} outside [1, {c}]")
    ds = Dataset(np.asarray(feats), labels - 1, c, name=str(path))
    clean = None
    if has_clean:
        clean = np.asarray(cleans) - 1
        if np.any(clean < 0) or np.any(clean >= c):
            raise DomainError(f"{path}: clean label outside [1, {c}]")
    return ds, clean


# ---------------------------------------------------------------------------
# IDX (big-endian binary; magic 0x803 for images, 0x801 for labels).

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DomainError(f"{path}: truncated file (wanted {n} bytes, got {len(buf)})")
    return buf


def read_idx_pair(images_path, labels_path, flatten: bool = True):
    """Read an images/labels IDX pair; pixels scaled to [0, 1].

    IDX labels are 0-based already. Returns (features, labels) arrays; wrap in
    a Dataset with the class count of your choosing.
    """
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, images_path))
        if magic != _IDX_IMAGES_MAGIC:
            raise DomainError(f"{images_path}: bad magic 0x{magic:08x} (expected 0x{_IDX_IMAGES_MAGIC:08x})")
        raw = _read_exact(fh, n * rows * cols, images_path)
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    with open(labels_path, "rb") as fh:
        magic, nl = struct.unpack(">ii", _read_exact(fh, 8, labels_path))
        if magic != _IDX_LABELS_MAGIC:
            raise DomainError(f"{labels_path}: bad magic 0x{magic:08x} (expected 0x{_IDX_LABELS_MAGIC:08x})")
        labels = np.frombuffer(_read_exact(fh, nl, labels_path), dtype=np.uint8)
    if n != nl:
        raise DomainError(f"image/label count mismatch: {n} images vs {nl} labels")
    features = images.astype(np.float64) / 255.0
    if flatten:
        features = features.reshape(n, rows * cols)
    return features, labels.astype(np.int64)


def read_idx_dataset(images_path, labels_path, num_classes: int | None = None,
                     flatten: bool = True) -> Dataset:
    features, labels = read_idx_pair(images_path, labels_path, flatten=flatten)
    c = num_classes if num_classes is not None else int(labels.max()) + 1
    return Dataset(features, labels, c, name=str(images_path))
