"""Tests for dataset construction and the CSV/IDX readers."""

import struct

import numpy as np
import pytest

from permll.data import (BlobSpec, Dataset, make_blobs, read_csv_dataset,
                         read_idx_dataset, read_idx_pair, standardize,
                         write_csv_dataset)
from permll.errors import ConfigError, DomainError
from permll.numerics import make_rng


def test_dataset_validation():
    with pytest.raises(DomainError):
        Dataset(np.zeros((3, 2)), np.array([0, 1]), 2)       # length mismatch
    with pytest.raises(DomainError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)       # label out of range
    with pytest.raises(DomainError):
        Dataset(np.array([[np.nan, 0.0]]), np.array([0]), 2)


def test_blob_spec_validation():
    with pytest.raises(ConfigError):
        BlobSpec(c=3, per_class=10, m=2, separation=-1.0, std=1.0)
    with pytest.raises(ConfigError):
        BlobSpec(c=1, per_class=10, m=2, separation=1.0, std=1.0)


def test_make_blobs_shapes_and_determinism():
    spec = BlobSpec(c=3, per_class=50, m=2, separation=4.0, std=1.0, seed=0)
    a = make_blobs(spec)
    b = make_blobs(spec)
    assert a.n == 150 and a.m == 2 and a.c == 3
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, np.repeat([0, 1, 2], 50))
    other = make_blobs(BlobSpec(c=3, per_class=50, m=2, separation=4.0,
                                std=1.0, seed=1))
    assert not np.array_equal(a.features, other.features)


def test_make_blobs_class_means_near_centers():
    # c <= m puts centers on scaled axis vectors
    ds = make_blobs(BlobSpec(c=2, per_class=4000, m=3, separation=5.0,
                             std=0.5, seed=2))
    mean0 = ds.features[ds.labels == 0].mean(axis=0)
    mean1 = ds.features[ds.labels == 1].mean(axis=0)
    assert np.allclose(mean0, [5.0, 0.0, 0.0], atol=0.05)
    assert np.allclose(mean1, [0.0, 5.0, 0.0], atol=0.05)


def test_make_blobs_circular_centers_when_classes_exceed_dims():
    ds = make_blobs(BlobSpec(c=5, per_class=2000, m=2, separation=4.0,
                             std=0.3, seed=3))
    for k in range(5):
        center = ds.features[ds.labels == k].mean(axis=0)
        assert np.linalg.norm(center) == pytest.approx(4.0, abs=0.05)


def test_make_blobs_one_dim_limit():
    ds = make_blobs(BlobSpec(c=2, per_class=10, m=1, separation=3.0,
                             std=0.1, seed=0))
    assert ds.m == 1
    with pytest.raises(ConfigError):
        make_blobs(BlobSpec(c=3, per_class=10, m=1, separation=3.0, std=0.1))


def test_standardize_fit_on_train_only():
    rng = make_rng(4)
    train = rng.standard_normal((500, 3)) * np.array([2.0, 5.0, 0.1]) + 7.0
    transform = standardize(train)
    out = transform(train)
    assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.std(axis=0), 1.0, atol=1e-12)
    # a constant column must not divide by zero
    const = np.ones((10, 1))
    assert np.all(np.isfinite(standardize(const)(const)))


def test_csv_round_trip(tmp_path):
    ds = make_blobs(BlobSpec(c=3, per_class=20, m=4, separation=3.0,
                             std=1.0, seed=5))
    path = tmp_path / "blob.csv"
    write_csv_dataset(ds, path)
    back, clean = read_csv_dataset(path)
    assert clean is None
    assert np.array_equal(back.features, ds.features)   # repr round-trips exactly
    assert np.array_equal(back.labels, ds.labels)
    assert back.c == ds.c


def test_csv_round_trip_with_clean_labels(tmp_path):
    ds = make_blobs(BlobSpec(c=3, per_class=10, m=2, separation=3.0,
                             std=1.0, seed=6))
    clean = (ds.labels + 1) % 3
    path = tmp_path / "noisy.csv"
    write_csv_dataset(ds, path, clean_labels=clean)
    header = path.read_text().splitlines()[0]
    assert header == "f1,f2,label,clean_label"
    back, back_clean = read_csv_dataset(path)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back_clean, clean)


def test_csv_labels_are_one_based_in_the_file(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("f1,label\n0.5,1\n-0.25,3\n")
    ds, _ = read_csv_dataset(path)
    assert np.array_equal(ds.labels, [0, 2])
    assert ds.c == 3


def test_csv_reader_errors_carry_line_numbers(tmp_path):
    bad_header = tmp_path / "a.csv"
    bad_header.write_text("x1,label\n0.5,1\n")
    with pytest.raises(DomainError, match=":1:"):
        read_csv_dataset(bad_header)

    bad_fields = tmp_path / "b.csv"
    bad_fields.write_text("f1,label\n0.5,1\n0.5\n")
    with pytest.raises(DomainError, match=":3:"):
        read_csv_dataset(bad_fields)

    bad_value = tmp_path / "c.csv"
    bad_value.write_text("f1,label\n0.5,1\nxyz,2\n")
    with pytest.raises(DomainError, match=":3:"):
        read_csv_dataset(bad_value)

    bad_label = tmp_path / "d.csv"
    bad_label.write_text("f1,label\n0.5,1\n0.5,7\n")
    with pytest.raises(DomainError, match="outside"):
        read_csv_dataset(bad_label, num_classes=3)

    with pytest.raises(DomainError, match="no data rows"):
        empty = tmp_path / "e.csv"
        empty.write_text("f1,label\n")
        read_csv_dataset(empty)

    with pytest.raises(DomainError, match="cannot open"):
        read_csv_dataset(tmp_path / "missing.csv")


def _write_idx_pair(tmp_path, images, labels):
    n, rows, cols = images.shape
    img_path = tmp_path / "images.idx"
    lbl_path = tmp_path / "labels.idx"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x803, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x801, n))
        fh.write(labels.astype(np.uint8).tobytes())
    return img_path, lbl_path


def test_idx_round_trip(tmp_path):
    rng = make_rng(7)
    images = rng.integers(0, 256, size=(6, 4, 3)).astype(np.uint8)
    labels = np.array([0, 1, 2, 1, 0, 2], dtype=np.uint8)
    img_path, lbl_path = _write_idx_pair(tmp_path, images, labels)

    feats, got = read_idx_pair(img_path, lbl_path)
    assert feats.shape == (6, 12)
    assert np.array_equal(feats, images.reshape(6, 12) / 255.0)
    assert np.array_equal(got, labels)

    unflattened, _ = read_idx_pair(img_path, lbl_path, flatten=False)
    assert unflattened.shape == (6, 4, 3)

    ds = read_idx_dataset(img_path, lbl_path)
    assert ds.c == 3 and np.array_equal(ds.labels, labels)


def test_idx_reader_rejects_corrupt_files(tmp_path):
    rng = make_rng(8)
    images = rng.integers(0, 256, size=(4, 2, 2)).astype(np.uint8)
    labels = np.array([0, 1, 0, 1], dtype=np.uint8)
    img_path, lbl_path = _write_idx_pair(tmp_path, images, labels)

    bad_magic = tmp_path / "bad.idx"
    bad_magic.write_bytes(struct.pack(">iiii", 0x1234, 4, 2, 2))
    with pytest.raises(DomainError, match="bad magic"):
        read_idx_pair(bad_magic, lbl_path)

    truncated = tmp_path / "short.idx"
    truncated.write_bytes(struct.pack(">iiii", 0x803, 4, 2, 2) + b"\x00" * 5)
    with pytest.raises(DomainError, match="truncated"):
        read_idx_pair(truncated, lbl_path)

    short_labels = tmp_path / "short_labels.idx"
    short_labels.write_bytes(struct.pack(">ii", 0x801, 9) + labels.tobytes())
    with pytest.raises(DomainError, match="truncated"):
        read_idx_pair(img_path, short_labels)

    mismatched = tmp_path / "two_labels.idx"
    mismatched.write_bytes(struct.pack(">ii", 0x801, 2) + labels[:2].tobytes())
    with pytest.raises(DomainError, match="mismatch"):
        read_idx_pair(img_path, mismatched)
