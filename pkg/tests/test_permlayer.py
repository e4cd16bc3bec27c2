"""Tests for the per-sample permutation layer."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permll.errors import ConfigError, DomainError
from permll.numerics import finite_difference_grad, make_rng, softmax
from permll.permlayer import (AlphaTable, apply_mix_batch, apply_to_label,
                              apply_to_vec, build_dense, grad_alpha,
                              init_alpha, mix_grad_batch, permutation_accuracy,
                              permutation_correct, swap_matrix)
from tests.conftest import random_simplex

# alpha with softmax exactly [0.5, 0.3, 0.2] (log gauge)
ALPHA_532 = np.log(np.array([0.5, 0.3, 0.2]))

small_alpha = st.lists(st.floats(-6.0, 6.0, allow_nan=False),
                       min_size=2, max_size=8).map(np.array)


def test_swap_matrix_exchanges_rows():
    P = swap_matrix(0, 2, 3)
    expected = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=float)
    assert np.array_equal(P, expected)
    assert np.array_equal(swap_matrix(1, 1, 3), np.eye(3))


def test_swap_matrix_rejects_out_of_range():
    with pytest.raises(DomainError):
        swap_matrix(0, 3, 3)


def test_build_dense_hand_example():
    # mixing weights [0.5, 0.3, 0.2] with label 0:
    # 0.5*I + 0.3*P(0,1) + 0.2*P(0,2)
    D = build_dense(ALPHA_532, 0)
    expected = np.array([[0.5, 0.3, 0.2],
                         [0.3, 0.7, 0.0],
                         [0.2, 0.0, 0.8]])
    assert np.max(np.abs(D - expected)) < 1e-14


@given(small_alpha, st.integers(0, 10 ** 6))
@settings(max_examples=60)
def test_build_dense_is_doubly_stochastic_and_symmetric(alpha, seed):
    y = int(make_rng(seed).integers(0, alpha.shape[0]))
    D = build_dense(alpha, y)
    assert np.all(D >= -1e-15)
    assert np.max(np.abs(D.sum(axis=0) - 1.0)) < 1e-12
    assert np.max(np.abs(D.sum(axis=1) - 1.0)) < 1e-12
    # every P(y, i) is symmetric, so the convex combination is too
    assert np.max(np.abs(D - D.T)) < 1e-15


def test_apply_to_vec_hand_example():
    out = apply_to_vec(ALPHA_532, 0, np.array([0.6, 0.3, 0.1]))
    assert np.max(np.abs(out.output - [0.41, 0.39, 0.20])) < 1e-14
    assert np.max(np.abs(out.mix - [0.5, 0.3, 0.2])) < 1e-14


def test_apply_to_vec_matches_dense_oracle():
    rng = make_rng(11)
    for _ in range(100):
        c = int(rng.integers(2, 8))
        alpha = rng.standard_normal(c) * 2.0
        y = int(rng.integers(0, c))
        p = random_simplex(rng, c)
        fast = apply_to_vec(alpha, y, p).output
        dense = build_dense(alpha, y) @ p
        assert np.max(np.abs(fast - dense)) < 1e-12


def test_apply_to_vec_preserves_simplex():
    rng = make_rng(12)
    for _ in range(50):
        c = int(rng.integers(2, 8))
        out = apply_to_vec(rng.standard_normal(c), int(rng.integers(0, c)),
                           random_simplex(rng, c)).output
        assert np.all(out >= -1e-15)
        assert abs(out.sum() - 1.0) < 1e-12


def test_apply_to_vec_fixes_uniform_vector():
    rng = make_rng(13)
    for c in (2, 3, 5, 9):
        p = np.ones(c) / c
        out = apply_to_vec(rng.standard_normal(c) * 3.0, c - 1, p).output
        assert np.max(np.abs(out - p)) < 1e-15


def test_apply_to_vec_identity_when_mix_concentrates_on_label():
    p = np.array([0.7, 0.2, 0.1])
    out = apply_to_vec(np.array([30.0, 0.0, 0.0]), 0, p).output
    assert np.max(np.abs(out - p)) < 1e-12


def test_apply_to_vec_shape_mismatch():
    with pytest.raises(DomainError):
        apply_to_vec(np.zeros(3), 0, np.array([0.5, 0.5]))


def test_apply_to_label_equals_mixing_weights():
    rng = make_rng(14)
    for _ in range(50):
        c = int(rng.integers(2, 9))
        alpha = rng.standard_normal(c) * 2.0
        y = int(rng.integers(0, c))
        assert np.max(np.abs(apply_to_label(alpha, y) - softmax(alpha))) <= 1e-12


def test_apply_to_label_hand_examples():
    assert np.allclose(apply_to_label(np.zeros(2), 1), [0.5, 0.5], atol=1e-15)
    out = apply_to_label(np.array([np.log(2.0), 0.0, 0.0]), 2)
    assert np.max(np.abs(out - [0.5, 0.25, 0.25])) < 1e-14


def test_grad_alpha_matches_finite_differences():
    rng = make_rng(15)
    for _ in range(50):
        c = int(rng.integers(2, 6))
        alpha = rng.standard_normal(c)
        y = int(rng.integers(0, c))
        p = random_simplex(rng, c)
        u = rng.standard_normal(c)

        def scalar(a):
            return float(u @ apply_to_vec(a, y, p).output)

        fd = finite_difference_grad(scalar, alpha)
        g = grad_alpha(alpha, y, p, u)
        assert np.max(np.abs(g - fd)) < 1e-6


def test_grad_alpha_lies_in_softmax_tangent_space():
    rng = make_rng(16)
    for _ in range(20):
        c = int(rng.integers(2, 6))
        g = grad_alpha(rng.standard_normal(c), int(rng.integers(0, c)),
                       random_simplex(rng, c), rng.standard_normal(c))
        assert abs(g.sum()) < 1e-12


def test_grad_alpha_vanishes_for_uniform_vector():
    rng = make_rng(17)
    for c in (2, 4, 7):
        g = grad_alpha(rng.standard_normal(c), 0, np.ones(c) / c,
                       rng.standard_normal(c))
        assert np.max(np.abs(g)) < 1e-15


def test_init_alpha_mass_and_argmax():
    labels = np.array([0, 2, 1, 2])
    table = init_alpha(labels, 0.7, 3)
    S = table.mix()
    assert np.allclose(S[np.arange(4), labels], 0.7, atol=1e-12)
    off = (1.0 - 0.7) / 2
    for i, y in enumerate(labels):
        rest = np.delete(S[i], y)
        assert np.allclose(rest, off, atol=1e-12)
    assert np.array_equal(np.argmax(table.alpha, axis=1), labels)


def test_init_alpha_rejects_bad_mass():
    labels = np.zeros(3, dtype=int)
    with pytest.raises(ConfigError):
        init_alpha(labels, 1.0 / 3, 3)   # not strictly above uniform
    with pytest.raises(ConfigError):
        init_alpha(labels, 1.0, 3)


def test_permutation_correct_requires_unique_argmax():
    assert permutation_correct(np.array([0.1, 0.9, 0.2]), 1)
    assert not permutation_correct(np.array([0.1, 0.9, 0.2]), 0)
    # exact tie at the top: never counted as correct
    assert not permutation_correct(np.array([0.9, 0.9, 0.2]), 0)


def test_permutation_accuracy_counts_rows():
    table = AlphaTable(np.array([[2.0, 0.0], [0.0, 2.0], [1.0, 1.0]]),
                       np.array([0, 1, 0]))
    clean = np.array([0, 0, 0])
    # row 0 correct, row 1 wrong argmax, row 2 tie
    assert permutation_accuracy(table, clean) == pytest.approx(100.0 / 3)


def test_alpha_table_validation():
    with pytest.raises(DomainError):
        AlphaTable(np.zeros((3, 2)), np.array([0, 1]))       # length mismatch
    with pytest.raises(DomainError):
        AlphaTable(np.zeros((2, 2)), np.array([0, 2]))       # label out of range
    with pytest.raises(DomainError):
        AlphaTable(np.zeros((2, 1)), np.array([0, 0]))       # single class


def test_batched_apply_matches_single_sample():
    rng = make_rng(18)
    B, c = 17, 5
    A = rng.standard_normal((B, c))
    S = softmax(A)
    y = rng.integers(0, c, size=B)
    P = softmax(rng.standard_normal((B, c)))
    batched = apply_mix_batch(S, y, P)
    for i in range(B):
        single = apply_to_vec(A[i], int(y[i]), P[i]).output
        assert np.max(np.abs(batched[i] - single)) < 1e-14


def test_batched_grad_matches_single_sample():
    rng = make_rng(19)
    B, c = 17, 4
    A = rng.standard_normal((B, c))
    y = rng.integers(0, c, size=B)
    P = softmax(rng.standard_normal((B, c)))
    U = rng.standard_normal((B, c))
    batched = mix_grad_batch(A, y, P, U)
    for i in range(B):
        single = grad_alpha(A[i], int(y[i]), P[i], U[i])
        assert np.max(np.abs(batched[i] - single)) < 1e-14
