"""Per-sample permutation layers.

A layer for one sample is the convex combination of the c single-swap
permutation matrices that involve the sample's (noisy) label, with mixing
weights softmax(alpha). The dense c-by-c matrix is only ever built for tests;
applying the layer and differentiating through it use O(c) closed forms.

Class indices are 0-based throughout the library; the 1-based convention of
the file formats is translated at the parsers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .numerics import require_finite, softmax, softmax_jacobian_vec


@dataclass
class AlphaTable:
    """Learnable permutation parameters for all N training samples.

    alpha: (N, c) raw logits; noisy_label: (N,) 0-based class indices.
    """

    alpha: np.ndarray
    noisy_label: np.ndarray

    def __post_init__(self):
        self.alpha = require_finite(self.alpha, "alpha table")
        self.noisy_label = np.asarray(self.noisy_label, dtype=np.int64)
        if self.alpha.ndim != 2 or self.alpha.shape[0] != self.noisy_label.shape[0]:
            raise DomainError("alpha table and noisy labels disagree in length")
        if self.alpha.shape[1] < 2:
            raise DomainError("need at least 2 classes")
        if np.any(self.noisy_label < 0) or np.any(self.noisy_label >= self.c):
            raise DomainError("noisy label out of range")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def c(self) -> int:
        return self.alpha.shape[1]

    def mix(self) -> np.ndarray:
        """softmax(alpha) for every row."""
        return softmax(self.alpha)


@dataclass
class PermApplyResult:
    output: np.ndarray  # the permuted vector
    mix: np.ndarray     # the softmax weights used


def _check_index(y: int, c: int) -> int:
    y = int(y)
    if not 0 <= y < c:
        raise DomainError(f"class index {y} out of range for c={c}")
    return y


def swap_matrix(a: int, b: int, c: int) -> np.ndarray:
    """Identity with rows a and b exchanged; a == b gives the identity."""
    a = _check_index(a, c)
    b = _check_index(b, c)
    P = np.eye(c)
    P[[a, b]] = P[[b, a]]
    return P


def build_dense(alpha, y_tilde: int) -> np.ndarray:
    """Explicit c-by-c layer matrix; doubly stochastic. Test/reference path only."""
    alpha = require_finite(alpha, "alpha")
    c = alpha.shape[-1]
    y = _check_index(y_tilde, c)
    s = softmax(alpha)
    out = np.zeros((c, c))
    for i in range(c):
        out += s[i] * swap_matrix(y, i, c)
    return out


def _apply_mix(s: np.ndarray, y: int, p: np.ndarray) -> np.ndarray:
    # out[j] = (1 - s_j) p_j + s_j p_y for j != y; out[y] = s . p
    out = (1.0 - s) * p + s * p[y]
    out[y] = s @ p
    return out


def apply_to_vec(alpha, y_tilde: int, p) -> PermApplyResult:
    """Apply the layer to a probability vector in O(c).

    Equals build_dense(alpha, y_tilde) @ p; preserves the simplex.
    """
    alpha = require_finite(alpha, "alpha")
    p = require_finite(p, "probability vector")
    y = _check_index(y_tilde, alpha.shape[-1])
    if p.shape != alpha.shape:
        raise DomainError("alpha and vector length mismatch")
    s = softmax(alpha)
    return PermApplyResult(output=_apply_mix(s, y, p), mix=s)


def apply_to_label(alpha, y_tilde: int) -> np.ndarray:
    """Apply the layer to the one-hot noisy label; equals softmax(alpha) exactly."""
    alpha = require_finite(alpha, "alpha")
    c = alpha.shape[-1]
    y = _check_index(y_tilde, c)
    s = softmax(alpha)
    e = np.zeros(c)
    e[y] = 1.0
    out = _apply_mix(s, y, e)
    assert np.max(np.abs(out - s)) <= 1e-12
    return out


def grad_alpha(alpha, y_tilde: int, p, upstream) -> np.ndarray:
    """Gradient of upstream . (layer @ p) with respect to alpha.

    Chain rule through the mixing weights: with w_i = upstream . P(y,i) p,
    the gradient is J_S(alpha)^T w. Lies in the softmax tangent space
    (entries sum to 0) and vanishes when p is uniform.
    """
    alpha = require_finite(alpha, "alpha")
    p = require_finite(p, "vector")
    u = require_finite(upstream, "upstream")
    y = _check_index(y_tilde, alpha.shape[-1])
    w = (u @ p) + u[y] * (p - p[y]) + u * (p[y] - p)
    return softmax_jacobian_vec(alpha, w)


def init_alpha(noisy_labels, i_alpha: float, c: int) -> AlphaTable:
    """Rows with softmax mass i_alpha on the noisy label, rest spread uniformly.

    Canonical raw form: ln(i_alpha) on the label coordinate and
    ln((1 - i_alpha)/(c - 1)) elsewhere (the softmax gauge is fixed this way
    for reproducibility).
    """
    noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
    c = int(c)
    if not 1.0 / c < i_alpha < 1.0:
        raise ConfigError(f"i_alpha must lie in (1/c, 1); got {i_alpha} with c={c}")
    if np.any(noisy_labels < 0) or np.any(noisy_labels >= c):
        raise DomainError("noisy label out of range")
    n = noisy_labels.shape[0]
    off = np.log((1.0 - i_alpha) / (c - 1))
    alpha = np.full((n, c), off)
    alpha[np.arange(n), noisy_labels] = np.log(i_alpha)
    return AlphaTable(alpha=alpha, noisy_label=noisy_labels)


def permutation_correct(alpha, clean_label: int) -> bool:
    """True iff the unique argmax of alpha equals the clean label; ties are incorrect."""
    alpha = require_finite(alpha, "alpha")
    y = _check_index(clean_label, alpha.shape[-1])
    top = alpha.max()
    if np.count_nonzero(alpha == top) != 1:
        return False
    return int(np.argmax(alpha)) == y


def permutation_accuracy(table: AlphaTable, clean_labels) -> float:
    """Percentage of rows whose unique argmax equals the clean label."""
    clean = np.asarray(clean_labels, dtype=np.int64)
    if clean.shape[0] != table.n:
        raise DomainError("clean labels and alpha table disagree in length")
    a = table.alpha
    top = a.max(axis=1, keepdims=True)
    unique = (a == top).sum(axis=1) == 1
    correct = unique & (np.argmax(a, axis=1) == clean)
    return 100.0 * float(np.mean(correct))


# ---------------------------------------------------------------------------
# Batched closed forms (training hot path). S, P, U are (B, c); y is (B,).

def apply_mix_batch(S: np.ndarray, y: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Rowwise layer application with per-row mixing weights and labels."""
    b = np.arange(y.shape[0])
    py = P[b, y][:, None]
    out = (1.0 - S) * P + S * py
    out[b, y] = np.einsum("bc,bc->b", S, P)
    return out


def mix_grad_batch(A: np.ndarray, y: np.ndarray, P: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Rowwise grad_alpha: gradient of U . (layer @ P) wrt each row of A."""
    b = np.arange(y.shape[0])
    py = P[b, y][:, None]
    uy = U[b, y][:, None]
    dot = np.einsum("bc,bc->b", U, P)[:, None]
    W = dot + uy * (P - py) + U * (py - P)
    S = softmax(A)
    return S * (W - np.sum(S * W, axis=-1, keepdims=True))
