"""Small dense-vector toolbox shared by every other module.

Everything here works on plain float64 numpy arrays. Functions accept either a
single vector of length c or a batch shaped (B, c); reductions are always over
the last axis.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DomainError, OracleError

DEFAULT_FD_STEP = 1e-6
SIMPLEX_ATOL = 1e-9


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator. Equal seeds give identical draw sequences
    across runs and platforms; never share one generator between threads."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def require_finite(z, name="input") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError(f"{name} contains non-finite entries")
    return z


def check_prob_vec(p, name="probability vector", atol=SIMPLEX_ATOL) -> np.ndarray:
    """Validate membership in the probability simplex (within atol)."""
    p = require_finite(p, name)
    if np.any(p < -atol):
        raise DomainError(f"{name} has negative entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > atol):
        raise DomainError(f"{name} does not sum to 1")
    return p


def softmax(z) -> np.ndarray:
    """Numerically stable softmax (max-subtraction) over the last axis."""
    z = require_finite(z, "softmax input")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_jacobian_vec(z, v) -> np.ndarray:
    """J_S(z) @ v where (J_S)_ij = S_i (delta_ij - S_j).

    The Jacobian is symmetric, so this is also J_S(z)^T @ v. Output entries
    sum to zero (the softmax lives on the simplex).
    """
    v = require_finite(v, "jacobian direction")
    s = softmax(z)
    return s * (v - np.sum(s * v, axis=-1, keepdims=True))


def finite_difference_grad(f: Callable[[np.ndarray], float], z, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient oracle: (f(z+h e_i) - f(z-h e_i)) / 2h."""
    z = require_finite(z, "finite-difference point")
    if h <= 0:
        raise DomainError("finite-difference step must be positive")
    grad = np.empty_like(z)
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        fp = f(zp)
        fm = f(zm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite evaluation at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def confidence(p) -> float:
    """Prediction confidence p_max - p_min, in [0, 1] for a valid ProbVec."""
    p = check_prob_vec(p, "confidence input")
    return float(p.max(axis=-1) - p.min(axis=-1))


def confidence_batch(P) -> np.ndarray:
    """Rowwise p_max - p_min without simplex validation (hot path)."""
    P = np.asarray(P, dtype=np.float64)
    return P.max(axis=-1) - P.min(axis=-1)
