"""Loss functions on the probability simplex, with gradients in both arguments.

Each loss carries two flags: whether it vanishes exactly iff its arguments are
equal (the collapse analysis needs this), and whether its prediction-gradient
1-norm is bounded on the low-confidence region p_max - p_min < 1/c. For the
squared L2 loss the bound constant is analytic (||2(p-q)||_1 <= 4); for
cross-entropy and KL it is established empirically by measure_grad_bound and
must be labelled as measured, never as a derived constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .numerics import check_prob_vec, confidence_batch, make_rng, softmax

# Clamp inside log terms; keeps CE/KL finite at the simplex boundary.
EPS = 1e-12


@dataclass(frozen=True)
class LossFn:
    kind: str
    satisfies_assumption1: bool   # loss == 0 iff p == q
    satisfies_assumption2: bool   # bounded grad 1-norm at low confidence
    grad_bound_M: float | None    # analytic constant when known


CROSS_ENTROPY = LossFn("cross_entropy", False, True, None)
KL_DIVERGENCE = LossFn("kl_divergence", True, True, None)
SQUARED_L2 = LossFn("squared_l2", True, True, 4.0)

_BY_NAME = {f.kind: f for f in (CROSS_ENTROPY, KL_DIVERGENCE, SQUARED_L2)}


def get_loss(name: str) -> LossFn:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ConfigError(f"unknown loss {name!r}; choose from {sorted(_BY_NAME)}") from None


def _clip(p: np.ndarray) -> np.ndarray:
    return np.clip(p, EPS, None)


def loss_batch(fn: LossFn, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Rowwise loss without simplex validation (hot path). P is the prediction."""
    if fn.kind == "squared_l2":
        return np.sum((P - Q) ** 2, axis=-1)
    if fn.kind == "cross_entropy":
        return -np.sum(Q * np.log(_clip(P)), axis=-1)
    if fn.kind == "kl_divergence":
        return np.sum(P * (np.log(_clip(P)) - np.log(_clip(Q))), axis=-1)
    raise ConfigError(f"unknown loss kind {fn.kind!r}")


def grad_p_batch(fn: LossFn, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Rowwise gradient with respect to the prediction argument."""
    if fn.kind == "squared_l2":
        return 2.0 * (P - Q)
    if fn.kind == "cross_entropy":
        return -Q / _clip(P)
    if fn.kind == "kl_divergence":
        return np.log(_clip(P)) - np.log(_clip(Q)) + 1.0
    raise ConfigError(f"unknown loss kind {fn.kind!r}")


def grad_q_batch(fn: LossFn, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Rowwise gradient with respect to the target argument."""
    if fn.kind == "squared_l2":
        return -2.0 * (P - Q)
    if fn.kind == "cross_entropy":
        return -np.log(_clip(P))
    if fn.kind == "kl_divergence":
        return -P / _clip(Q)
    raise ConfigError(f"unknown loss kind {fn.kind!r}")


def loss(fn: LossFn, p, q) -> float:
    p = check_prob_vec(p, "prediction")
    q = check_prob_vec(q, "target")
    if p.shape != q.shape:
        raise DomainError("prediction and target length mismatch")
    return float(loss_batch(fn, p, q))


def grad_p(fn: LossFn, p, q) -> np.ndarray:
    p = check_prob_vec(p, "prediction")
    q = check_prob_vec(q, "target")
    if p.shape != q.shape:
        raise DomainError("prediction and target length mismatch")
    return grad_p_batch(fn, p, q)


def grad_q(fn: LossFn, p, q) -> np.ndarray:
    p = check_prob_vec(p, "prediction")
    q = check_prob_vec(q, "target")
    if p.shape != q.shape:
        raise DomainError("prediction and target length mismatch")
    return grad_q_batch(fn, p, q)


def assumption1_holds(fn: LossFn, trials: int, rng: np.random.Generator) -> bool:
    """Empirically probe loss(p,p) == 0 and loss(p,q) > 0 for p != q."""
    if trials < 1:
        raise ConfigError("need at least one trial")
    for _ in range(trials):
        c = int(rng.integers(2, 8))
        p = softmax(rng.standard_normal(c))
        q = softmax(rng.standard_normal(c))
        if loss(fn, p, p) > 1e-12:
            return False
        if np.max(np.abs(p - q)) > 1e-6 and loss(fn, p, q) <= 0.0:
            return False
    return True


def sample_low_confidence(c: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n simplex points with confidence strictly below 1/c (rejection sampling)."""
    out = np.empty((n, c))
    filled = 0
    scale = 0.5 / c
    while filled < n:
        cand = softmax(rng.standard_normal((2 * (n - filled) + 8, c)) * scale)
        keep = cand[confidence_batch(cand) < 1.0 / c]
        take = keep[: n - filled]
        out[filled : filled + take.shape[0]] = take
        filled += take.shape[0]
    return out


def measure_grad_bound(fn: LossFn, c: int, trials: int = 20000, seed: int = 0,
                       headroom: float = 1.05) -> float:
    """Empirical bound on ||grad_p loss||_1 over the low-confidence region.

    Sweeps random low-confidence predictions against both one-hot and interior
    targets and returns the largest observed 1-norm times a small headroom
    factor. This is a measured constant, not a derived one.
    """
    if not fn.satisfies_assumption2:
        raise ConfigError(f"{fn.kind} is not flagged as gradient-bounded")
    rng = make_rng(seed)
    P = sample_low_confidence(c, trials, rng)
    half = trials // 2
    Q = np.zeros((trials, c))
    Q[np.arange(half), rng.integers(0, c, size=half)] = 1.0
    Q[half:] = softmax(rng.standard_normal((trials - half, c)))
    norms = np.abs(grad_p_batch(fn, P, Q)).sum(axis=-1)
    return float(norms.max() * headroom)
