"""Small softmax classifiers with hand-derived gradients.

Two architectures: multinomial logistic regression ("linear") and a
one-hidden-layer rectifier MLP ("mlp"). No autodiff framework: the backward
passes are explicit and every one of them is finite-difference checked in the
test suite. The rectifier subgradient at 0 is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import require_finite, softmax


@dataclass
class Classifier:
    arch: str                 # "linear" | "mlp"
    m: int
    c: int
    W1: np.ndarray            # linear: (c, m); mlp: (hidden, m)
    b1: np.ndarray
    W2: np.ndarray | None = None   # mlp only: (c, hidden)
    b2: np.ndarray | None = None
    hidden: int = 0

    def param_arrays(self) -> dict[str, np.ndarray]:
        out = {"W1": self.W1, "b1": self.b1}
        if self.arch == "mlp":
            out["W2"] = self.W2
            out["b2"] = self.b2
        return out


@dataclass
class GradientSet:
    """Per-parameter gradients, shape-congruent with the owning Classifier."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray | None = None
    b2: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"W1": self.W1, "b1": self.b1}
        if self.W2 is not None:
            out["W2"] = self.W2
            out["b2"] = self.b2
        return out

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            W1=self.W1 * factor,
            b1=self.b1 * factor,
            W2=None if self.W2 is None else self.W2 * factor,
            b2=None if self.b2 is None else self.b2 * factor,
        )


def zero_grads(model: Classifier) -> GradientSet:
    return GradientSet(
        W1=np.zeros_like(model.W1),
        b1=np.zeros_like(model.b1),
        W2=None if model.W2 is None else np.zeros_like(model.W2),
        b2=None if model.b2 is None else np.zeros_like(model.b2),
    )


def init_params(arch: str, m: int, c: int, rng: np.random.Generator,
                hidden: int = 32) -> Classifier:
    """Uniform(-1, 1)/sqrt(fan_in) weights, zero biases; deterministic per rng."""
    if arch == "linear":
        W1 = rng.uniform(-1.0, 1.0, size=(c, m)) / np.sqrt(m)
        return Classifier("linear", m, c, W1, np.zeros(c))
    if arch == "mlp":
        W1 = rng.uniform(-1.0, 1.0, size=(hidden, m)) / np.sqrt(m)
        W2 = rng.uniform(-1.0, 1.0, size=(c, hidden)) / np.sqrt(hidden)
        return Classifier("mlp", m, c, W1, np.zeros(hidden), W2, np.zeros(c), hidden)
    raise DomainError(f"unknown architecture {arch!r}")


def forward_batch(model: Classifier, X: np.ndarray):
    """Batched forward pass. Returns (probabilities (B, c), cache for backward)."""
    X = require_finite(X, "features")
    if X.ndim != 2 or X.shape[1] != model.m:
        raise DomainError(f"expected features of shape (B, {model.m})")
    if model.arch == "linear":
        Z = X @ model.W1.T + model.b1
        return softmax(Z), {"X": X}
    H = np.maximum(X @ model.W1.T + model.b1, 0.0)
    Z = H @ model.W2.T + model.b2
    return softmax(Z), {"X": X, "H": H}


def backward_batch(model: Classifier, cache: dict, P: np.ndarray,
                   U: np.ndarray) -> GradientSet:
    """Gradients summed over the batch, given per-row upstream U on the
    probability outputs P. Chains through the softmax head explicitly."""
    # dZ = J_S(z)^T u, rowwise
    dZ = P * (U - np.sum(P * U, axis=-1, keepdims=True))
    X = cache["X"]
    if model.arch == "linear":
        return GradientSet(W1=dZ.T @ X, b1=dZ.sum(axis=0))
    H = cache["H"]
    gW2 = dZ.T @ H
    gb2 = dZ.sum(axis=0)
    dH = dZ @ model.W2
    dH = np.where(H > 0.0, dH, 0.0)
    return GradientSet(W1=dH.T @ X, b1=dH.sum(axis=0), W2=gW2, b2=gb2)


def forward(model: Classifier, x) -> np.ndarray:
    """Single-sample prediction; strictly interior ProbVec (softmax head)."""
    x = require_finite(x, "features")
    if x.shape != (model.m,):
        raise DomainError(f"expected a feature vector of length {model.m}")
    P, _ = forward_batch(model, x[None, :])
    return P[0]


def backward(model: Classifier, x, upstream) -> GradientSet:
    """Single-sample parameter gradients for upstream on the probability output."""
    x = require_finite(x, "features")
    u = require_finite(upstream, "upstream")
    if x.shape != (model.m,) or u.shape != (model.c,):
        raise DomainError("dimension mismatch in backward")
    P, cache = forward_batch(model, x[None, :])
    return backward_batch(model, cache, P, u[None, :])


def predict_batch(model: Classifier, X: np.ndarray) -> np.ndarray:
    """Argmax class predictions; the permutation layer never appears here."""
    P, _ = forward_batch(model, X)
    return np.argmax(P, axis=1)


def accuracy(model: Classifier, X: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict_batch(model, X) == np.asarray(labels)))
