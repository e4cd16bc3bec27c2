"""Instance-dependent permutation layers for training under label noise.

The library jointly learns a small softmax classifier and one learnable
permutation layer per training sample, so that mislabelled samples stop
dragging the classifier toward their noisy labels. A property-check harness
verifies the layer's theoretical behavior numerically, and a CLI ties
training, noise injection, sweeps, and the checks together.
"""

from .errors import (ConfigError, DomainError, OracleError, PermLLError,
                     TrainingError)

__all__ = [
    "ConfigError",
    "DomainError",
    "OracleError",
    "PermLLError",
    "TrainingError",
]

__version__ = "0.1.0"
