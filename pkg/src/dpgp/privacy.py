"""Shared differential privacy primitives: parameters, Gaussian constants,
and the release result container returned by every mechanism."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Tail-bound constants for the two Gaussian mechanism variants.  The scalar
# variant calibrates each coordinate independently; the correlated variant
# covers a full vector release drawn from one multivariate Gaussian.
_C_DELTA_LOG_ARG = {"rkhs": 1.25, "cloaking": 2.0}


def c_delta(delta: float, variant: str) -> float:
    """Gaussian mechanism constant c(delta) for the given release variant.

    variant "rkhs":      sqrt(2 * ln(1.25 / delta))
    variant "cloaking":  sqrt(2 * ln(2 / delta))

    Valid for delta small enough that the log argument exceeds 1.
    """
    if variant not in _C_DELTA_LOG_ARG:
        raise ValueError(f"unknown c(delta) variant {variant!r}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    arg = _C_DELTA_LOG_ARG[variant] / delta
    if arg <= 1.0:
        raise ValueError(f"delta={delta} too large for variant {variant!r}")
    return math.sqrt(2.0 * math.log(arg))


@dataclass(frozen=True)
class DPParams:
    """Privacy budget plus the output sensitivity width.

    ``d`` is the width of the interval the outputs were clipped into; a
    single individual can move their own target by at most d.
    """

    epsilon: float
    delta: float
    d: float

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not np.isfinite(self.d) or self.d <= 0:
            raise ValueError(f"sensitivity width d must be positive, got {self.d}")


@dataclass(frozen=True)
class ReleaseResult:
    """A differentially private vector release plus its bookkeeping.

    values:        the DP predictions at the test inputs
    posterior_var: non-private posterior variance of the latent function
    noise_std:     standard deviation of the DP noise actually added,
                   per test point
    mechanism:     which release mechanism produced the values
    metadata:      mechanism constants (scale, bounds, c(delta), budget);
                   ``not_private`` is True whenever the noise was rescaled
                   away from its calibrated level
    """

    values: np.ndarray
    posterior_var: np.ndarray
    noise_std: np.ndarray
    mechanism: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("values", "posterior_var", "noise_std"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"release field {name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.noise_std < 0):
            raise ValueError("noise_std must be non-negative")

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "posterior_var": self.posterior_var.tolist(),
            "noise_std": self.noise_std.tolist(),
            "mechanism": self.mechanism,
            "metadata": dict(self.metadata),
        }
