"""Function-space DP release: perturb the whole posterior mean with a scaled
sample from the prior, calibrated through a norm bound on K^-1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import GPModel
from .kernels import KernelSpec, _as_matrix, chol_with_jitter
from .privacy import DPParams, ReleaseResult, c_delta


class NotDiagonallyDominantError(ValueError):
    """Raised when the Varah bound is requested for an ineligible matrix."""


@dataclass(frozen=True)
class RKHSRelease:
    """Calibration constants for one function-space release.

    sensitivity = d * bound_b and scale = sensitivity * c(delta) / epsilon.
    """

    dp: DPParams
    bound_b: float
    sensitivity: float
    scale: float

    def __post_init__(self):
        if self.bound_b < 0:
            raise ValueError("bound_b must be non-negative")


def bound_b(Kinv: np.ndarray, nonneg_kernel: bool = True) -> float:
    """Worst-case column sum bound used to calibrate the release scale.

    With ``nonneg_kernel`` the targets are assumed to live in [0, d] and the
    bound is the larger infinity norm of the positive parts of Kinv and
    -Kinv.  Without it the plain infinity norm of Kinv is used, which is
    valid for targets in any width-d interval but never smaller.
    """
    Kinv = np.asarray(Kinv, dtype=float)
    if Kinv.ndim != 2 or Kinv.shape[0] != Kinv.shape[1]:
        raise ValueError(f"Kinv must be square, got shape {Kinv.shape}")
    if not nonneg_kernel:
        return float(np.abs(Kinv).sum(axis=1).max())
    pos = np.clip(Kinv, 0.0, None).sum(axis=1).max()
    neg = np.clip(-Kinv, 0.0, None).sum(axis=1).max()
    return float(max(pos, neg))


def rkhs_release_constants(
    Kinv: np.ndarray, dp: DPParams, nonneg_kernel: bool = True
) -> RKHSRelease:
    """Derive the noise scale for a function-space release from K^-1."""
    b = bound_b(Kinv, nonneg_kernel=nonneg_kernel)
    sensitivity = dp.d * b
    scale = sensitivity * c_delta(dp.delta, "rkhs") / dp.epsilon
    return RKHSRelease(dp=dp, bound_b=b, sensitivity=sensitivity, scale=scale)


def sample_prior(spec: KernelSpec, Xstar, rng: np.random.Generator) -> np.ndarray:
    """One draw from the zero-mean prior at the test inputs.

    The covariance is the noise-free gram matrix of ``Xstar``; coincident
    test points therefore receive identical sample values.
    """
    Xstar = _as_matrix(Xstar)
    K = spec.gram(Xstar)
    L = chol_with_jitter(K, spec.variance)
    return L @ rng.standard_normal(Xstar.shape[0])


# release_rkhs refuses kernels whose variance is not 1: the calibration via
# bound_b assumes targets normalized into a unit-height band, and silently
# rescaling here would change the privacy guarantee.
_UNIT_VARIANCE_TOL = 1e-9


def release_rkhs(
    model: GPModel,
    Xstar,
    dp: DPParams,
    rng: np.random.Generator,
    nonneg_kernel: bool = True,
    noise_multiplier: float = 1.0,
) -> ReleaseResult:
    """DP posterior mean via a scaled prior sample added to the prediction.

    The caller must have normalized the problem so the kernel variance is 1
    and the targets were clipped to a width-``dp.d`` interval.  Setting
    ``noise_multiplier`` to anything but 1 voids the guarantee and is only
    meant for harness calibration tests; the result is flagged not private.
    """
    if abs(model.spec.variance - 1.0) > _UNIT_VARIANCE_TOL:
        raise ValueError(
            "release_rkhs requires a unit-variance kernel; normalize the "
            f"problem first (got variance {model.spec.variance})"
        )
    constants = rkhs_release_constants(
        model.inverse_gram(), dp, nonneg_kernel=nonneg_kernel
    )
    Xstar = _as_matrix(Xstar)
    mean = model.predict_mean(Xstar)
    sample = sample_prior(model.spec, Xstar, rng)
    applied = float(noise_multiplier) * constants.scale
    prior_std = np.sqrt(np.diag(model.spec.gram(Xstar)))
    values = mean + applied * sample
    return ReleaseResult(
        values=values,
        posterior_var=np.diag(model.predict_cov(Xstar)).copy(),
        noise_std=abs(applied) * prior_std,
        mechanism="rkhs",
        metadata={
            "epsilon": dp.epsilon,
            "delta": dp.delta,
            "d": dp.d,
            "c_delta": c_delta(dp.delta, "rkhs"),
            "bound_b": constants.bound_b,
            "sensitivity": constants.sensitivity,
            "scale": constants.scale,
            "noise_multiplier": float(noise_multiplier),
            "not_private": float(noise_multiplier) != 1.0,
        },
    )


def varah_bound(J: np.ndarray) -> float:
    """Upper bound on the infinity norm of J^-1 for diagonally dominant J.

    Delta_i = |J_ii| - sum_{j != i} |J_ij| must be positive for every row;
    the bound is max_i 1 / Delta_i.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"J must be square, got shape {J.shape}")
    absJ = np.abs(J)
    diag = np.diag(absJ)
    margins = 2.0 * diag - absJ.sum(axis=1)
    if np.any(margins <= 0):
        bad = int(np.argmin(margins))
        raise NotDiagonallyDominantError(
            f"row {bad} is not strictly diagonally dominant (margin {margins[bad]:g})"
        )
    return float((1.0 / margins).max())
