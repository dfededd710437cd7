"""Cloaking release: shape a multivariate Gaussian noise covariance to the
directions in which any single training target can move the predictions.

The noise covariance is M = sum_i lambda_i c_i c_i^T over the columns c_i of
the prediction sensitivity matrix C = K_* K^-1.  The weights lambda are
chosen by projected gradient descent to minimize log det M subject to the
masking constraints c_i^T M^-1 c_i <= 1, so protection is bought with as
little total noise as possible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import GPModel
from .kernels import _as_matrix
from .privacy import DPParams, ReleaseResult, c_delta

# Relative eigenvalue cutoff below which M is treated as rank deficient.
RCOND = 1e-10
# A column counts as outside the range of M only when its unprojected mass
# clears both thresholds: a share of the column itself (relative test) and
# the mass the rcond truncation can strand in discarded eigendirections
# (absolute test; at a feasible point that mass is below rcond * wmax).
_RANGE_TOL = 1e-3
_RANGE_ABS_FACTOR = 10.0


class CloakingConvergenceError(RuntimeError):
    """All optimizer restarts exhausted without a feasible solution."""

    def __init__(self, message: str, diagnostics: list[dict]):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class CloakingOptions:
    """Projected gradient descent settings for find_lambdas."""

    learning_rate: float = 0.05
    tol: float = 1e-5
    max_iter: int = 50_000
    restarts: int = 5
    feasibility_tol: float = 1e-3
    slack_tol: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class CloakingSolution:
    """Optimized noise covariance for one set of test inputs.

    delta_achieved is the largest Mahalanobis bound max_j c_j^T M^+ c_j; a
    converged solution has it within feasibility_tol of 1.  noise_factor is
    a p×k matrix F with F F^T = M, used to draw correlated noise samples.
    """

    C: np.ndarray
    lambdas: np.ndarray
    M: np.ndarray
    delta_achieved: float
    noise_factor: np.ndarray
    iterations: int
    restarts_used: int

    def noise_sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from N(0, M)."""
        return self.noise_factor @ rng.standard_normal(self.noise_factor.shape[1])


def _as_cloaking_inputs(lambdas, C):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"C must be a 2-d matrix, got shape {C.shape}")
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size != C.shape[1]:
        raise ValueError(
            f"got {lam.size} lambdas for {C.shape[1]} columns of C"
        )
    if np.any(lam < 0):
        raise ValueError("lambdas must be non-negative")
    return lam, C


def calc_M(lambdas, C) -> np.ndarray:
    """Noise covariance: the lambda-weighted sum of column outer products."""
    lam, C = _as_cloaking_inputs(lambdas, C)
    M = (C * lam) @ C.T
    return 0.5 * (M + M.T)


def _spectral_forms(lam: np.ndarray, C: np.ndarray, rcond: float):
    """Eigendecompose M = C diag(lam) C^T and evaluate, for every column c_j,
    the pseudo-inverse quadratic form q_j = c_j^T M^+ c_j together with the
    squared norm of the part of c_j lying outside M's numerical range.

    Returns (q, out_of_range_sq, w_kept, V_kept).
    """
    M = (C * lam) @ C.T
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    wmax = w[-1] if w.size else 0.0
    col_sq = np.einsum("ij,ij->j", C, C)
    if wmax <= 0.0:
        return np.zeros(C.shape[1]), col_sq, np.empty(0), np.empty((C.shape[0], 0))
    keep = w > rcond * wmax
    w_kept = w[keep]
    V_kept = V[:, keep]
    B = V_kept.T @ C
    q = np.einsum("ij,ij->j", B / w_kept[:, None], B)
    in_range_sq = np.einsum("ij,ij->j", B, B)
    out_sq = np.clip(col_sq - in_range_sq, 0.0, None)
    return q, out_sq, w_kept, V_kept


def calc_delta(lambdas, C, rcond: float = RCOND) -> float:
    """Largest Mahalanobis bound max_j c_j^T M^+ c_j.

    Columns with a component outside the range of M cannot be cloaked by
    noise drawn from N(0, M); such columns make the result +inf.  Residual
    components at the truncation level of the pseudo-inverse are treated as
    covered, otherwise every numerically low-rank M would report infinity.
    """
    lam, C = _as_cloaking_inputs(lambdas, C)
    q, out_sq, w_kept, _ = _spectral_forms(lam, C, rcond)
    wmax = float(w_kept.max()) if w_kept.size else 0.0
    col_sq = np.einsum("ij,ij->j", C, C)
    uncovered = (
        (col_sq > 0.0)
        & (out_sq > (_RANGE_TOL**2) * col_sq)
        & (out_sq > _RANGE_ABS_FACTOR * rcond * wmax)
    )
    if np.any(uncovered):
        return float("inf")
    return float(q.max()) if q.size else 0.0


def grad_lambda(lambdas, C, rcond: float = RCOND) -> np.ndarray:
    """Gradient of the penalized log-volume objective: 1 - c_j^T M^+ c_j.

    Positive components push unneeded lambdas down; a component vanishes
    exactly when the corresponding masking constraint is active.
    """
    lam, C = _as_cloaking_inputs(lambdas, C)
    q, _, _, _ = _spectral_forms(lam, C, rcond)
    return 1.0 - q


def _optimize(C: np.ndarray, opts: CloakingOptions, rng: np.random.Generator):
    """Projected gradient descent with random restarts.

    Returns (lambdas, iterations, attempts_used) for the first attempt that
    satisfies the feasibility and slackness invariants.
    """
    if opts.max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n = C.shape[1]
    attempts: list[dict] = []
    for attempt in range(max(1, opts.restarts)):
        lam = rng.uniform(0.1, 0.9, size=n)
        tol = opts.tol
        step = np.inf
        delta = np.inf
        slack = np.inf
        iteration = 0
        while iteration < opts.max_iter:
            iteration += 1
            q, _, _, _ = _spectral_forms(lam, C, RCOND)
            new = np.maximum(lam - opts.learning_rate * (1.0 - q), 0.0)
            step = float(np.max(np.abs(new - lam)))
            lam = new
            if step >= tol:
                continue
            delta = calc_delta(lam, C)
            slack = float(np.max(np.abs(lam * (q - 1.0))))
            if delta <= 1.0 + opts.feasibility_tol and slack <= opts.slack_tol:
                return lam, iteration, attempt + 1
            # Step-converged but infeasible: keep descending with a finer
            # tolerance instead of wasting the progress made so far.
            tol *= 0.25
            if tol < 1e-14:
                break
        attempts.append(
            {
                "attempt": attempt,
                "iterations": iteration,
                "last_step": step,
                "delta_achieved": delta,
                "slackness": slack,
            }
        )
    raise CloakingConvergenceError(
        f"no feasible lambdas after {len(attempts)} attempts "
        f"(best delta {min(a['delta_achieved'] for a in attempts):g})",
        diagnostics=attempts,
    )


def _validated_C(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.size == 0:
        raise ValueError(f"C must be a non-empty 2-d matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("C contains non-finite entries")
    if not np.any(C):
        raise ValueError("C is identically zero; there is nothing to cloak")
    return C


def find_lambdas(
    C,
    opts: CloakingOptions | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Optimize the noise-shaping weights by projected gradient descent.

    Each attempt starts from lambdas ~ Uniform(0.1, 0.9), steps against the
    gradient with a fixed learning rate, and clamps at zero.  When the step
    size drops below tolerance the candidate is accepted only if it meets
    the feasibility and complementary slackness invariants; otherwise the
    tolerance is tightened and descent continues.  Non-converging attempts
    are retried from fresh random initializations.
    """
    opts = opts or CloakingOptions()
    C = _validated_C(C)
    rng = rng if rng is not None else np.random.default_rng(opts.seed)
    lam, _, _ = _optimize(C, opts, rng)
    return lam


def solve_cloaking(
    C,
    opts: CloakingOptions | None = None,
    rng: np.random.Generator | None = None,
) -> CloakingSolution:
    """Run the optimizer and package the result with its noise factor."""
    opts = opts or CloakingOptions()
    C = _validated_C(C)
    rng = rng if rng is not None else np.random.default_rng(opts.seed)
    lam, iterations, attempts_used = _optimize(C, opts, rng)
    M = calc_M(lam, C)
    delta = calc_delta(lam, C)
    w, V = np.linalg.eigh(M)
    wmax = w[-1] if w.size else 0.0
    keep = w > RCOND * wmax if wmax > 0 else np.zeros_like(w, dtype=bool)
    factor = V[:, keep] * np.sqrt(w[keep])
    return CloakingSolution(
        C=C,
        lambdas=lam,
        M=M,
        delta_achieved=delta,
        noise_factor=factor,
        iterations=iterations,
        restarts_used=attempts_used - 1,
    )


def release_cloaking(
    model: GPModel,
    Xstar,
    dp: DPParams,
    rng: np.random.Generator,
    solution: CloakingSolution | None = None,
    opts: CloakingOptions | None = None,
    noise_multiplier: float = 1.0,
) -> ReleaseResult:
    """DP predictions with correlated noise shaped by the cloaking matrix.

    The release is predict_mean + (d * sqrt(delta_achieved) * c(delta) /
    epsilon) * z with z ~ N(0, M).  The Mahalanobis bound enters under a
    square root; at convergence delta_achieved is 1 so this agrees with
    scaling by the bound itself, and the report carries both values.

    A precomputed ``solution`` (from solve_cloaking on the same model and
    test inputs) skips re-optimization for repeated releases.  Setting
    ``noise_multiplier`` away from 1 voids the guarantee and flags the
    result as not private.
    """
    Xstar = _as_matrix(Xstar)
    if Xstar.shape[0] < 1:
        raise ValueError("at least one test input is required")
    if solution is None:
        solution = solve_cloaking(model.cloaking_matrix(Xstar), opts, rng)
    mean = model.predict_mean(Xstar)
    factor = dp.d * np.sqrt(solution.delta_achieved) * c_delta(dp.delta, "cloaking") / dp.epsilon
    applied = float(noise_multiplier) * factor
    values = mean + applied * solution.noise_sample(rng)
    noise_std = abs(applied) * np.sqrt(np.clip(np.diag(solution.M), 0.0, None))
    return ReleaseResult(
        values=values,
        posterior_var=np.diag(model.predict_cov(Xstar)).copy(),
        noise_std=noise_std,
        mechanism="cloaking",
        metadata={
            "epsilon": dp.epsilon,
            "delta": dp.delta,
            "d": dp.d,
            "c_delta": c_delta(dp.delta, "cloaking"),
            "delta_achieved": solution.delta_achieved,
            "delta_applied_as": "sqrt(delta_achieved)",
            "noise_scale_factor": factor,
            "lambda_sum": float(solution.lambdas.sum()),
            "noise_multiplier": float(noise_multiplier),
            "not_private": float(noise_multiplier) != 1.0,
        },
    )
