"""DP hyperparameter selection: grid of kernel candidates scored by
cross-validated SSE, one winner drawn through the exponential mechanism."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gp
from .data import Dataset
from .kernels import KernelSpec

# The test-placement term of the SSE sensitivity bound assumes per-point
# prediction errors no larger than 4 d in magnitude, giving (d + 4d)^2 - (4d)^2
# = 9 d^2 for relocating one record into a test fold.
ERROR_CLIP_FACTOR = 4.0
TEST_TERM_FACTOR = 9.0


@dataclass(frozen=True)
class CandidateScore:
    """Utility and sensitivity of one kernel candidate.

    utility is the negative SSE summed over folds; sensitivity bounds how
    much the utility can change when one record is modified.
    """

    utility: float
    sensitivity: float

    def __post_init__(self):
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")


@dataclass(frozen=True)
class HyperGrid:
    """A candidate grid plus the selection budget and fold settings."""

    candidates: tuple[KernelSpec, ...]
    folds: int = 100
    select_epsilon: float = 1.0
    test_fraction: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("candidate grid is empty")
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")
        if self.select_epsilon < 0:
            raise ValueError("select_epsilon must be non-negative")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")


@dataclass(frozen=True)
class SelectionResult:
    chosen_index: int
    chosen: KernelSpec
    scores: tuple[CandidateScore, ...]
    delta_u: float
    probabilities: np.ndarray


def monte_carlo_folds(
    n: int, n_folds: int, test_fraction: float, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random train/test splits drawn independently per fold."""
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ValueError(
            f"degenerate split: {n_test} test points from {n} rows "
            f"at fraction {test_fraction}"
        )
    folds = []
    for _ in range(n_folds):
        perm = rng.permutation(n)
        folds.append((perm[n_test:], perm[:n_test]))
    return folds


def sse_utility(
    dataset: Dataset,
    spec: KernelSpec,
    folds: int | list[tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator | None = None,
    test_fraction: float = 0.1,
) -> CandidateScore:
    """Cross-validated SSE utility and its sensitivity for one candidate.

    ``folds`` is either a fold count (splits are then drawn with ``rng``) or
    an explicit list of (train, test) index pairs, which is how candidates
    on a grid share identical splits.

    Per fold, the candidate is fitted on the train split and its summed
    squared test error accumulates into the (negative) utility.  The
    sensitivity combines a worst-case test-placement term with the largest
    train-placement terms: 9 d^2 covers a record landing in some test fold,
    and each of the K - 1 largest squared cloaking-column norms bounds the
    SSE shift from the record perturbing one training fold.
    """
    if isinstance(folds, int):
        if rng is None:
            raise ValueError("an rng is required when folds is a count")
        folds = monte_carlo_folds(dataset.n, folds, test_fraction, rng)
    d = dataset.d
    total_sse = 0.0
    fold_col_maxima = []
    for train_idx, test_idx in folds:
        if len(train_idx) == 0 or len(test_idx) == 0:
            raise ValueError("degenerate fold with an empty split")
        model = gp.fit(dataset.X[train_idx], dataset.y[train_idx], spec)
        pred = model.predict_mean(dataset.X[test_idx])
        residual = pred - dataset.y[test_idx]
        total_sse += float(residual @ residual)
        C = model.cloaking_matrix(dataset.X[test_idx])
        fold_col_maxima.append(float(np.max(np.einsum("ij,ij->j", C, C))))
    sensitivity = combine_fold_sensitivities(fold_col_maxima, d)
    return CandidateScore(utility=-total_sse, sensitivity=sensitivity)


def combine_fold_sensitivities(fold_col_maxima: list[float], d: float) -> float:
    """Total SSE sensitivity from per-fold worst-case column norms.

    The K - 1 largest fold maxima are kept: one fold at most holds the
    changed record in its test split (the 9 d^2 term), every other fold can
    hold it in the train split.
    """
    ordered = sorted(fold_col_maxima, reverse=True)
    train_terms = sum(ordered[: max(len(ordered) - 1, 0)])
    return TEST_TERM_FACTOR * d**2 + d**2 * train_terms


def exponential_mechanism(
    utilities: np.ndarray,
    sensitivity: float,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Draw an index with probability proportional to exp(eps u / (2 Delta))."""
    probabilities = selection_probabilities(utilities, sensitivity, epsilon)
    return int(rng.choice(probabilities.size, p=probabilities))


def selection_probabilities(
    utilities: np.ndarray, sensitivity: float, epsilon: float
) -> np.ndarray:
    """Exponential mechanism probabilities, max-subtracted for stability."""
    utilities = np.asarray(utilities, dtype=float).ravel()
    if utilities.size == 0:
        raise ValueError("no utilities to select from")
    if not sensitivity > 0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    scores = epsilon * utilities / (2.0 * sensitivity)
    scores -= scores.max()
    weights = np.exp(scores)
    return weights / weights.sum()


def select_hyperparameters(
    dataset: Dataset, grid: HyperGrid, rng: np.random.Generator
) -> SelectionResult:
    """Score every candidate on shared folds and draw one DP winner.

    All candidates see identical fold splits so utilities are comparable;
    the mechanism's sensitivity is the largest per-candidate sensitivity.
    """
    folds = monte_carlo_folds(dataset.n, grid.folds, grid.test_fraction, rng)
    scores = tuple(sse_utility(dataset, spec, folds) for spec in grid.candidates)
    utilities = np.array([s.utility for s in scores])
    delta_u = max(s.sensitivity for s in scores)
    probabilities = selection_probabilities(utilities, delta_u, grid.select_epsilon)
    index = int(rng.choice(probabilities.size, p=probabilities))
    return SelectionResult(
        chosen_index=index,
        chosen=grid.candidates[index],
        scores=scores,
        delta_u=delta_u,
        probabilities=probabilities,
    )
