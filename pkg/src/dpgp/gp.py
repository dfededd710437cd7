"""Exact Gaussian process regression on top of a Cholesky factorization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import KernelSpec, _as_matrix, chol_with_jitter


@dataclass(frozen=True)
class GPModel:
    """A fitted GP regressor.

    Stores the training data together with the lower Cholesky factor ``L`` of
    K = gram(X) + noise_variance * I and the precomputed weights
    alpha = K^-1 y, so that predictions are cheap to evaluate repeatedly.
    """

    X: np.ndarray
    y: np.ndarray
    spec: KernelSpec
    chol_lower: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def predict_mean(self, Xstar) -> np.ndarray:
        """Posterior mean at the test inputs: K_* alpha."""
        Ks = self.spec.cross(Xstar, self.X)
        return Ks @ self.alpha

    def predict_cov(self, Xstar) -> np.ndarray:
        """Posterior covariance of the latent function at the test inputs."""
        Xstar = _as_matrix(Xstar)
        Ks = self.spec.cross(Xstar, self.X)
        Kss = self.spec.gram(Xstar)
        V = solve_triangular(self.chol_lower, Ks.T, lower=True)
        cov = Kss - V.T @ V
        return 0.5 * (cov + cov.T)

    def cloaking_matrix(self, Xstar) -> np.ndarray:
        """Sensitivity of the posterior mean to the training targets.

        Returns C = K_* K^-1 with shape (p, n); column j is the direction in
        which all p predictions move when training target j is perturbed by
        one unit.
        """
        Ks = self.spec.cross(Xstar, self.X)
        return cho_solve((self.chol_lower, True), Ks.T).T

    def inverse_gram(self) -> np.ndarray:
        """Dense K^-1 where K is the noisy training covariance."""
        eye = np.eye(self.n)
        Kinv = cho_solve((self.chol_lower, True), eye)
        return 0.5 * (Kinv + Kinv.T)


def fit(X, y, spec: KernelSpec) -> GPModel:
    """Fit an exact GP regressor with the given kernel settings."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError(
            f"got {X.shape[0]} input rows but {y.size} targets"
        )
    if X.shape[0] == 0:
        raise ValueError("cannot fit a GP on an empty dataset")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("training data must be finite")
    K = spec.gram_with_noise(X)
    L = chol_with_jitter(K, spec.variance)
    alpha = cho_solve((L, True), y)
    return GPModel(X=X, y=y, spec=spec, chol_lower=L, alpha=alpha)
