"""Exponentiated-quadratic covariance kernels and Gram matrix helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


def _as_matrix(X) -> np.ndarray:
    """Coerce inputs to a 2-d float array, treating a 1-d vector as a column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"inputs must be a 2-d array, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class KernelSpec:
    """Anisotropic exponentiated-quadratic kernel plus iid observation noise.

    k(x, x') = variance * exp(-0.5 * sum_d ((x_d - x'_d) / lengthscales[d])^2)

    ``noise_variance`` is the variance of the iid noise added to the diagonal
    of the training covariance; it is not part of the kernel function itself.
    """

    variance: float
    lengthscales: np.ndarray
    noise_variance: float = 0.0
    family: str = "eq"

    def __post_init__(self):
        if self.family != "eq":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be finite and positive")
        if not np.isfinite(self.variance) or self.variance <= 0:
            raise ValueError("variance must be finite and positive")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ValueError("noise_variance must be finite and non-negative")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def input_dim(self) -> int:
        return self.lengthscales.size

    def _scaled(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(
                f"input dimension {X.shape[1]} does not match "
                f"{self.input_dim} lengthscales"
            )
        return X / self.lengthscales

    def eval(self, x1, x2) -> float:
        """Kernel value for a single pair of points."""
        a = self._scaled(np.atleast_2d(np.asarray(x1, dtype=float)))
        b = self._scaled(np.atleast_2d(np.asarray(x2, dtype=float)))
        if a.shape[0] != 1 or b.shape[0] != 1:
            raise ValueError("eval expects single points; use cross for batches")
        r2 = float(np.sum((a[0] - b[0]) ** 2))
        return self.variance * float(np.exp(-0.5 * r2))

    def gram(self, X) -> np.ndarray:
        """Noise-free covariance matrix of ``X`` against itself."""
        Z = self._scaled(X)
        D2 = cdist(Z, Z, metric="sqeuclidean")
        K = self.variance * np.exp(-0.5 * D2)
        return 0.5 * (K + K.T)

    def gram_with_noise(self, X) -> np.ndarray:
        """Training covariance: gram(X) + noise_variance * I."""
        K = self.gram(X)
        K[np.diag_indices_from(K)] += self.noise_variance
        return K

    def cross(self, Xstar, X) -> np.ndarray:
        """Covariance of test inputs against training inputs, shape (p, n)."""
        A = self._scaled(Xstar)
        B = self._scaled(X)
        return self.variance * np.exp(-0.5 * cdist(A, B, metric="sqeuclidean"))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "variance": self.variance,
            "lengthscales": [float(v) for v in self.lengthscales],
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        return cls(
            variance=float(data["variance"]),
            lengthscales=np.asarray(data["lengthscales"], dtype=float),
            noise_variance=float(data.get("noise_variance", 0.0)),
            family=data.get("family", "eq"),
        )


# Relative jitter applied once when a covariance factorization fails.
JITTER_FACTOR = 1e-8


def chol_with_jitter(K: np.ndarray, ref_variance: float) -> np.ndarray:
    """Lower Cholesky factor of ``K`` with a single jitter retry.

    If the first factorization fails, ``JITTER_FACTOR * ref_variance`` is
    added to the diagonal and the factorization retried once.  A second
    failure propagates as ``numpy.linalg.LinAlgError``.
    """
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        jittered = K + JITTER_FACTOR * ref_variance * np.eye(K.shape[0])
        return np.linalg.cholesky(jittered)
