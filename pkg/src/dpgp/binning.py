"""Binning baselines: DP bin means via the Laplace mechanism, plus a GP
with bin-integral covariances fitted to the noisy bin values."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import erf

from .kernels import KernelSpec, _as_matrix, chol_with_jitter
from .privacy import DPParams


@dataclass(frozen=True)
class BinGrid:
    """A rectangular binning of the training data.

    ``edges`` holds one strictly increasing boundary vector per input
    dimension; bins are half-open [low, high) with the last bin closed.
    ``means`` is NaN for empty bins; ``population_mean`` is the mean of all
    targets and stands in for empty bins downstream.
    """

    edges: tuple[np.ndarray, ...]
    counts: np.ndarray
    means: np.ndarray
    population_mean: float

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts.shape

    @property
    def n_bins(self) -> int:
        return int(np.prod(self.shape))

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def make_edges(low, high, counts) -> tuple[np.ndarray, ...]:
    """Uniform bin boundaries per dimension."""
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    counts = np.atleast_1d(np.asarray(counts, dtype=int))
    if not (low.size == high.size == counts.size):
        raise ValueError("low, high and counts must have one entry per dimension")
    if np.any(counts < 1):
        raise ValueError("every dimension needs at least one bin")
    if np.any(high <= low):
        raise ValueError("high must exceed low in every dimension")
    return tuple(
        np.linspace(low[d], high[d], counts[d] + 1) for d in range(counts.size)
    )


def _check_edges(edges) -> tuple[np.ndarray, ...]:
    checked = []
    for d, e in enumerate(edges):
        e = np.asarray(e, dtype=float)
        if e.ndim != 1 or e.size < 2:
            raise ValueError(f"dimension {d}: need at least two bin edges")
        if np.any(np.diff(e) <= 0):
            raise ValueError(f"dimension {d}: edges must be strictly increasing")
        checked.append(e)
    return tuple(checked)


def _locate(edges: tuple[np.ndarray, ...], X: np.ndarray):
    """Bin index per point and dimension, plus an in-range mask.

    Points on the upper boundary of the last bin belong to it; all other
    bins are half-open on the right.
    """
    m = X.shape[0]
    idx = np.zeros((m, len(edges)), dtype=int)
    inside = np.ones(m, dtype=bool)
    for d, e in enumerate(edges):
        x = X[:, d]
        k = np.searchsorted(e, x, side="right") - 1
        on_top_edge = x == e[-1]
        k[on_top_edge] = e.size - 2
        inside &= (x >= e[0]) & (x <= e[-1])
        idx[:, d] = np.clip(k, 0, e.size - 2)
    return idx, inside


def bin_data(X, y, edges) -> BinGrid:
    """Count and average the training targets per bin."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    edges = _check_edges(edges)
    if X.shape[1] != len(edges):
        raise ValueError(
            f"data has {X.shape[1]} dimensions but {len(edges)} edge vectors given"
        )
    if X.shape[0] != y.size or y.size == 0:
        raise ValueError("X and y must be non-empty and the same length")
    idx, inside = _locate(edges, X)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise ValueError(
            f"training point {bad} at {X[bad].tolist()} lies outside the bin grid"
        )
    shape = tuple(e.size - 1 for e in edges)
    flat = np.ravel_multi_index(idx.T, shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape)))
    sums = np.bincount(flat, weights=y, minlength=int(np.prod(shape)))
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return BinGrid(
        edges=edges,
        counts=counts.reshape(shape),
        means=means.reshape(shape),
        population_mean=float(y.mean()),
    )


def dp_bin_means(
    grid: BinGrid,
    dp: DPParams,
    rng: np.random.Generator,
    noise_multiplier: float = 1.0,
) -> np.ndarray:
    """Laplace-noised bin means; empty bins fall back to the population mean.

    One record affects exactly one bin's mean, by at most d / count, so each
    occupied bin adds Laplace noise of scale d / (count * epsilon).  The
    empty-bin fallback is released without noise.
    """
    values = np.where(grid.occupied, grid.means, grid.population_mean)
    scales = np.zeros(grid.shape)
    occ = grid.occupied
    scales[occ] = dp.d / (grid.counts[occ] * dp.epsilon)
    noise = rng.laplace(0.0, 1.0, size=grid.shape) * scales
    return values + float(noise_multiplier) * noise


def predict_binned(grid: BinGrid, values: np.ndarray, Xstar):
    """Piecewise constant prediction by bin membership.

    Returns (predictions, out_of_range mask); out-of-range test points get
    the population mean and a raised flag rather than an error.
    """
    Xstar = _as_matrix(Xstar)
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
    if Xstar.shape[1] != len(grid.edges):
        raise ValueError(
            f"test points have {Xstar.shape[1]} dimensions, grid has {len(grid.edges)}"
        )
    idx, inside = _locate(grid.edges, Xstar)
    flat = np.ravel_multi_index(idx.T, grid.shape)
    predictions = values.reshape(-1)[flat]
    predictions[~inside] = grid.population_mean
    return predictions, ~inside


_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


def _phi(z: np.ndarray, ell: float) -> np.ndarray:
    """Antiderivative of exp(-t^2 / (2 ell^2)): integral from 0 to z."""
    return ell * _SQRT_HALF_PI * erf(z / (math.sqrt(2.0) * ell))


def _psi(z: np.ndarray, ell: float) -> np.ndarray:
    """Second antiderivative: integral of _phi from 0 to z."""
    z = np.asarray(z, dtype=float)
    gauss = np.exp(-(z**2) / (2.0 * ell**2))
    return ell * _SQRT_HALF_PI * (
        z * erf(z / (math.sqrt(2.0) * ell))
        + math.sqrt(2.0) * ell / math.sqrt(math.pi) * (gauss - 1.0)
    )


def _check_box(spec: KernelSpec, box) -> tuple[np.ndarray, np.ndarray]:
    low = np.atleast_1d(np.asarray(box[0], dtype=float))
    high = np.atleast_1d(np.asarray(box[1], dtype=float))
    if low.size != spec.input_dim or high.size != spec.input_dim:
        raise ValueError(
            f"box dimension {low.size} does not match kernel dimension {spec.input_dim}"
        )
    if np.any(high <= low):
        raise ValueError(f"degenerate box: low {low.tolist()}, high {high.tolist()}")
    return low, high


def integral_kernel_eval(spec: KernelSpec, box_a, box_b) -> float:
    """Covariance between the integrals of the latent function over two boxes.

    Separable across dimensions: per dimension the double integral of the
    1-d kernel over [a, b] x [c, d] is Psi(b-c) - Psi(a-c) - Psi(b-d) +
    Psi(a-d), with Psi the second antiderivative of the unit kernel.
    """
    la, ha = _check_box(spec, box_a)
    lb, hb = _check_box(spec, box_b)
    value = spec.variance
    for d in range(spec.input_dim):
        ell = float(spec.lengthscales[d])
        a, b = la[d], ha[d]
        c, e = lb[d], hb[d]
        value *= float(
            _psi(b - c, ell) - _psi(a - c, ell) - _psi(b - e, ell) + _psi(a - e, ell)
        )
    return value


def integral_point_eval(spec: KernelSpec, box, x) -> float:
    """Covariance between a box integral and the latent value at a point."""
    low, high = _check_box(spec, box)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != spec.input_dim:
        raise ValueError(
            f"point dimension {x.size} does not match kernel dimension {spec.input_dim}"
        )
    value = spec.variance
    for d in range(spec.input_dim):
        ell = float(spec.lengthscales[d])
        value *= float(_phi(high[d] - x[d], ell) - _phi(low[d] - x[d], ell))
    return value


@dataclass(frozen=True)
class IntegralGPModel:
    """GP over bin-integral observations, predicting latent point values."""

    lows: np.ndarray
    highs: np.ndarray
    spec: KernelSpec
    alpha: np.ndarray

    def predict(self, Xstar) -> np.ndarray:
        Xstar = _as_matrix(Xstar)
        K = np.empty((Xstar.shape[0], self.lows.shape[0]))
        for i in range(Xstar.shape[0]):
            for k in range(self.lows.shape[0]):
                K[i, k] = integral_point_eval(
                    self.spec, (self.lows[k], self.highs[k]), Xstar[i]
                )
        return K @ self.alpha


def fit_integral_gp(
    grid: BinGrid,
    dp_values: np.ndarray,
    spec: KernelSpec,
    dp: DPParams,
    noise_multiplier: float = 1.0,
) -> IntegralGPModel:
    """Fit a GP to the occupied bins' DP values through bin integrals.

    The observation for bin k is its DP mean times the bin volume, taken as
    a noisy measurement of the latent function's integral over the bin.
    The per-bin observation noise variance is the known variance of the
    injected Laplace noise, 2 (d / (count eps))^2, scaled by the squared
    volume; the kernel's own noise_variance field is not used here.
    """
    occ_flat = np.flatnonzero(grid.occupied.reshape(-1))
    if occ_flat.size == 0:
        raise ValueError("no occupied bins to fit")
    dp_values = np.asarray(dp_values, dtype=float)
    if dp_values.shape != grid.shape:
        raise ValueError(
            f"dp_values shape {dp_values.shape} does not match grid {grid.shape}"
        )
    ndim = len(grid.edges)
    multi = np.unravel_index(occ_flat, grid.shape)
    lows = np.stack([grid.edges[d][multi[d]] for d in range(ndim)], axis=1)
    highs = np.stack([grid.edges[d][multi[d] + 1] for d in range(ndim)], axis=1)
    volumes = np.prod(highs - lows, axis=1)
    counts = grid.counts.reshape(-1)[occ_flat]
    z = dp_values.reshape(-1)[occ_flat] * volumes

    m = occ_flat.size
    Kzz = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            Kzz[i, j] = integral_kernel_eval(
                spec, (lows[i], highs[i]), (lows[j], highs[j])
            )
            Kzz[j, i] = Kzz[i, j]
    laplace_var = 2.0 * (dp.d / (counts * dp.epsilon)) ** 2
    Kzz[np.diag_indices_from(Kzz)] += volumes**2 * laplace_var * noise_multiplier**2
    L = chol_with_jitter(Kzz, float(np.max(np.diag(Kzz))))
    alpha = cho_solve((L, True), z)
    return IntegralGPModel(lows=lows, highs=highs, spec=spec, alpha=alpha)
