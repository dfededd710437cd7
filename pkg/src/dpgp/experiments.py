"""Benchmark harness: Monte Carlo cross-validation of the release
mechanisms, single-shot releases, and JSON-ready reports.

All randomness flows from per-fold seeds spawned off the master seed, so a
report is reproducible from its config alone.  Predictions are always
scored in original output units against the clipped, un-noised targets.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import binning, gp
from .cloaking import CloakingConvergenceError, release_cloaking
from .data import Dataset
from .hyperparams import HyperGrid, SelectionResult, select_hyperparameters
from .kernels import KernelSpec
from .privacy import DPParams, c_delta
from .rkhs import release_rkhs

MECHANISMS = ("rkhs", "cloaking", "simple_binning", "integral_binning")
_GP_MECHANISMS = ("rkhs", "cloaking", "integral_binning")
_BINNING_MECHANISMS = ("simple_binning", "integral_binning")


@dataclass(frozen=True)
class BinningSettings:
    """Bin resolution and optional fixed extents for the binning baselines.

    Without explicit extents the grid spans the full dataset, so every
    training and test point of every fold falls inside it.
    """

    counts: tuple[int, ...]
    low: tuple[float, ...] | None = None
    high: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 1 for c in self.counts):
            raise ValueError("bin counts must be positive")
        for name in ("low", "high"):
            bound = getattr(self, name)
            if bound is not None:
                object.__setattr__(self, name, tuple(float(v) for v in bound))

    def edges_for(self, dataset: Dataset) -> tuple[np.ndarray, ...]:
        if len(self.counts) != dataset.input_dim:
            raise ValueError(
                f"bins specify {len(self.counts)} dimensions, data has {dataset.input_dim}"
            )
        low = self.low if self.low is not None else dataset.X.min(axis=0)
        high = self.high if self.high is not None else dataset.X.max(axis=0)
        return binning.make_edges(low, high, self.counts)

    def to_dict(self) -> dict:
        return {
            "counts": list(self.counts),
            "low": list(self.low) if self.low is not None else None,
            "high": list(self.high) if self.high is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BinningSettings":
        return cls(
            counts=tuple(data["counts"]),
            low=tuple(data["low"]) if data.get("low") is not None else None,
            high=tuple(data["high"]) if data.get("high") is not None else None,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything run_experiment needs besides the dataset itself."""

    mechanism: str
    epsilon: float
    delta: float
    kernel: KernelSpec | None = None
    grid: HyperGrid | None = None
    n_folds: int = 30
    train_size: int | None = None
    test_size: int | None = None
    seed: int = 0
    noise_multiplier: float = 1.0
    bins: BinningSettings | None = None
    label: str = ""

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(
                f"unknown mechanism {self.mechanism!r}; choose from {MECHANISMS}"
            )
        if self.mechanism in _GP_MECHANISMS and self.kernel is None and self.grid is None:
            raise ValueError(f"mechanism {self.mechanism!r} needs a kernel or a grid")
        if self.kernel is not None and self.grid is not None:
            raise ValueError("give either a fixed kernel or a selection grid, not both")
        if self.mechanism in _BINNING_MECHANISMS and self.bins is None:
            raise ValueError(f"mechanism {self.mechanism!r} needs a bins block")
        if self.n_folds < 1:
            raise ValueError("n_folds must be at least 1")

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "kernel": self.kernel.to_dict() if self.kernel else None,
            "grid": _grid_to_dict(self.grid) if self.grid else None,
            "n_folds": self.n_folds,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "seed": self.seed,
            "noise_multiplier": self.noise_multiplier,
            "bins": self.bins.to_dict() if self.bins else None,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {
            "mechanism", "epsilon", "delta", "kernel", "grid", "n_folds",
            "train_size", "test_size", "seed", "noise_multiplier", "bins", "label",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(
            mechanism=data["mechanism"],
            epsilon=float(data["epsilon"]),
            delta=float(data["delta"]),
            kernel=KernelSpec.from_dict(data["kernel"]) if data.get("kernel") else None,
            grid=_grid_from_dict(data["grid"]) if data.get("grid") else None,
            n_folds=int(data.get("n_folds", 30)),
            train_size=int(data["train_size"]) if data.get("train_size") is not None else None,
            test_size=int(data["test_size"]) if data.get("test_size") is not None else None,
            seed=int(data.get("seed", 0)),
            noise_multiplier=float(data.get("noise_multiplier", 1.0)),
            bins=BinningSettings.from_dict(data["bins"]) if data.get("bins") else None,
            label=str(data.get("label", "")),
        )


def _grid_to_dict(grid: HyperGrid) -> dict:
    return {
        "candidates": [spec.to_dict() for spec in grid.candidates],
        "folds": grid.folds,
        "select_epsilon": grid.select_epsilon,
        "test_fraction": grid.test_fraction,
    }


def _grid_from_dict(data: dict) -> HyperGrid:
    return HyperGrid(
        candidates=tuple(KernelSpec.from_dict(c) for c in data["candidates"]),
        folds=int(data.get("folds", 100)),
        select_epsilon=float(data.get("select_epsilon", 1.0)),
        test_fraction=float(data.get("test_fraction", 0.1)),
    )


def rmse(predictions, truth) -> float:
    """Root mean squared error."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.size != truth.size:
        raise ValueError(
            f"length mismatch: {predictions.size} predictions, {truth.size} truths"
        )
    if predictions.size == 0:
        raise ValueError("rmse needs at least one value")
    return float(np.sqrt(np.mean((predictions - truth) ** 2)))


def _normalized_for_rkhs(spec: KernelSpec) -> tuple[KernelSpec, float]:
    """Unit-variance kernel and the output scale that restores units."""
    sigma = float(np.sqrt(spec.variance))
    return (
        KernelSpec(
            variance=1.0,
            lengthscales=spec.lengthscales,
            noise_variance=spec.noise_variance / spec.variance,
        ),
        sigma,
    )


@dataclass(frozen=True)
class MechanismOutput:
    """One mechanism run on one train split, in original output units.

    ``reference`` is the same pipeline with the DP noise switched off; it
    is not a private quantity and exists for scoring and plot bands.
    """

    values: np.ndarray
    reference: np.ndarray
    noise_std: np.ndarray | None
    posterior_var: np.ndarray | None
    detail: dict


def _release_at(
    dataset: Dataset,
    kernel: KernelSpec | None,
    mechanism: str,
    dp: DPParams,
    train_idx: np.ndarray,
    Xstar: np.ndarray,
    rng: np.random.Generator,
    noise_multiplier: float,
    bins: BinningSettings | None,
) -> MechanismOutput:
    """Fit on one train split and release at the test inputs."""
    X_train = dataset.X[train_idx]
    y_train = dataset.y[train_idx]

    if mechanism == "rkhs":
        norm_spec, sigma = _normalized_for_rkhs(kernel)
        model = gp.fit(X_train, y_train / sigma, norm_spec)
        norm_dp = DPParams(dp.epsilon, dp.delta, dp.d / sigma)
        result = release_rkhs(
            model, Xstar, norm_dp, rng, noise_multiplier=noise_multiplier
        )
        detail = dict(result.metadata)
        detail["output_scale_sigma"] = sigma
        detail["mean_noise_std"] = float(np.mean(result.noise_std)) * sigma
        return MechanismOutput(
            values=dataset.uncenter(result.values * sigma),
            reference=dataset.uncenter(model.predict_mean(Xstar) * sigma),
            noise_std=result.noise_std * sigma,
            posterior_var=result.posterior_var * sigma**2,
            detail=detail,
        )

    if mechanism == "cloaking":
        model = gp.fit(X_train, y_train, kernel)
        result = release_cloaking(
            model, Xstar, dp, rng, noise_multiplier=noise_multiplier
        )
        detail = dict(result.metadata)
        detail["mean_noise_std"] = float(np.mean(result.noise_std))
        return MechanismOutput(
            values=dataset.uncenter(result.values),
            reference=dataset.uncenter(model.predict_mean(Xstar)),
            noise_std=result.noise_std,
            posterior_var=result.posterior_var,
            detail=detail,
        )

    if mechanism in _BINNING_MECHANISMS:
        edges = bins.edges_for(dataset)
        grid = binning.bin_data(X_train, y_train, edges)
        dp_values = binning.dp_bin_means(
            grid, dp, rng, noise_multiplier=noise_multiplier
        )
        true_values = np.where(grid.occupied, grid.means, grid.population_mean)
        detail = {
            "epsilon": dp.epsilon,
            "d": dp.d,
            "n_bins": grid.n_bins,
            "fraction_occupied": float(grid.occupied.mean()),
            "empty_bin_fallback_not_noised": bool(np.any(~grid.occupied)),
            "noise_multiplier": float(noise_multiplier),
            "not_private": float(noise_multiplier) != 1.0,
        }
        if mechanism == "simple_binning":
            values, out_of_range = binning.predict_binned(grid, dp_values, Xstar)
            reference, _ = binning.predict_binned(grid, true_values, Xstar)
            detail["test_points_out_of_range"] = int(out_of_range.sum())
            # per-point Laplace std of the containing bin, zero when the
            # point fell out of range or into an empty bin
            scales = np.zeros(grid.shape)
            occ = grid.occupied
            scales[occ] = dp.d / (grid.counts[occ] * dp.epsilon)
            per_point_scale, _ = binning.predict_binned(grid, scales, Xstar)
            per_point_scale[out_of_range] = 0.0
            noise_std = abs(float(noise_multiplier)) * np.sqrt(2.0) * per_point_scale
            return MechanismOutput(
                values=dataset.uncenter(values),
                reference=dataset.uncenter(reference),
                noise_std=noise_std,
                posterior_var=None,
                detail=detail,
            )
        igp = binning.fit_integral_gp(
            grid, dp_values, kernel, dp, noise_multiplier=noise_multiplier
        )
        reference_igp = binning.fit_integral_gp(
            grid, true_values, kernel, dp, noise_multiplier=0.0
        )
        return MechanismOutput(
            values=dataset.uncenter(igp.predict(Xstar)),
            reference=dataset.uncenter(reference_igp.predict(Xstar)),
            noise_std=None,
            posterior_var=None,
            detail=detail,
        )

    raise ValueError(f"unknown mechanism {mechanism!r}")


def _selection_report(result: SelectionResult) -> dict:
    return {
        "chosen_index": result.chosen_index,
        "chosen": result.chosen.to_dict(),
        "utilities": [s.utility for s in result.scores],
        "sensitivities": [s.sensitivity for s in result.scores],
        "delta_u": result.delta_u,
        "probabilities": result.probabilities.tolist(),
    }


def run_experiment(dataset: Dataset, config: ExperimentConfig) -> dict:
    """Monte Carlo cross-validated benchmark of one mechanism.

    Per fold: split, fit, release through the configured mechanism, score
    RMSE against the clipped un-noised targets in original units.  Folds
    that raise are recorded as errors; the run aborts only when more than
    half of them fail.
    """
    d = dataset.d
    dp = DPParams(config.epsilon, config.delta, d)
    n = dataset.n
    test_size = config.test_size if config.test_size is not None else max(1, round(0.1 * n))
    train_size = config.train_size if config.train_size is not None else n - test_size
    if test_size < 1 or train_size < 1 or train_size + test_size > n:
        raise ValueError(
            f"cannot split {n} rows into {train_size} train + {test_size} test"
        )

    master = np.random.SeedSequence(config.seed)
    selection_seed, *fold_seeds = master.spawn(config.n_folds + 1)

    kernel = config.kernel
    selection = None
    if config.grid is not None:
        result = select_hyperparameters(
            dataset, config.grid, np.random.default_rng(selection_seed)
        )
        kernel = result.chosen
        selection = _selection_report(result)

    fold_rmse: list[float | None] = []
    fold_errors: list[str | None] = []
    details: list[dict] = []
    for seed in fold_seeds:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        test_idx = perm[:test_size]
        train_idx = perm[test_size : test_size + train_size]
        try:
            output = _release_at(
                dataset,
                kernel,
                config.mechanism,
                dp,
                train_idx,
                dataset.X[test_idx],
                rng,
                config.noise_multiplier,
                config.bins,
            )
            truth = dataset.uncenter(dataset.y[test_idx])
            fold_rmse.append(rmse(output.values, truth))
            fold_errors.append(None)
            details.append(output.detail)
        except (ValueError, np.linalg.LinAlgError, CloakingConvergenceError) as exc:
            fold_rmse.append(None)
            fold_errors.append(str(exc))

    n_failed = sum(1 for e in fold_errors if e is not None)
    if n_failed * 2 > config.n_folds:
        raise RuntimeError(
            f"{n_failed} of {config.n_folds} folds failed; first error: "
            f"{next(e for e in fold_errors if e is not None)}"
        )

    scores = np.array([r for r in fold_rmse if r is not None])
    ci95 = float(1.96 * scores.std(ddof=1) / np.sqrt(scores.size)) if scores.size > 1 else 0.0

    report = {
        "label": config.label or dataset.label,
        "mechanism": config.mechanism,
        "n": n,
        "input_dim": dataset.input_dim,
        "n_folds": config.n_folds,
        "train_size": train_size,
        "test_size": test_size,
        "seed": config.seed,
        "privacy": {
            "epsilon": config.epsilon,
            "delta": config.delta,
            "d": d,
            "c_delta": (
                c_delta(config.delta, config.mechanism)
                if config.mechanism in ("rkhs", "cloaking")
                else None
            ),
            "noise_multiplier": config.noise_multiplier,
            "not_private": config.noise_multiplier != 1.0,
            "selection_epsilon": config.grid.select_epsilon if config.grid else None,
        },
        "kernel": kernel.to_dict() if kernel is not None else None,
        "fold_rmse": fold_rmse,
        "fold_errors": fold_errors,
        "rmse_mean": float(scores.mean()),
        "rmse_ci95": ci95,
        "mechanism_details": _aggregate_details(details),
        "selection": selection,
    }
    if config.noise_multiplier != 1.0:
        report["warning"] = (
            f"NOT PRIVATE: noise_multiplier={config.noise_multiplier:g} rescales "
            "the calibrated noise; use 1.0 for a real release"
        )
    return report


def _aggregate_details(details: list[dict]) -> dict:
    """Mean numeric metadata across folds; non-numeric keys pass through."""
    if not details:
        return {}
    merged: dict[str, Any] = {}
    for key in details[0]:
        values = [det[key] for det in details if key in det]
        if all(isinstance(v, bool) for v in values):
            merged[key] = any(values)
        elif all(isinstance(v, (int, float)) for v in values):
            merged[key] = float(np.mean([float(v) for v in values]))
        else:
            merged[key] = values[0]
    return merged


def release_dataset(
    dataset: Dataset,
    config: ExperimentConfig,
    Xstar,
    rng: np.random.Generator | None = None,
) -> dict:
    """One DP release at explicit test inputs, fitted on the whole dataset.

    Besides the DP values, the report carries the non-private reference
    curve (the same pipeline with zero noise) and per-point uncertainty
    bands, which is what the prediction CSVs are built from.  The reference
    fields are exact fit outputs: publishing them alongside the DP values
    would void the guarantee.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None]
    dp = DPParams(config.epsilon, config.delta, dataset.d)
    all_idx = np.arange(dataset.n)

    kernel = config.kernel
    selection = None
    if config.grid is not None:
        result = select_hyperparameters(dataset, config.grid, rng)
        kernel = result.chosen
        selection = _selection_report(result)

    output = _release_at(
        dataset, kernel, config.mechanism, dp, all_idx, Xstar,
        rng, config.noise_multiplier, config.bins,
    )

    report = {
        "mechanism": config.mechanism,
        "label": config.label or dataset.label,
        "values": output.values.tolist(),
        "reference_mean": output.reference.tolist(),
        "noise_std": output.noise_std.tolist() if output.noise_std is not None else None,
        "posterior_var": (
            output.posterior_var.tolist() if output.posterior_var is not None else None
        ),
        "privacy": {
            "epsilon": config.epsilon,
            "delta": config.delta,
            "d": dataset.d,
            "c_delta": (
                c_delta(config.delta, config.mechanism)
                if config.mechanism in ("rkhs", "cloaking")
                else None
            ),
            "noise_multiplier": config.noise_multiplier,
            "not_private": config.noise_multiplier != 1.0,
        },
        "detail": output.detail,
        "selection": selection,
    }
    if config.noise_multiplier != 1.0:
        report["warning"] = (
            f"NOT PRIVATE: noise_multiplier={config.noise_multiplier:g} rescales "
            "the calibrated noise; use 1.0 for a real release"
        )
    return report
