"""HTTP routes wrapping the library; conversion glue lives here."""
from __future__ import annotations

import io

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, gp
from ..cloaking import CloakingConvergenceError
from ..data import Dataset, clip_and_center, clip_half_width, ingest_csv
from ..experiments import (
    BinningSettings,
    ExperimentConfig,
    release_dataset,
    rmse,
    run_experiment,
)
from ..hyperparams import HyperGrid, select_hyperparameters, selection_probabilities
from ..kernels import KernelSpec
from . import schemas


def _kernel_from_model(model: schemas.KernelModel) -> KernelSpec:
    return KernelSpec(
        variance=model.variance,
        lengthscales=np.asarray(model.lengthscales, dtype=float),
        noise_variance=model.noise_variance,
        family=model.family,
    )


def _kernel_to_model(spec: KernelSpec) -> schemas.KernelModel:
    return schemas.KernelModel(
        family=spec.family,
        variance=spec.variance,
        lengthscales=[float(v) for v in spec.lengthscales],
        noise_variance=spec.noise_variance,
    )


def _dataset_from_model(model: schemas.DatasetModel) -> Dataset:
    return Dataset(
        X=np.asarray(model.x, dtype=float),
        y=np.asarray(model.y, dtype=float),
        clip_low=model.clip_low,
        clip_high=model.clip_high,
        offset=model.offset,
        label=model.label,
    )


def _dataset_to_model(dataset: Dataset) -> schemas.DatasetModel:
    return schemas.DatasetModel(
        x=dataset.X.tolist(),
        y=dataset.y.tolist(),
        clip_low=dataset.clip_low,
        clip_high=dataset.clip_high,
        offset=dataset.offset,
        label=dataset.label,
    )


def _grid_from_model(model: schemas.GridModel) -> HyperGrid:
    return HyperGrid(
        candidates=tuple(_kernel_from_model(c) for c in model.candidates),
        folds=model.folds,
        select_epsilon=model.select_epsilon,
        test_fraction=model.test_fraction,
    )


def _bins_from_model(model: schemas.BinsModel | None) -> BinningSettings | None:
    if model is None:
        return None
    return BinningSettings(
        counts=tuple(model.counts),
        low=tuple(model.low) if model.low is not None else None,
        high=tuple(model.high) if model.high is not None else None,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="dpgp service", version=__version__)

    # library errors (bad configs, degenerate data, convergence failures)
    # surface as 400s with the library's message; anything else is a real 500
    async def _bad_request(request, exc: Exception):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    app.add_exception_handler(ValueError, _bad_request)
    app.add_exception_handler(RuntimeError, _bad_request)
    app.add_exception_handler(CloakingConvergenceError, _bad_request)
    app.add_exception_handler(np.linalg.LinAlgError, _bad_request)

    @app.get("/health", response_model=schemas.HealthResponse)
    async def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/ingest", response_model=schemas.IngestResponse)
    async def ingest(request: schemas.IngestRequest) -> schemas.IngestResponse:
        where = (request.where.column, request.where.equals) if request.where else None
        report = ingest_csv(
            io.StringIO(request.csv_text),
            input_columns=request.input_columns,
            output_column=request.output_column,
            label=request.label,
            where=where,
        )
        dataset = report.dataset
        if request.clip is not None:
            clip = request.clip
            if clip.half_width is not None:
                if clip.low is not None or clip.high is not None:
                    raise ValueError("give half_width or explicit bounds, not both")
                dataset = clip_half_width(dataset, clip.half_width)
            elif clip.low is not None and clip.high is not None:
                dataset = clip_and_center(dataset, clip.low, clip.high)
            else:
                raise ValueError("clip block needs half_width or both low and high")
        return schemas.IngestResponse(
            dataset=_dataset_to_model(dataset),
            n_rows=report.n_rows,
            n_rejected=report.n_rejected,
            n_used=dataset.n,
            d=dataset.d if dataset.clip_low is not None else None,
        )

    @app.post("/fit", response_model=schemas.FitResponse)
    async def fit_route(request: schemas.FitRequest) -> schemas.FitResponse:
        dataset = _dataset_from_model(request.dataset)
        model = gp.fit(dataset.X, dataset.y, _kernel_from_model(request.kernel))
        in_sample = model.predict_mean(dataset.X)
        posterior_var = np.diag(model.predict_cov(dataset.X))
        return schemas.FitResponse(
            n=dataset.n,
            input_dim=dataset.input_dim,
            kernel=request.kernel,
            train_rmse=rmse(in_sample, dataset.y),
            mean_posterior_std=float(np.mean(np.sqrt(np.clip(posterior_var, 0, None)))),
        )

    @app.post("/release", response_model=schemas.ReleaseResponse)
    async def release(request: schemas.ReleaseRequest) -> schemas.ReleaseResponse:
        dataset = _dataset_from_model(request.dataset)
        config = ExperimentConfig(
            mechanism=request.mechanism,
            epsilon=request.epsilon,
            delta=request.delta,
            kernel=_kernel_from_model(request.kernel) if request.kernel else None,
            grid=_grid_from_model(request.grid) if request.grid else None,
            seed=request.seed,
            noise_multiplier=request.noise_multiplier,
            bins=_bins_from_model(request.bins),
            label=request.label,
        )
        report = release_dataset(dataset, config, np.asarray(request.test_inputs))
        return schemas.ReleaseResponse(**report)

    @app.post("/hpselect", response_model=schemas.HpselectResponse)
    async def hpselect(request: schemas.HpselectRequest) -> schemas.HpselectResponse:
        dataset = _dataset_from_model(request.dataset)
        grid = _grid_from_model(request.grid)
        rng = np.random.default_rng(np.random.SeedSequence(request.seed))
        result = select_hyperparameters(dataset, grid, rng)
        utilities = np.array([s.utility for s in result.scores])
        probe = [
            schemas.ProbeRow(
                epsilon=eps,
                probabilities=selection_probabilities(
                    utilities, result.delta_u, eps
                ).tolist(),
            )
            for eps in request.probe_epsilons
        ]
        return schemas.HpselectResponse(
            chosen_index=result.chosen_index,
            chosen=_kernel_to_model(result.chosen),
            utilities=utilities.tolist(),
            sensitivities=[s.sensitivity for s in result.scores],
            delta_u=result.delta_u,
            probabilities=result.probabilities.tolist(),
            probe=probe,
        )

    @app.post("/bench", response_model=schemas.BenchResponse)
    async def bench(request: schemas.BenchRequest) -> schemas.BenchResponse:
        dataset = _dataset_from_model(request.dataset)
        config = ExperimentConfig(
            mechanism=request.mechanism,
            epsilon=request.epsilon,
            delta=request.delta,
            kernel=_kernel_from_model(request.kernel) if request.kernel else None,
            grid=_grid_from_model(request.grid) if request.grid else None,
            n_folds=request.n_folds,
            train_size=request.train_size,
            test_size=request.test_size,
            seed=request.seed,
            noise_multiplier=request.noise_multiplier,
            bins=_bins_from_model(request.bins),
            label=request.label,
        )
        return schemas.BenchResponse(report=run_experiment(dataset, config))

    return app


app = create_app()
