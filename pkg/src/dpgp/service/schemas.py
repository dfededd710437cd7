"""Request and response models for the HTTP service.

The service is stateless: every request carries its dataset inline, and the
response returns everything the client needs to write reports.
"""
from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

Mechanism = Literal["rkhs", "cloaking", "simple_binning", "integral_binning"]


class KernelModel(BaseModel):
    family: Literal["eq"] = "eq"
    variance: float = Field(gt=0)
    lengthscales: list[float] = Field(min_length=1)
    noise_variance: float = Field(ge=0, default=0.0)


class DatasetModel(BaseModel):
    """A dataset after ingestion, clipping and centering."""

    x: list[list[float]]
    y: list[float]
    clip_low: float | None = None
    clip_high: float | None = None
    offset: float = 0.0
    label: str = ""


class ClipModel(BaseModel):
    """Either explicit bounds or a symmetric band around the mean."""

    low: float | None = None
    high: float | None = None
    half_width: float | None = None


class WhereModel(BaseModel):
    column: str
    equals: float


class IngestRequest(BaseModel):
    csv_text: str
    input_columns: list[str] = Field(min_length=1)
    output_column: str
    where: WhereModel | None = None
    clip: ClipModel | None = None
    label: str = ""


class IngestResponse(BaseModel):
    dataset: DatasetModel
    n_rows: int
    n_rejected: int
    n_used: int
    d: float | None = None


class FitRequest(BaseModel):
    dataset: DatasetModel
    kernel: KernelModel


class FitResponse(BaseModel):
    n: int
    input_dim: int
    kernel: KernelModel
    train_rmse: float
    mean_posterior_std: float


class GridModel(BaseModel):
    candidates: list[KernelModel] = Field(min_length=1)
    folds: int = Field(ge=2, default=100)
    select_epsilon: float = Field(ge=0, default=1.0)
    test_fraction: float = Field(gt=0, lt=1, default=0.1)


class BinsModel(BaseModel):
    counts: list[int] = Field(min_length=1)
    low: list[float] | None = None
    high: list[float] | None = None


class ReleaseRequest(BaseModel):
    dataset: DatasetModel
    mechanism: Mechanism
    epsilon: float = Field(gt=0)
    delta: float = Field(gt=0, lt=1)
    kernel: KernelModel | None = None
    grid: GridModel | None = None
    bins: BinsModel | None = None
    test_inputs: list[list[float]] = Field(min_length=1)
    seed: int = 0
    noise_multiplier: float = 1.0
    label: str = ""


class ReleaseResponse(BaseModel):
    mechanism: str
    label: str
    values: list[float]
    reference_mean: list[float]
    noise_std: list[float] | None
    posterior_var: list[float] | None
    privacy: dict
    detail: dict
    selection: dict | None = None
    warning: str | None = None


class HpselectRequest(BaseModel):
    dataset: DatasetModel
    grid: GridModel
    seed: int = 0
    probe_epsilons: list[float] = Field(default_factory=list)


class ProbeRow(BaseModel):
    epsilon: float
    probabilities: list[float]


class HpselectResponse(BaseModel):
    chosen_index: int
    chosen: KernelModel
    utilities: list[float]
    sensitivities: list[float]
    delta_u: float
    probabilities: list[float]
    probe: list[ProbeRow]


class BenchRequest(BaseModel):
    dataset: DatasetModel
    mechanism: Mechanism
    epsilon: float = Field(gt=0)
    delta: float = Field(gt=0, lt=1)
    kernel: KernelModel | None = None
    grid: GridModel | None = None
    bins: BinsModel | None = None
    n_folds: int = Field(ge=1, default=30)
    train_size: int | None = Field(ge=1, default=None)
    test_size: int | None = Field(ge=1, default=None)
    seed: int = 0
    noise_multiplier: float = 1.0
    label: str = ""


class BenchResponse(BaseModel):
    report: dict


class HealthResponse(BaseModel):
    status: str
    version: str
