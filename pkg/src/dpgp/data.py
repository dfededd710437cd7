"""Dataset container, CSV ingestion, and output clipping/centering."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .kernels import _as_matrix


@dataclass(frozen=True)
class Dataset:
    """Inputs and targets, optionally clipped to a known output interval.

    Once clip_and_center has run, ``y`` holds the clamped, mean-centered
    targets, ``offset`` the subtracted mean, and the clip bounds define the
    sensitivity width ``d`` in original units.
    """

    X: np.ndarray
    y: np.ndarray
    clip_low: float | None = None
    clip_high: float | None = None
    offset: float = 0.0
    label: str = ""

    def __post_init__(self):
        X = _as_matrix(self.X)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"got {X.shape[0]} input rows but {y.size} targets")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> float:
        """Output sensitivity width; requires clip bounds."""
        if self.clip_low is None or self.clip_high is None:
            raise ValueError(
                "dataset has no clip bounds; run clip_and_center first"
            )
        return float(self.clip_high - self.clip_low)

    def uncenter(self, values: np.ndarray) -> np.ndarray:
        """Map centered predictions back to original output units."""
        return np.asarray(values, dtype=float) + self.offset


@dataclass(frozen=True)
class IngestReport:
    dataset: Dataset
    n_rows: int
    n_rejected: int


def _row_value(row: dict, column: str, line_no: int) -> float | None:
    """Parse one cell; None marks a missing value, bad numbers raise."""
    raw = row.get(column)
    if raw is None or raw.strip() == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ValueError(
            f"line {line_no}: column {column!r} has non-numeric value {raw!r}"
        ) from None


def ingest_csv(
    source: str | os.PathLike | io.TextIOBase,
    input_columns: list[str],
    output_column: str,
    label: str = "",
    where: tuple[str, float] | None = None,
) -> IngestReport:
    """Parse a CSV file into an (unclipped) Dataset.

    Rows with missing values in the used columns are rejected and counted.
    ``where`` optionally keeps only rows whose named column equals a value,
    for datasets that bundle several populations in one file.
    """
    if isinstance(source, io.TextIOBase):
        return _ingest_stream(source, input_columns, output_column, label, where)
    with open(source, newline="") as handle:
        return _ingest_stream(handle, input_columns, output_column, label, where)


def _ingest_stream(handle, input_columns, output_column, label, where):
    sample = handle.read(4096)
    handle.seek(0)
    try:
        dialect = csv.Sniffer().sniff(sample, delimiters=",;\t")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(handle, dialect=dialect)
    if reader.fieldnames is None:
        raise ValueError("empty CSV: no header row")
    reader.fieldnames = [name.strip().strip('"') for name in reader.fieldnames]
    needed = list(input_columns) + [output_column]
    if where is not None:
        needed.append(where[0])
    missing = [c for c in needed if c not in reader.fieldnames]
    if missing:
        raise ValueError(f"CSV is missing columns {missing}; has {reader.fieldnames}")

    rows_x: list[list[float]] = []
    rows_y: list[float] = []
    n_rows = 0
    n_rejected = 0
    for line_no, row in enumerate(reader, start=2):
        n_rows += 1
        if where is not None:
            selector = _row_value(row, where[0], line_no)
            if selector is None:
                n_rejected += 1
                continue
            if selector != float(where[1]):
                continue
        values = [_row_value(row, c, line_no) for c in input_columns]
        target = _row_value(row, output_column, line_no)
        if target is None or any(v is None for v in values):
            n_rejected += 1
            continue
        rows_x.append(values)
        rows_y.append(target)
    if not rows_y:
        raise ValueError("CSV contains no usable data rows")
    dataset = Dataset(
        X=np.asarray(rows_x, dtype=float),
        y=np.asarray(rows_y, dtype=float),
        label=label,
    )
    return IngestReport(dataset=dataset, n_rows=n_rows, n_rejected=n_rejected)


def clip_and_center(dataset: Dataset, clip_low: float, clip_high: float) -> Dataset:
    """Clamp targets into [clip_low, clip_high] and subtract their mean.

    The subtracted mean is stored as ``offset`` so releases can be mapped
    back to original units; the clip width becomes the sensitivity d.
    """
    if not clip_high > clip_low:
        raise ValueError(f"clip_high must exceed clip_low, got [{clip_low}, {clip_high}]")
    raw = dataset.y + dataset.offset
    clamped = np.clip(raw, clip_low, clip_high)
    offset = float(clamped.mean())
    return replace(
        dataset,
        y=clamped - offset,
        clip_low=float(clip_low),
        clip_high=float(clip_high),
        offset=offset,
    )


def clip_half_width(dataset: Dataset, half_width: float) -> Dataset:
    """Clip to mean(y) +/- half_width, the symmetric-band convention."""
    if half_width <= 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    raw = dataset.y + dataset.offset
    center = float(raw.mean())
    return clip_and_center(dataset, center - half_width, center + half_width)
