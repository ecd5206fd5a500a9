"""CSV loading, standardization and uniform resampling of sensor data.

Files are comma separated with one header row. Lines starting with ``#``
are treated as comments. A header cell may carry a unit tag in square
brackets, e.g. ``PT-101 [bar]``. An optional timestamp column (epoch
seconds or ISO-8601) is selected by name.
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from .timeseries import Scaling, SeriesMatrix

_UNIT = re.compile(r"^(.*?)\s*\[([^\]]*)\]\s*$")


class IngestError(ValueError):
    """Malformed or unusable input data."""


class DegenerateColumnError(IngestError):
    pass


@dataclass(eq=False)
class RawTable:
    """Column-oriented sensor table.

    ``values`` has shape (L, C): L samples of C columns. ``times`` holds the
    sample timestamps in seconds, or None when the file has no time column.
    """

    labels: list
    values: np.ndarray
    units: list = field(default_factory=list)
    times: Optional[np.ndarray] = None
    period: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise IngestError(f"table values must be 2-D, got shape {self.values.shape}")
        if len(self.labels) != self.values.shape[1]:
            raise IngestError(f"{len(self.labels)} labels for {self.values.shape[1]} columns")
        if not self.units:
            self.units = [""] * len(self.labels)
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            if self.times.shape != (self.values.shape[0],):
                raise IngestError("timestamp column length does not match the data")
        if not self.period > 0:
            raise IngestError(f"sample period must be > 0, got {self.period}")

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


def _parse_time(cell: str, fmt: str) -> float:
    if fmt == "epoch":
        return float(cell)
    stamp = datetime.fromisoformat(cell.strip().replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _split_label(cell: str):
    m = _UNIT.match(cell.strip())
    if m:
        return m.group(1), m.group(2).strip()
    return cell.strip(), ""


def load_csv(path, time_column: Optional[str] = None, time_format: str = "epoch",
             period: Optional[float] = None) -> RawTable:
    """Read a numeric CSV into a RawTable.

    Every error names the file line (1-based) and column involved. Empty
    cells are rejected; there is no imputation.
    """
    if time_format not in ("epoch", "iso"):
        raise IngestError(f"time_format must be 'epoch' or 'iso', got {time_format!r}")
    if not os.path.exists(path):
        raise IngestError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise IngestError(f"{path}: no header row")
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    time_idx = None
    if time_column is not None:
        if time_column not in header:
            raise IngestError(f"{path}: time column {time_column!r} not in header {header}")
        time_idx = header.index(time_column)
    data_idx = [j for j in range(len(header)) if j != time_idx]
    if not data_idx:
        raise IngestError(f"{path}: no data columns")
    labels, units = zip(*(_split_label(header[j]) for j in data_idx))

    values = np.empty((len(rows) - 1, len(data_idx)))
    times = np.empty(len(rows) - 1) if time_idx is not None else None
    for i, (line, row) in enumerate(rows[1:]):
        if len(row) != len(header):
            raise IngestError(
                f"{path}, line {line}: expected {len(header)} cells, found {len(row)}")
        for k, j in enumerate(data_idx):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise IngestError(
                    f"{path}, line {line}, column {j + 1} ({header[j]!r}): "
                    f"cannot use value {row[j]!r}")
            values[i, k] = v
        if time_idx is not None:
            try:
                times[i] = _parse_time(row[time_idx], time_format)
            except ValueError:
                raise IngestError(
                    f"{path}, line {line}, column {time_idx + 1} ({header[time_idx]!r}): "
                    f"bad {time_format} timestamp {row[time_idx]!r}") from None
    if period is None:
        if times is not None and len(times) > 1:
            period = float(np.median(np.diff(times)))
            if not period > 0:
                raise IngestError(f"{path}: timestamps are not increasing")
        else:
            period = 1.0
    return RawTable(list(labels), values, list(units), times, period)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(table: RawTable, path, time_column: str = "time", comment: Optional[str] = None) -> None:
    """Write a RawTable so that :func:`load_csv` reads back identical values."""
    header = [f"{lab} [{u}]" if u else lab for lab, u in zip(table.labels, table.units)]
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        if table.times is not None:
            w.writerow([time_column] + header)
            for t, row in zip(table.times, table.values):
                w.writerow([format_float(t)] + [format_float(v) for v in row])
        else:
            w.writerow(header)
            for row in table.values:
                w.writerow([format_float(v) for v in row])


def table_from_series(series: SeriesMatrix, times: Optional[Sequence[float]] = None) -> RawTable:
    return RawTable(list(series.node_ids), series.values.T.copy(), times=times)


def standardize(table: RawTable) -> SeriesMatrix:
    """Zero-mean, unit sample variance (1/(L-1)) rows, one per column of ``table``.

    The per-column mean and scale are kept on the result's ``scaling``.
    """
    x = table.values
    if x.shape[0] < 2:
        raise DegenerateColumnError("standardization needs at least 2 samples per column")
    mean = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1)
    for j, s in enumerate(scale):
        if not s > 0:
            raise DegenerateColumnError(
                f"column {table.labels[j]!r} has zero sample variance and cannot be standardized")
    z = (x - mean) / scale
    return SeriesMatrix(z.T, tuple(table.labels), Scaling(mean, scale))


def inverse_transform(series: SeriesMatrix, values=None) -> np.ndarray:
    """Map standardized values (default: the series itself) back to original units.

    ``values`` is an (N, ...) array in the series' node order.
    """
    if series.scaling is None:
        raise ValueError("series carries no scaling to invert")
    v = series.values if values is None else np.asarray(values, dtype=float)
    shape = (-1,) + (1,) * (v.ndim - 1)
    return v * series.scaling.scale.reshape(shape) + series.scaling.mean.reshape(shape)


def _uniform_grid(start: float, stop: float, period: float) -> np.ndarray:
    n = int(math.floor((stop - start) / period + 1e-9)) + 1
    return start + period * np.arange(n)


def resample_uniform(table: RawTable, period: float) -> RawTable:
    """Linearly interpolate every column onto ``t0, t0 + period, ...`` within the sampled range."""
    if not period > 0:
        raise IngestError(f"period must be > 0, got {period}")
    if table.times is None:
        raise IngestError("resampling needs a timestamp column")
    times = table.times
    if len(times) < 1 or np.any(np.diff(times) <= 0):
        raise IngestError("timestamps must be strictly increasing")
    grid = _uniform_grid(times[0], times[-1], period)
    values = np.column_stack([np.interp(grid, times, table.values[:, j])
                              for j in range(table.n_columns)])
    return RawTable(list(table.labels), values, list(table.units), grid, period)


def merge_tables(tables: Sequence[RawTable], period: float) -> RawTable:
    """Resample separately timestamped tables onto their common time range and join columns."""
    if not tables:
        raise IngestError("nothing to merge")
    for tab in tables:
        if tab.times is None or len(tab.times) == 0:
            raise IngestError("every table needs timestamps to be merged")
    start = max(tab.times[0] for tab in tables)
    stop = min(tab.times[-1] for tab in tables)
    if stop < start:
        raise IngestError(f"tables share no time range (latest start {start}, earliest end {stop})")
    grid = _uniform_grid(start, stop, period)
    labels, units, cols = [], [], []
    for tab in tables:
        if np.any(np.diff(tab.times) <= 0):
            raise IngestError("timestamps must be strictly increasing")
        labels += list(tab.labels)
        units += list(tab.units)
        cols += [np.interp(grid, tab.times, tab.values[:, j]) for j in range(tab.n_columns)]
    return RawTable(labels, np.column_stack(cols), units, grid, period)
