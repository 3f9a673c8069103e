"""Demand series ingestion, splitting, the forward transform chain and its inverse.

Forward chain per series: zero-fill gaps, divide by the series mean, then
``log(v + 1)`` if the series contains any value <= 0 else ``log(v)``.
The inverse undoes each step and returns non-negative integers.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigurationError, DataError, UsageError

WINDOW = 35
HORIZON = 28


@dataclass(frozen=True)
class TimeSeries:
    """One product's daily demand plus the metadata of its transform.

    ``values`` stays in original units (NaN marks a missing day).
    ``transformed`` is filled by :func:`preprocess`.
    """

    series_id: str
    values: np.ndarray
    start: dt.date | None = None
    mean_scale: float | None = None
    zero_adjusted: bool | None = None
    transformed: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def is_preprocessed(self) -> bool:
        return self.transformed is not None

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def head(self, stop: int) -> "TimeSeries":
        """The first ``stop`` observations, without transform metadata."""
        return TimeSeries(self.series_id, self.values[:stop].copy(), self.start)


@dataclass(frozen=True)
class SplitSpec:
    """Boundaries ``[0, train_end) [train_end, val_end) [val_end, end)``."""

    train_end: int
    val_end: int
    end: int
    horizon: int = HORIZON

    def __post_init__(self):
        if not 0 < self.train_end < self.val_end < self.end:
            raise ConfigurationError(
                f"split boundaries must be strictly increasing, got "
                f"{self.train_end}, {self.val_end}, {self.end}")
        if self.end - self.val_end != self.horizon:
            raise ConfigurationError(
                f"test length {self.end - self.val_end} must equal horizon {self.horizon}")

    @classmethod
    def for_length(cls, length: int, horizon: int = HORIZON, validation: int = HORIZON) -> "SplitSpec":
        return cls(length - horizon - validation, length - horizon, length, horizon)

    def region(self, name: str) -> tuple[int, int]:
        regions = {
            "train": (0, self.train_end),
            "validation": (self.train_end, self.val_end),
            "test": (self.val_end, self.end),
            "train+validation": (0, self.val_end),
        }
        if name not in regions:
            raise ConfigurationError(f"unknown region {name!r}; choose from {sorted(regions)}")
        return regions[name]


@dataclass(frozen=True)
class WindowSample:
    inputs: np.ndarray
    target: float
    target_index: int


@dataclass
class Windows:
    """Stacked one-step samples: ``inputs[n, window]`` -> ``targets[n]``."""

    inputs: np.ndarray
    targets: np.ndarray
    target_index: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i: int) -> WindowSample:
        return WindowSample(self.inputs[i], float(self.targets[i]), int(self.target_index[i]))

    def __iter__(self) -> Iterator[WindowSample]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def empty(cls, window: int = WINDOW) -> "Windows":
        return cls(np.zeros((0, window)), np.zeros(0), np.zeros(0, dtype=np.int64))

    @classmethod
    def stack(cls, parts: Iterable["Windows"], window: int = WINDOW) -> "Windows":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty(window)
        return cls(np.concatenate([p.inputs for p in parts]),
                   np.concatenate([p.targets for p in parts]),
                   np.concatenate([p.target_index for p in parts]))


# ingestion

CSV_HEADER = ["series_id", "date", "value"]


def load_csv(path: str | Path) -> list[TimeSeries]:
    """Read ``series_id,date,value`` rows into one series per id.

    Days absent between an id's first and last date become NaN, as do rows
    with an empty value.  Series keep first-appearance order.
    """
    path = Path(path)
    rows: dict[str, dict[dt.date, float]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            sid, date_text, value_text = (c.strip() for c in row)
            try:
                date = dt.date.fromisoformat(date_text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparsable date {date_text!r}") from None
            if value_text == "":
                value = math.nan
            else:
                try:
                    value = float(value_text)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: unparsable value {value_text!r}") from None
                if not math.isfinite(value) or value < 0:
                    raise DataError(f"{path}:{lineno}: value must be a non-negative number, got {value_text!r}")
            per_id = rows.setdefault(sid, {})
            if date in per_id:
                raise DataError(f"{path}:{lineno}: duplicate date {date} for series {sid!r}")
            per_id[date] = value
    if not rows:
        raise DataError(f"{path}: no data rows")
    out = []
    for sid, by_date in rows.items():
        first, last = min(by_date), max(by_date)
        n = (last - first).days + 1
        values = np.full(n, np.nan)
        for date, value in by_date.items():
            values[(date - first).days] = value
        out.append(TimeSeries(sid, values, first))
    return out


def write_csv(series: Iterable[TimeSeries], path: str | Path,
              default_start: dt.date = dt.date(2013, 1, 1)) -> Path:
    """Write series in the ingestion format; missing values become empty fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in series:
            start = s.start or default_start
            for i, v in enumerate(s.values):
                day = start + dt.timedelta(days=i)
                writer.writerow([s.series_id, day.isoformat(), "" if np.isnan(v) else _format_value(v)])
    return path


def _format_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_forecasts_csv(forecasts: dict[str, np.ndarray], path: str | Path) -> Path:
    """``series_id,step,value`` with steps numbered from 1."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series_id", "step", "value"])
        for sid, values in forecasts.items():
            for step, v in enumerate(values, start=1):
                writer.writerow([sid, step, _format_value(v)])
    return path


# transform chain


def fill_missing(series: TimeSeries) -> TimeSeries:
    """Replace every missing day with 0."""
    if not series.has_missing:
        return series
    return replace(series, values=np.nan_to_num(series.values, nan=0.0))


def preprocess(series: TimeSeries) -> TimeSeries:
    """Mean-scale then log-transform; records the metadata needed to invert.

    Already-preprocessed input is returned unchanged (the transform is always
    recomputed from original values, so it can never be applied twice).
    """
    if series.is_preprocessed:
        return series
    if series.has_missing:
        raise UsageError(f"series {series.series_id!r} has missing values; call fill_missing first")
    values = np.asarray(series.values, dtype=np.float64)
    if values.size == 0:
        raise DataError(f"series {series.series_id!r} is empty")
    mean = float(values.mean())
    # all-zero series: any positive scale works and forecasts stay zero
    scale = mean if mean > 0 else 1.0
    zero_adjusted = bool(values.min() <= 0)
    scaled = values / scale
    transformed = np.log(scaled + 1.0) if zero_adjusted else np.log(scaled)
    return replace(series, mean_scale=scale, zero_adjusted=zero_adjusted, transformed=transformed)


def inverse_transform(w, mean_scale: float, zero_adjusted: bool) -> np.ndarray:
    """Undo the log and the mean scaling, without rounding."""
    v = np.exp(np.asarray(w, dtype=np.float64))
    if zero_adjusted:
        v = v - 1.0
    return v * mean_scale


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def postprocess(w, mean_scale: float, zero_adjusted: bool, rounding: str = "nearest") -> np.ndarray:
    """Map transformed-space forecasts back to non-negative integer demand.

    ``rounding='nearest'`` rounds half away from zero; ``'ceil'`` rounds up.
    """
    v = inverse_transform(w, mean_scale, zero_adjusted)
    if rounding == "nearest":
        v = round_half_away(v)
    elif rounding == "ceil":
        v = np.ceil(v)
    else:
        raise ConfigurationError(f"rounding must be 'nearest' or 'ceil', got {rounding!r}")
    return np.maximum(v, 0.0).astype(np.int64)


def postprocess_series(w, series: TimeSeries, rounding: str = "nearest") -> np.ndarray:
    if not series.is_preprocessed:
        raise UsageError(f"series {series.series_id!r} was never preprocessed")
    return postprocess(w, series.mean_scale, series.zero_adjusted, rounding)


# windowing


def make_windows(series: TimeSeries, split: SplitSpec, region: str = "train",
                 window: int = WINDOW) -> Windows:
    """One-step samples whose targets fall inside ``region``.

    Inputs are the ``window`` values preceding each target and may reach back
    into earlier regions; targets never leave the region, so training samples
    never see validation or test values.
    """
    if not series.is_preprocessed:
        raise UsageError("make_windows needs a preprocessed series")
    lo, hi = split.region(region)
    if hi > len(series.transformed):
        raise ConfigurationError(
            f"series {series.series_id!r} has {len(series.transformed)} values, split needs {hi}")
    first = max(lo, window)
    if hi - first <= 0:
        warnings.warn(f"series {series.series_id!r}: region {region!r} [{lo}, {hi}) too short "
                      f"for window {window}; no samples", stacklevel=2)
        return Windows.empty(window)
    targets_idx = np.arange(first, hi)
    w = series.transformed
    inputs = np.lib.stride_tricks.sliding_window_view(w, window)[targets_idx - window]
    return Windows(np.array(inputs), w[targets_idx].copy(), targets_idx)


def pooled_windows(series: Iterable[TimeSeries], split_for, region: str, window: int = WINDOW) -> Windows:
    """Samples from every series stacked together (global-model training data)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Windows.stack((make_windows(s, split_for(s), region, window) for s in series), window)
