"""Forecast accuracy: the floored-denominator SMAPE, MASE and multi-seed aggregation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError

SMAPE_EPSILON = 0.1


def _pair(actual, forecast) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=np.float64).ravel()
    f = np.asarray(forecast, dtype=np.float64).ravel()
    if a.shape != f.shape:
        raise DataError(f"actual has {a.size} values but forecast has {f.size}")
    if a.size == 0:
        raise DataError("metrics need at least one value")
    return a, f


def smape_mod(actual, forecast, epsilon: float = SMAPE_EPSILON, factor2: bool = False) -> float:
    """Percentage error with denominator ``max(|A| + |F| + eps, 0.5 + eps)``.

    ``factor2=True`` doubles each term, which is the variant that keeps the
    classic ``(|A| + |F|) / 2`` halving inside the floor.
    """
    a, f = _pair(actual, forecast)
    denom = np.maximum(np.abs(a) + np.abs(f) + epsilon, 0.5 + epsilon)
    terms = np.abs(a - f) / denom
    if factor2:
        terms = 2.0 * terms
    return float(100.0 * terms.mean())


def mase(actual, forecast, denominator: str = "test", insample=None) -> float:
    """Mean absolute error over the mean absolute first difference.

    ``denominator='test'`` takes the differences of ``actual`` itself;
    ``'train'`` takes them from ``insample`` (the conventional naive scale).
    Returns NaN, with a warning, when the scale is zero.
    """
    a, f = _pair(actual, forecast)
    if denominator == "test":
        ref = a
    elif denominator == "train":
        if insample is None:
            raise ConfigurationError("mase denominator 'train' needs the in-sample series")
        ref = np.asarray(insample, dtype=np.float64).ravel()
    else:
        raise ConfigurationError(f"mase denominator must be 'test' or 'train', got {denominator!r}")
    if ref.size < 2:
        raise DataError("mase needs at least two reference values")
    scale = float(np.abs(np.diff(ref)).mean())
    if scale == 0.0:
        warnings.warn("mase undefined: reference series is constant", RuntimeWarning, stacklevel=2)
        return math.nan
    return float(np.abs(a - f).mean() / scale)


@dataclass(frozen=True)
class ErrorRecord:
    method: str
    seed: int
    smape: float
    mase: float  # NaN when undefined


@dataclass(frozen=True)
class Aggregate:
    method: str
    mean_smape: float
    std_smape: float
    mean_mase: float
    std_mase: float
    n_seeds: int


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if len(values) == 0:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def aggregate_runs(records: Iterable[ErrorRecord]) -> Aggregate:
    """Mean and sample std over seeds; undefined MASE is left out of MASE stats only."""
    records = list(records)
    if not records:
        raise DataError("aggregate_runs needs at least one record")
    methods = {r.method for r in records}
    if len(methods) != 1:
        raise DataError(f"records mix methods {sorted(methods)}")
    smapes = [r.smape for r in records]
    mases = [r.mase for r in records if not math.isnan(r.mase)]
    if len(mases) < len(records):
        warnings.warn(f"{records[0].method}: {len(records) - len(mases)} record(s) with undefined "
                      "MASE left out of the MASE statistics", RuntimeWarning, stacklevel=2)
    mean_s, std_s = _mean_std(smapes)
    mean_m, std_m = _mean_std(mases)
    return Aggregate(records[0].method, mean_s, std_s, mean_m, std_m, len(records))


def pooled_errors(actuals: Sequence[np.ndarray], forecasts: Sequence[np.ndarray],
                  epsilon: float = SMAPE_EPSILON, factor2: bool = False,
                  mase_denominator: str = "test", insamples=None) -> tuple[float, float]:
    """Mean per-series SMAPE and mean per-series MASE (undefined series skipped)."""
    smapes, mases = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i, (a, f) in enumerate(zip(actuals, forecasts)):
            smapes.append(smape_mod(a, f, epsilon, factor2))
            ins = None if insamples is None else insamples[i]
            m = mase(a, f, mase_denominator, ins)
            if not math.isnan(m):
                mases.append(m)
    return float(np.mean(smapes)), float(np.mean(mases)) if mases else math.nan
