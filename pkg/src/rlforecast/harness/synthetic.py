"""Synthetic regime-switching demand with a known noise-free signal, plus stub committees.

Each series alternates between pattern generators in fixed-length segments.
The noise-free signal and the regime label of every day are kept, so stub
forecasters can be built that are exact in one regime and biased in the
others, which gives the selection agent a known best action per step.
"""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..datapipe import TimeSeries, write_csv
from ..errors import ConfigurationError

GENERATORS = ("sinusoidal", "trending", "intermittent")
START_DATE = dt.date(2013, 1, 1)


@dataclass
class SyntheticSpec:
    n_series: int = 10
    length: int = 300
    regimes: list = field(default_factory=lambda: ["sinusoidal", "trending"])
    segment_length: int = 14
    noise: float = 0.1
    level: list = field(default_factory=lambda: [10.0, 40.0])
    period: int = 7
    amplitude: float | None = None
    relative_amplitude: float = 0.4
    trend: float = 0.5
    intermittent_every: int = 3

    def __post_init__(self):
        if self.n_series < 1 or self.length < 2:
            raise ConfigurationError("synthetic spec needs n_series >= 1 and length >= 2")
        if not self.regimes or any(r not in GENERATORS for r in self.regimes):
            raise ConfigurationError(f"regimes must be a non-empty list drawn from {GENERATORS}")
        if not 1 <= self.segment_length <= self.length:
            raise ConfigurationError("segment_length must lie in [1, length]")
        if self.noise < 0 or self.period < 1 or self.intermittent_every < 1:
            raise ConfigurationError("noise >= 0, period >= 1 and intermittent_every >= 1 required")
        if self.amplitude is not None and self.amplitude < 0:
            raise ConfigurationError("amplitude must be non-negative")
        if len(self.level) != 2 or not 0 <= self.level[0] <= self.level[1]:
            raise ConfigurationError("level must be [low, high] with 0 <= low <= high")


@dataclass
class SyntheticDataset:
    series: list[TimeSeries]
    signal: np.ndarray
    regime: np.ndarray
    spec: SyntheticSpec
    seed: int

    def index(self, series_id: str) -> int:
        return self._ids[series_id]

    def __post_init__(self):
        self._ids = {s.series_id: i for i, s in enumerate(self.series)}

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        """``demand.csv`` in the ingestion format and ``regimes.csv`` alongside it."""
        directory = Path(directory)
        demand = write_csv(self.series, directory / "demand.csv")
        sidecar = directory / "regimes.csv"
        with sidecar.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["series_id", "date", "regime", "signal"])
            for i, s in enumerate(self.series):
                for t in range(len(s)):
                    day = (s.start + dt.timedelta(days=t)).isoformat()
                    writer.writerow([s.series_id, day, self.spec.regimes[self.regime[i, t]], repr(float(self.signal[i, t]))])
        return demand, sidecar


def pattern(kind: str, t: np.ndarray, level: float, spec: SyntheticSpec, phase: float) -> np.ndarray:
    """Noise-free demand of one generator at days ``t``."""
    if kind == "sinusoidal":
        amp = spec.relative_amplitude * level if spec.amplitude is None else spec.amplitude
        return level + amp * np.sin(2.0 * math.pi * t / spec.period + phase)
    if kind == "trending":
        return level * (1.0 + spec.trend * t / spec.length)
    if kind == "intermittent":
        return np.where((t + int(phase * 10)) % spec.intermittent_every == 0, level * spec.intermittent_every, 0.0)
    raise ConfigurationError(f"unknown generator {kind!r}")


def gen_synthetic(spec: SyntheticSpec | None = None, seed: int = 0) -> SyntheticDataset:
    """Integer demand series, their noise-free signal and per-day regime labels.

    Observed demand is the signal times ``(1 + noise * N(0, 1))``, rounded
    and clipped at zero.  Each series starts in a random regime and then
    cycles through ``spec.regimes`` every ``segment_length`` days.
    """
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    t = np.arange(spec.length)
    k = len(spec.regimes)
    signal = np.empty((spec.n_series, spec.length))
    regime = np.empty((spec.n_series, spec.length), dtype=np.int64)
    series = []
    for i in range(spec.n_series):
        level = rng.uniform(*spec.level)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        first = rng.integers(k)
        labels = (first + t // spec.segment_length) % k
        clean = np.empty(spec.length)
        for r, kind in enumerate(spec.regimes):
            mask = labels == r
            clean[mask] = pattern(kind, t, level, spec, phase)[mask]
        noisy = clean * (1.0 + spec.noise * rng.standard_normal(spec.length))
        values = np.maximum(np.floor(noisy + 0.5), 0.0)
        signal[i], regime[i] = clean, labels
        series.append(TimeSeries(f"S{i:03d}", values, START_DATE))
    return SyntheticDataset(series, signal, regime, spec, seed)


def _unit_hash(*parts) -> np.random.Generator:
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class StubCommittee:
    """Six oracle-derived forecasters over a synthetic dataset.

    ``specialists[r]`` is exact on the transformed noise-free signal whenever
    the day is in regime ``r`` and ``+margin`` above it otherwise.  The other
    members are ``truth +/- margin * (1 + U)`` with sign and ``U`` fresh per
    day and member, so they are never better than a specialist in its own
    regime by construction (before observation noise).
    """

    def __init__(self, dataset: SyntheticDataset, metadata: dict[str, TimeSeries], margin: float = 0.5,
                 specialists=(1, 4), seed: int = 0):
        if len(set(specialists)) != len(specialists) or not all(0 <= s < 6 for s in specialists):
            raise ConfigurationError(f"specialist slots must be distinct indices in [0, 6), got {specialists}")
        if len(specialists) != len(dataset.spec.regimes):
            raise ConfigurationError("need exactly one specialist per regime")
        self.dataset = dataset
        self.metadata = metadata
        self.margin = margin
        self.specialists = tuple(specialists)
        self.seed = seed

    def truth(self, series_id: str, days: np.ndarray) -> np.ndarray:
        meta = self.metadata[series_id]
        clean = self.dataset.signal[self.dataset.index(series_id), days] / meta.mean_scale
        return np.log(clean + 1.0) if meta.zero_adjusted else np.log(np.maximum(clean, 1e-12))

    def forecast(self, windows, horizon: int, context=None) -> np.ndarray:
        if context is None:
            raise ConfigurationError("stub committee needs (series_id, origin) context for each window")
        out = np.empty((len(context), horizon, 6))
        for n, (sid, origin) in enumerate(context):
            days = np.arange(origin, origin + horizon)
            truth = self.truth(sid, days)
            labels = self.dataset.regime[self.dataset.index(sid), days]
            noise_slots = [m for m in range(6) if m not in self.specialists]
            for step, day in enumerate(days):
                rng = _unit_hash(self.seed, sid, int(day))
                signs = rng.choice([-1.0, 1.0], size=len(noise_slots))
                mags = 1.0 + rng.random(len(noise_slots))
                out[n, step, noise_slots] = truth[step] + signs * self.margin * mags
            for r, slot in enumerate(self.specialists):
                out[n, :, slot] = np.where(labels == r, truth, truth + self.margin)
        return out
