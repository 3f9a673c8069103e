"""Multi-seed experiment: data, committee, ensembles, selectors, test forecasts and metrics.

Every stage sees only the first ``val_end`` days of each series.  Test-split
actuals live in a ``TestVault`` that is opened once, by the metric stage,
after all forecasts exist.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import math
import os
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..committee import KINDS, Committee, member_seeds, train_committee_stages
from ..datapipe import (SplitSpec, TimeSeries, fill_missing, load_csv, pooled_windows, postprocess_series,
                        preprocess, write_forecasts_csv)
from ..ensembles import ensemble_mean, ensemble_median, stacking_train
from ..errors import ConfigurationError, DataError
from ..metrics import Aggregate, ErrorRecord, aggregate_runs, pooled_errors
from ..selector import EpisodeData, run_policy, train_selector, write_reward_log
from .config import MEMBER_METHODS, ExperimentConfig
from .synthetic import StubCommittee, SyntheticDataset, gen_synthetic

log = logging.getLogger(__name__)

WORKERS_ENV = "RLFORECAST_WORKERS"
STAGES = ("committee", "selector", "evaluate")


class TestVault:
    """Holds test-horizon actuals and logs every access."""

    __test__ = False  # not a pytest class

    def __init__(self, actuals: dict[str, np.ndarray]):
        self._actuals = {k: np.asarray(v, dtype=np.float64).copy() for k, v in actuals.items()}
        self.access_log: list[str] = []

    def __len__(self) -> int:
        return len(self._actuals)

    def reveal(self, stage: str) -> dict[str, np.ndarray]:
        self.access_log.append(stage)
        return {k: v.copy() for k, v in self._actuals.items()}


@dataclass
class PreparedData:
    """Preprocessed series cut at the end of validation, plus the sealed test actuals."""

    series: list[TimeSeries]
    splits: dict[str, SplitSpec]
    vault: TestVault
    insample: dict[str, np.ndarray]
    digest: str
    synthetic: SyntheticDataset | None = None

    @property
    def ids(self) -> list[str]:
        return [s.series_id for s in self.series]


def _clip_dates(series: TimeSeries, start: dt.date | None, end: dt.date | None) -> TimeSeries | None:
    lo = 0 if start is None else (start - series.start).days
    hi = len(series) if end is None else (end - series.start).days + 1
    lo, hi = max(lo, 0), min(hi, len(series))
    if hi <= lo:
        return None
    return TimeSeries(series.series_id, series.values[lo:hi].copy(), series.start + dt.timedelta(days=lo))


def _digest(series: list[TimeSeries]) -> str:
    h = hashlib.sha256()
    for s in series:
        h.update(s.series_id.encode())
        h.update(s.start.isoformat().encode())
        h.update(np.ascontiguousarray(s.values, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def load_dataset(config: ExperimentConfig) -> tuple[list[TimeSeries], SyntheticDataset | None]:
    ds = config.dataset
    if ds.path is None:
        synth = gen_synthetic(config.synthetic, config.data_seed)
        return list(synth.series), synth
    series = load_csv(ds.path)
    start = dt.date.fromisoformat(ds.start) if ds.start else None
    end = dt.date.fromisoformat(ds.end) if ds.end else None
    if start or end:
        series = [c for c in (_clip_dates(s, start, end) for s in series) if c is not None]
    if ds.max_series is not None:
        series = series[:ds.max_series]
    return series, None


def prepare(config: ExperimentConfig, series: list[TimeSeries] | None = None,
            synthetic: SyntheticDataset | None = None) -> PreparedData:
    """Fill gaps, split, seal the test horizon and preprocess what remains."""
    if series is None:
        series, synthetic = load_dataset(config)
    minimum = config.window + 1 + config.validation + config.horizon
    kept, splits, actuals, insample = [], {}, {}, {}
    for s in series:
        if len(s) < minimum:
            warnings.warn(f"series {s.series_id!r} has {len(s)} days, fewer than the {minimum} needed; skipped",
                          RuntimeWarning, stacklevel=2)
            continue
        s = fill_missing(s)
        split = SplitSpec.for_length(len(s), config.horizon, config.validation)
        visible = preprocess(s.head(split.val_end))
        kept.append(visible)
        splits[s.series_id] = split
        actuals[s.series_id] = s.values[split.val_end:split.end]
        insample[s.series_id] = s.values[:split.val_end].copy()
    if not kept:
        raise DataError("no series long enough for the configured window, validation and horizon")
    if config.committee.mode == "stub" and synthetic is None:
        raise ConfigurationError("the stub committee needs the synthetic dataset")
    return PreparedData(kept, splits, TestVault(actuals), insample, _digest(series), synthetic)


@dataclass
class SeedOutcome:
    seed: int
    records: list[ErrorRecord] = field(default_factory=list)
    seconds: dict = field(default_factory=dict)
    stop_episodes: dict = field(default_factory=dict)
    failure: dict | None = None
    trace: list = field(default_factory=list)
    agents: dict = field(default_factory=dict, repr=False)  # filled only with keep_agents=True


@dataclass
class ExperimentResult:
    methods: list[str]
    seeds: list[int]
    records: list[ErrorRecord]
    seconds: dict = field(default_factory=dict)  # method -> {seed: seconds}
    stop_episodes: dict = field(default_factory=dict)  # method -> {seed: episodes}
    failures: list = field(default_factory=list)
    record_timing: bool = True

    @property
    def ok(self) -> bool:
        return not self.failures

    def records_for(self, method: str) -> list[ErrorRecord]:
        return [r for r in self.records if r.method == method]

    def aggregates(self) -> list[Aggregate]:
        out = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for m in self.methods:
                recs = self.records_for(m)
                if recs:
                    out.append(aggregate_runs(recs))
        return out

    def train_seconds(self, method: str) -> float | None:
        if not self.record_timing:
            return None
        values = list(self.seconds.get(method, {}).values())
        return float(np.mean(values)) if values else None


class _Stage:
    def __init__(self, outcome: SeedOutcome):
        self.outcome = outcome
        self.current = "setup"

    def __call__(self, name: str):
        self.current = name
        self.outcome.trace.append(name)
        log.info("seed %d: %s", self.outcome.seed, name)


def _committee_meta(config: ExperimentConfig, data: PreparedData, seed: int) -> dict:
    return {"seed": seed, "data": data.digest, "window": config.window,
            "train": dataclasses.asdict(config.committee.train),
            "architectures": {k.label: v for k, v in config.committee.architecture_map().items()}}


def build_committees(config: ExperimentConfig, data: PreparedData, seed: int,
                     directory: Path | None) -> tuple[object, object, dict[str, float]]:
    """``(selection_committee, final_committee, seconds per member)``, from cache when possible."""
    cc = config.committee
    if cc.mode == "stub":
        stub = StubCommittee(data.synthetic, {s.series_id: s for s in data.series}, cc.stub_margin,
                             tuple(cc.stub_specialists), seed)
        return stub, stub, {m: 0.0 for m in MEMBER_METHODS}
    arch = cc.architecture_map()
    meta = _committee_meta(config, data, seed)
    if directory is not None and config.cache and (directory / "final" / "committee.json").exists():
        try:
            sel = Committee.load(directory / "selection", arch, config.window, member_seeds(seed), meta)
            fin = Committee.load(directory / "final", arch, config.window, member_seeds(seed), meta)
            log.info("seed %d: reusing committee in %s", seed, directory)
            return sel, fin, {m.kind.label: m.seconds for m in fin.members}
        except (ConfigurationError, FileNotFoundError) as exc:
            log.info("seed %d: cached committee unusable (%s); retraining", seed, exc)
    train = pooled_windows(data.series, lambda s: data.splits[s.series_id], "train", config.window)
    val = pooled_windows(data.series, lambda s: data.splits[s.series_id], "validation", config.window)
    sel, fin = train_committee_stages(train, val, seed, cc.train, arch, config.window, cc.workers)
    if directory is not None:
        sel.save(directory / "selection", meta)
        fin.save(directory / "final", meta)
    return sel, fin, {m.kind.label: m.seconds for m in fin.members}


def episode_origins(data: PreparedData, which: str, window: int) -> tuple[np.ndarray, list]:
    windows, context = [], []
    for s in data.series:
        split = data.splits[s.series_id]
        origin = split.train_end if which == "validation" else split.val_end
        windows.append(s.transformed[origin - window:origin])
        context.append((s.series_id, origin))
    return np.stack(windows), context


def run_seed(config: ExperimentConfig, data: PreparedData, seed: int, out: Path | None,
             stop_after: str = "evaluate", keep_agents: bool = False) -> SeedOutcome:
    """One full repetition; failures are captured, not raised.

    ``keep_agents`` attaches the trained selectors to the outcome (in-process use only).
    """
    outcome = SeedOutcome(seed)
    stage = _Stage(outcome)
    seed_dir = None if out is None else out / f"seed-{seed}"
    methods = config.ordered_methods
    try:
        stage("committee")
        sel_committee, committee, member_secs = build_committees(
            config, data, seed, None if seed_dir is None else seed_dir / "committee")
        outcome.seconds.update(member_secs)
        if stop_after == "committee":
            return outcome

        stage("validation-forecasts")
        v_windows, v_context = episode_origins(data, "validation", config.window)
        val_cf = sel_committee.forecast(v_windows, config.validation, context=v_context)
        val_actual = np.stack([s.transformed[data.splits[s.series_id].train_end:data.splits[s.series_id].val_end]
                               for s in data.series])

        stage("ensembles")
        stacking = None
        if "Stacking" in methods:
            started = time.perf_counter()
            stacking = stacking_train(config.stacking, val_cf, val_actual, seed)
            outcome.seconds["Stacking"] = time.perf_counter() - started
        outcome.seconds.setdefault("Mean", 0.0)
        outcome.seconds.setdefault("Median", 0.0)

        stage("selectors")
        agents = {}
        if config.uses_selectors:
            episodes = [EpisodeData(s.series_id, v_windows[i], val_cf[i], val_actual[i])
                        for i, s in enumerate(data.series)]
            if "FFNN-DDQL" in methods:
                agents["FFNN-DDQL"] = train_selector(episodes, config.ffnn_config(), seed)
            if "CRFFNN-ARIRBES" in methods or "CRFFNN" in methods:
                full_run = "CRFFNN" in methods
                cfg = dataclasses.replace(config.selector, arch="crffnn",
                                          early_stopping=not full_run and config.selector.early_stopping)
                trained = train_selector(episodes, cfg, seed)
                if full_run:
                    agents["CRFFNN"] = trained
                if "CRFFNN-ARIRBES" in methods:
                    # one monitored run yields both rows: the early-stopped agent is its snapshot at the stop point
                    agents["CRFFNN-ARIRBES"] = (trained.early_stopped_view()
                                                if trained.stop_state is not None else trained)
            for name, agent in agents.items():
                outcome.seconds[name] = float(agent.seconds)
                outcome.stop_episodes[name] = agent.episodes_run
                if seed_dir is not None:
                    tag = name.lower()
                    agent.save(seed_dir / "selectors" / tag)
                    write_reward_log(agent, seed_dir / "selectors" / f"{tag}-rewards.csv")
            if keep_agents:
                outcome.agents = dict(agents)
        if stop_after == "selector":
            return outcome

        stage("test-forecasts")
        t_windows, t_context = episode_origins(data, "test", config.window)
        test_cf = committee.forecast(t_windows, config.horizon, context=t_context)
        transformed = {}
        for k, kind in enumerate(KINDS):
            if kind.label in methods or "Oracle" in methods:
                transformed[kind.label] = test_cf[:, :, k]
        if "Mean" in methods:
            transformed["Mean"] = ensemble_mean(test_cf)
        if "Median" in methods:
            transformed["Median"] = ensemble_median(test_cf)
        if stacking is not None:
            transformed["Stacking"] = stacking.predict(test_cf)
        for name, agent in agents.items():
            transformed[name] = run_policy(agent.network, t_windows, test_cf).chosen
        forecasts = {name: np.stack([postprocess_series(v[i], s, config.metrics.rounding)
                                     for i, s in enumerate(data.series)])
                     for name, v in transformed.items()}
        if seed_dir is not None:
            for name, f in forecasts.items():
                if name in methods:
                    write_forecasts_csv({sid: f[i] for i, sid in enumerate(data.ids)},
                                        seed_dir / "forecasts" / f"{name.lower()}.csv")

        stage("metrics")
        actual_map = data.vault.reveal("metrics")
        actuals = [actual_map[sid] for sid in data.ids]
        if "Oracle" in methods:
            members = np.stack([forecasts[k.label] for k in KINDS], axis=-1)
            a = np.stack(actuals)[..., None]
            best = np.argmin(np.abs(members - a), axis=-1)
            forecasts["Oracle"] = np.take_along_axis(members, best[..., None], axis=-1)[..., 0]
            outcome.seconds["Oracle"] = 0.0
        mc = config.metrics
        insamples = [data.insample[sid] for sid in data.ids]
        for name in methods:
            smape, mase = pooled_errors(actuals, list(forecasts[name]), mc.smape_epsilon, mc.smape_factor2,
                                        mc.mase_denominator, insamples)
            outcome.records.append(ErrorRecord(name, seed, smape, mase))
    except Exception as exc:  # noqa: BLE001 - any stage failure goes to the manifest
        log.error("seed %d failed during %s: %s", seed, stage.current, exc)
        outcome.failure = {"seed": seed, "stage": stage.current, "error": f"{type(exc).__name__}: {exc}",
                           "traceback": traceback.format_exc()}
    return outcome


def worker_count(default: int = 1) -> int:
    text = os.environ.get(WORKERS_ENV)
    if not text:
        return default
    try:
        n = int(text)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {text!r}") from None
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


_SHARED: dict = {}


def _pool_run(seed: int) -> SeedOutcome:
    config, data, out, stop_after = _SHARED["job"]
    return run_seed(config, data, seed, out, stop_after)


def run_experiment(config: ExperimentConfig, data: PreparedData | None = None, out: str | Path | None = "",
                   workers: int | None = None, stop_after: str = "evaluate") -> ExperimentResult:
    """All seeds of ``config``; results are collected in the calling process.

    ``out=""`` uses ``config.out``; ``out=None`` keeps everything in memory.
    With more than one worker, seeds run in forked processes.
    """
    if stop_after not in STAGES:
        raise ConfigurationError(f"stop_after must be one of {STAGES}")
    out_dir = Path(config.out) if out == "" else (None if out is None else Path(out))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        config.dump(out_dir / "config.yaml")
    data = data if data is not None else prepare(config)
    workers = worker_count() if workers is None else workers
    seeds = list(config.seeds)
    if workers > 1 and len(seeds) > 1:
        import multiprocessing as mp
        _SHARED["job"] = (config, data, out_dir, stop_after)
        try:
            with mp.get_context("fork").Pool(min(workers, len(seeds))) as pool:
                outcomes = pool.map(_pool_run, seeds)
        finally:
            _SHARED.pop("job", None)
    else:
        outcomes = [run_seed(config, data, s, out_dir, stop_after) for s in seeds]

    result = ExperimentResult(config.ordered_methods, seeds, [], record_timing=config.record_timing)
    for oc in outcomes:
        result.records.extend(oc.records)
        for method, secs in oc.seconds.items():
            result.seconds.setdefault(method, {})[oc.seed] = secs
        for method, n in oc.stop_episodes.items():
            result.stop_episodes.setdefault(method, {})[oc.seed] = n
        if oc.failure is not None:
            result.failures.append(oc.failure)
    if out_dir is not None:
        from .export import export_results
        if stop_after == "evaluate":
            export_results(result, out_dir)
        manifest = out_dir / "failures.json"
        if result.failures:
            manifest.write_text(json.dumps(result.failures, indent=2) + "\n")
        elif manifest.exists():
            manifest.unlink()
    return result


def oracle_gap(result: ExperimentResult, method: str) -> dict[int, float]:
    """Relative SMAPE excess of ``method`` over the oracle, per seed."""
    oracle = {r.seed: r.smape for r in result.records_for("Oracle")}
    return {r.seed: (r.smape - oracle[r.seed]) / oracle[r.seed] if oracle[r.seed] > 0 else math.inf
            for r in result.records_for(method) if r.seed in oracle}
