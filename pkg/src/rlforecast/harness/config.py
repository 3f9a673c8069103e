"""Experiment configuration: nested dataclasses with every default embedded, loadable from YAML."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..committee import DEFAULT_ARCHITECTURES, KINDS, ForecasterKind, TrainConfig
from ..ensembles import StackingConfig
from ..errors import ConfigurationError
from ..selector import SelectorConfig
from ..selector.env import WINDOW as SELECTOR_WINDOW
from .synthetic import SyntheticSpec

MEMBER_METHODS = tuple(k.label for k in KINDS)
ENSEMBLE_METHODS = ("Mean", "Median", "Stacking")
SELECTOR_METHODS = ("FFNN-DDQL", "CRFFNN-ARIRBES")
BENCHMARK_METHODS = MEMBER_METHODS + ENSEMBLE_METHODS + SELECTOR_METHODS
# optional rows: CRFFNN trained to max_episodes without early stopping, and the per-step oracle
EXTRA_METHODS = ("CRFFNN", "Oracle")
ALL_METHODS = BENCHMARK_METHODS + EXTRA_METHODS


@dataclass
class DatasetConfig:
    """A user CSV; ``None`` path means the synthetic benchmark."""

    path: str | None = None
    max_series: int | None = None
    start: str | None = None
    end: str | None = None


@dataclass
class CommitteeConfig:
    mode: str = "trained"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12, batch_size=64, lr=3e-3, patience=4))
    architectures: dict = field(default_factory=dict)
    workers: int = 1
    stub_margin: float = 0.5
    stub_specialists: list = field(default_factory=lambda: [1, 4])

    def __post_init__(self):
        if self.mode not in ("trained", "stub"):
            raise ConfigurationError(f"committee.mode must be 'trained' or 'stub', got {self.mode!r}")
        if self.workers < 1:
            raise ConfigurationError("committee.workers must be >= 1")
        for name in self.architectures:
            ForecasterKind.parse(name)

    def architecture_map(self) -> dict[ForecasterKind, dict]:
        arch = dict(DEFAULT_ARCHITECTURES)
        for name, value in self.architectures.items():
            arch[ForecasterKind.parse(name)] = dict(value)
        return arch


@dataclass
class MetricConfig:
    smape_epsilon: float = 0.1
    smape_factor2: bool = False
    mase_denominator: str = "test"
    rounding: str = "nearest"

    def __post_init__(self):
        if self.mase_denominator not in ("test", "train"):
            raise ConfigurationError("metrics.mase_denominator must be 'test' or 'train'")
        if self.rounding not in ("nearest", "ceil"):
            raise ConfigurationError("metrics.rounding must be 'nearest' or 'ceil'")


def _desk_selector() -> SelectorConfig:
    return SelectorConfig(gamma=0.5, epsilon_decay_fraction=0.1, batch_size=32, update_every=4, max_episodes=300)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    synthetic: SyntheticSpec = field(default_factory=lambda: SyntheticSpec(n_series=8, length=240))
    data_seed: int = 0
    window: int = 35
    horizon: int = 28
    validation: int = 28
    seeds: list = field(default_factory=lambda: list(range(10)))
    committee: CommitteeConfig = field(default_factory=CommitteeConfig)
    stacking: StackingConfig = field(default_factory=StackingConfig)
    selector: SelectorConfig = field(default_factory=_desk_selector)
    ffnn_selector: dict = field(default_factory=lambda: {"arch": "ffnn", "early_stopping": False})
    methods: list = field(default_factory=lambda: list(BENCHMARK_METHODS))
    metrics: MetricConfig = field(default_factory=MetricConfig)
    out: str = "runs/benchmark"
    record_timing: bool = True
    cache: bool = True

    def __post_init__(self):
        if self.window < 1 or self.horizon < 1 or self.validation < 1:
            raise ConfigurationError("window, horizon and validation must all be >= 1")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"duplicate seeds in {self.seeds}")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; choose from {list(ALL_METHODS)}")
        if not self.methods:
            raise ConfigurationError("need at least one method")
        if self.uses_selectors and self.window != SELECTOR_WINDOW:
            raise ConfigurationError(f"selector methods need window = {SELECTOR_WINDOW}, got {self.window}")
        self.ffnn_config()

    @property
    def uses_selectors(self) -> bool:
        return any(m in self.methods for m in ("FFNN-DDQL", "CRFFNN-ARIRBES", "CRFFNN"))

    @property
    def ordered_methods(self) -> list[str]:
        return [m for m in ALL_METHODS if m in self.methods]

    def ffnn_config(self) -> SelectorConfig:
        return dataclasses.replace(self.selector, **self.ffnn_selector)

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


def _merge(base, data, where: str):
    """``base`` with the keys of ``data`` replaced, recursing into nested dataclasses."""
    if data is None:
        return base
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    cls = type(base)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for key, value in data.items():
        if dataclasses.is_dataclass(hints[key]):
            value = _merge(getattr(base, key), value, f"{where}.{key}" if where else key)
        kwargs[key] = value
    try:
        return dataclasses.replace(base, **kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{where or 'config'}: {exc}") from None


def config_from_dict(data: dict | None) -> ExperimentConfig:
    """Defaults overridden key by key; unknown keys are errors."""
    return _merge(ExperimentConfig(), data or {}, "")


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    return config_from_dict(data)


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,3,5"`` or a mix such as ``"0-2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigurationError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigurationError(f"empty seed list {text!r}")
    return seeds
