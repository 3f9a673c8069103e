"""The six-member forecasting committee.

Every member is a global one-step model over a window of transformed demand.
Members are trained on windows pooled across all series, keep their best
validation snapshot, and are then refit on train+validation for the number
of epochs that snapshot needed.  Multi-step forecasts are produced
recursively, each member feeding its own predictions back into its window.
"""
from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .datapipe import WINDOW, Windows
from .errors import ConfigurationError, NumericError
from .numerics import (GRU, LSTM, Adam, BiLSTM, Conv1d, Linear, Network, load_into,
                       no_grad, save_network)
from .numerics.tensor import Tensor, tmean

log = logging.getLogger(__name__)


class ForecasterKind(enum.IntEnum):
    """Committee members; the integer value is the selector's action index."""

    FFNN = 0
    LSTM = 1
    GRU = 2
    BiLSTM = 3
    CNN = 4
    CNN_LSTM = 5

    @classmethod
    def parse(cls, name: str) -> "ForecasterKind":
        key = name.replace("-", "_")
        for kind in cls:
            if kind.name.lower() == key.lower():
                return kind
        raise ConfigurationError(f"unknown forecaster kind {name!r}")

    @property
    def label(self) -> str:
        return self.name.replace("_", "-")


KINDS = tuple(ForecasterKind)

DEFAULT_ARCHITECTURES: dict[ForecasterKind, dict] = {
    ForecasterKind.FFNN: {"hidden": [64, 32]},
    ForecasterKind.LSTM: {"hidden": 32},
    ForecasterKind.GRU: {"hidden": 32},
    ForecasterKind.BiLSTM: {"hidden": 32},
    ForecasterKind.CNN: {"filters": [16, 16], "kernels": [5, 3], "dense": 32},
    ForecasterKind.CNN_LSTM: {"filters": [16], "kernels": [5], "hidden": 32},
}


def _positive(name: str, value) -> int:
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


class ForecastNetwork(Network):
    """Base for the committee networks: ``(batch, window)`` in, ``(batch, 1)`` out."""

    output_width = 1

    def __init__(self, kind: ForecasterKind, arch: dict, window: int, seed: int):
        super().__init__({"arch": arch, "window": window}, seed)
        self.kind = kind.label.lower()
        self.forecaster_kind = kind
        self.input_width = _positive("window", window)


class FFNNForecaster(ForecastNetwork):
    def __init__(self, arch: dict, window: int, seed: int):
        super().__init__(ForecasterKind.FFNN, arch, window, seed)
        rng = np.random.default_rng(seed)
        widths = [window] + [_positive("hidden width", h) for h in arch["hidden"]] + [1]
        self.layers = [Linear(self.params, f"dense{i}", a, b, rng)
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = layer(x).relu()
        return self.layers[-1](x)


class RecurrentForecaster(ForecastNetwork):
    """The window as a length-``window`` sequence of scalars -> recurrent -> dense -> 1."""

    cells = {ForecasterKind.LSTM: LSTM, ForecasterKind.GRU: GRU, ForecasterKind.BiLSTM: BiLSTM}

    def __init__(self, kind: ForecasterKind, arch: dict, window: int, seed: int):
        super().__init__(kind, arch, window, seed)
        rng = np.random.default_rng(seed)
        hidden = _positive("hidden", arch["hidden"])
        self.rnn = self.cells[kind](self.params, "rnn", 1, hidden, rng)
        self.head = Linear(self.params, "head", self.rnn.output_size, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.rnn(x.reshape(x.shape[0], self.input_width, 1)))


def _conv_stack(params, arch: dict, window: int, rng) -> tuple[list[Conv1d], int, int]:
    filters, kernels = list(arch["filters"]), list(arch["kernels"])
    if not filters or len(filters) != len(kernels):
        raise ConfigurationError("filters and kernels must be non-empty lists of equal length")
    convs, length, channels = [], window, 1
    for i, (f, k) in enumerate(zip(filters, kernels)):
        f, k = _positive("filters", f), _positive("kernel", k)
        if k > length:
            raise ConfigurationError(f"conv layer {i}: kernel {k} longer than its input length {length}")
        conv = Conv1d(params, f"conv{i}", channels, f, k, rng)
        length, channels = conv.output_length(length), f
        convs.append(conv)
    return convs, length, channels


class CNNForecaster(ForecastNetwork):
    def __init__(self, arch: dict, window: int, seed: int):
        super().__init__(ForecasterKind.CNN, arch, window, seed)
        rng = np.random.default_rng(seed)
        self.convs, length, channels = _conv_stack(self.params, arch, window, rng)
        self.flat = length * channels
        self.hidden = Linear(self.params, "dense", self.flat, _positive("dense", arch["dense"]), rng)
        self.head = Linear(self.params, "head", self.hidden.out_features, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = x.reshape(x.shape[0], self.input_width, 1)
        for conv in self.convs:
            h = conv(h).relu()
        return self.head(self.hidden(h.reshape(x.shape[0], self.flat)).relu())


class CNNLSTMForecaster(ForecastNetwork):
    """Convolutional features fed as a sequence into an LSTM."""

    def __init__(self, arch: dict, window: int, seed: int):
        super().__init__(ForecasterKind.CNN_LSTM, arch, window, seed)
        rng = np.random.default_rng(seed)
        self.convs, _, channels = _conv_stack(self.params, arch, window, rng)
        self.rnn = LSTM(self.params, "rnn", channels, _positive("hidden", arch["hidden"]), rng)
        self.head = Linear(self.params, "head", self.rnn.output_size, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = x.reshape(x.shape[0], self.input_width, 1)
        for conv in self.convs:
            h = conv(h).relu()
        return self.head(self.rnn(h))


def build_network(kind: ForecasterKind, arch: dict | None = None, window: int = WINDOW,
                  seed: int = 0) -> ForecastNetwork:
    kind = ForecasterKind(kind)
    arch = dict(DEFAULT_ARCHITECTURES[kind] if arch is None else arch)
    try:
        if kind is ForecasterKind.FFNN:
            return FFNNForecaster(arch, window, seed)
        if kind in RecurrentForecaster.cells:
            return RecurrentForecaster(kind, arch, window, seed)
        if kind is ForecasterKind.CNN:
            return CNNForecaster(arch, window, seed)
        return CNNLSTMForecaster(arch, window, seed)
    except KeyError as exc:
        raise ConfigurationError(f"{kind.label} architecture is missing key {exc}") from None


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 10
    refit: bool = True


@dataclass
class TrainedForecaster:
    """A committee member plus what its training run recorded."""

    kind: ForecasterKind
    network: ForecastNetwork
    train_config: TrainConfig = field(default_factory=TrainConfig)
    val_error: float | None = None
    best_epoch: int = 0
    history: list = field(default_factory=list)
    seconds: float = 0.0

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.network.predict(x)


def build_forecaster(kind, config: dict | None = None, window: int = WINDOW, seed: int = 0,
                     train_config: TrainConfig | None = None) -> TrainedForecaster:
    kind = ForecasterKind(kind)
    return TrainedForecaster(kind, build_network(kind, config, window, seed), train_config or TrainConfig())


def batched_predict(model, inputs: np.ndarray, batch: int = 1024) -> np.ndarray:
    """``model.predict`` over chunks, returned as a flat vector."""
    if len(inputs) == 0:
        return np.zeros(0)
    return np.concatenate([np.asarray(model.predict(inputs[i:i + batch])).reshape(-1)
                           for i in range(0, len(inputs), batch)])


def mse_on(model, windows: Windows) -> float:
    if len(windows) == 0:
        return float("nan")
    pred = batched_predict(model, windows.inputs)
    return float(np.mean((pred - windows.targets) ** 2))


def train_global(forecaster: TrainedForecaster, train: Windows, epochs: int | None = None,
                 validation: Windows | None = None, rng: np.random.Generator | None = None) -> TrainedForecaster:
    """Minimise one-step MSE over pooled windows with Adam.

    With validation samples, the snapshot (initial parameters included) with
    the lowest validation MSE is restored at the end and training stops after
    ``patience`` epochs without improvement.  Without them, the last epoch
    is kept.
    """
    cfg = forecaster.train_config
    epochs = cfg.epochs if epochs is None else epochs
    if len(train) == 0:
        raise ConfigurationError("train_global needs at least one training sample")
    net = forecaster.network
    rng = rng if rng is not None else np.random.default_rng(net.seed + 1)
    opt = Adam(net.params, lr=cfg.lr)
    use_val = validation is not None and len(validation) > 0
    started = time.perf_counter()

    best_val = mse_on(net, validation) if use_val else float("nan")
    best_state, best_epoch, since = net.params.state_dict(), 0, 0
    history = [{"epoch": 0, "train_mse": None, "val_mse": best_val}]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            net.params.zero_grad()
            try:
                pred = net(train.inputs[idx])
            except NumericError as exc:
                raise NumericError(f"{forecaster.kind.label}: epoch {epoch}, batch at {lo}: {exc}") from None
            err = pred.reshape(len(idx)) - train.targets[idx]
            loss = tmean(err * err)
            if not np.isfinite(loss.data).all():
                raise NumericError(f"{forecaster.kind.label}: non-finite loss at epoch {epoch}, batch at {lo}")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        record = {"epoch": epoch, "train_mse": total / len(train)}
        if use_val:
            val = mse_on(net, validation)
            record["val_mse"] = val
            if val < best_val:
                best_val, best_state, best_epoch, since = val, net.params.state_dict(), epoch, 0
            else:
                since += 1
        history.append(record)
        if use_val and since >= cfg.patience:
            break
    if use_val:
        net.params.load_state_dict(best_state)
    else:
        best_epoch = len(history) - 1
    forecaster.val_error = best_val if use_val else None
    forecaster.best_epoch = best_epoch
    forecaster.history = history
    forecaster.seconds += time.perf_counter() - started
    return forecaster


def fit_member(kind, train: Windows, validation: Windows, train_config: TrainConfig | None = None,
               arch: dict | None = None, window: int = WINDOW, seed: int = 0) -> TrainedForecaster:
    """Select the epoch count on validation, then refit from scratch on train+validation."""
    return fit_member_stages(kind, train, validation, train_config, arch, window, seed)[1]


def fit_member_stages(kind, train: Windows, validation: Windows, train_config: TrainConfig | None = None,
                      arch: dict | None = None, window: int = WINDOW,
                      seed: int = 0) -> tuple[TrainedForecaster, TrainedForecaster]:
    """``(selection_model, final_model)``; the first never saw validation targets.

    Without refitting both entries are the same object.
    """
    cfg = train_config or TrainConfig()
    chosen = train_global(build_forecaster(kind, arch, window, seed, cfg), train, validation=validation)
    if not cfg.refit or len(validation) == 0:
        return chosen, chosen
    final = build_forecaster(kind, arch, window, seed, cfg)
    final.seconds = chosen.seconds
    if chosen.best_epoch > 0:
        train_global(final, Windows.stack([train, validation], window), epochs=chosen.best_epoch)
    final.val_error = chosen.val_error
    final.best_epoch = chosen.best_epoch
    final.history = chosen.history
    return chosen, final


def forecast_recursive(model, window: np.ndarray, horizon: int = 28) -> np.ndarray:
    """Feed one-step predictions back into the window.

    ``window`` may be one window ``(w,)`` or a batch ``(n, w)``; the result is
    ``(horizon,)`` or ``(n, horizon)`` respectively.
    """
    window = np.asarray(window, dtype=np.float64)
    single = window.ndim == 1
    buf = np.atleast_2d(window).copy()
    out = np.empty((buf.shape[0], horizon))
    with no_grad():
        for step in range(horizon):
            nxt = np.asarray(model.predict(buf)).reshape(-1)
            out[:, step] = nxt
            buf[:, :-1] = buf[:, 1:]
            buf[:, -1] = nxt
    return out[0] if single else out


class CommitteeLike(Protocol):
    def forecast(self, windows: np.ndarray, horizon: int, context=None) -> np.ndarray: ...


@dataclass
class Committee:
    """Six trained members in action-index order."""

    members: list[TrainedForecaster]

    def __post_init__(self):
        kinds = [m.kind for m in self.members]
        if kinds != list(KINDS):
            raise ConfigurationError(f"committee members must be ordered {[k.label for k in KINDS]}, got {kinds}")

    @property
    def window(self) -> int:
        return self.members[0].network.input_width

    def forecast(self, windows: np.ndarray, horizon: int, context=None) -> np.ndarray:
        """Recursive forecasts ``(n, horizon, 6)``; each member recurses on its own output."""
        windows = np.atleast_2d(windows)
        return np.stack([forecast_recursive(m, windows, horizon) for m in self.members], axis=-1)

    def save(self, directory: str | Path, meta: dict | None = None) -> Path:
        directory = Path(directory)
        files = {}
        for m in self.members:
            extra = {"val_error": m.val_error, "best_epoch": m.best_epoch, "seconds": m.seconds}
            files[m.kind.label] = save_network(m.network, directory, extra).name
        manifest = {"members": files, "meta": meta or {}}
        path = directory / "committee.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, directory: str | Path, architectures: dict | None = None, window: int = WINDOW,
             seeds: Sequence[int] | None = None, expect_meta: dict | None = None) -> "Committee":
        """Rebuild from ``save`` output, refusing files whose fingerprint or metadata differ."""
        directory = Path(directory)
        manifest = json.loads((directory / "committee.json").read_text())
        if expect_meta is not None:
            stored = manifest.get("meta", {})
            diff = {k: (stored.get(k), v) for k, v in expect_meta.items() if stored.get(k) != v}
            if diff:
                raise ConfigurationError(f"{directory}: committee metadata mismatch {diff}")
        members = []
        for i, kind in enumerate(KINDS):
            arch = (architectures or {}).get(kind)
            seed = seeds[i] if seeds is not None else 0
            m = build_forecaster(kind, arch, window, seed)
            stored = manifest["members"].get(kind.label)
            if stored is None:
                raise ConfigurationError(f"{directory}: committee manifest has no {kind.label} member")
            # load the recorded file so a config change surfaces as a fingerprint refusal
            header = load_into(m.network, directory / stored)
            m.val_error = header["extra"].get("val_error")
            m.best_epoch = header["extra"].get("best_epoch", 0)
            m.seconds = header["extra"].get("seconds", 0.0)
            members.append(m)
        return cls(members)


def train_committee(train: Windows, validation: Windows, seed: int, train_config: TrainConfig | None = None,
                    architectures: dict | None = None, window: int = WINDOW, workers: int = 1) -> Committee:
    """Fit all six members; independent, so ``workers > 1`` trains them in threads."""
    return train_committee_stages(train, validation, seed, train_config, architectures, window, workers)[1]


def train_committee_stages(train: Windows, validation: Windows, seed: int,
                           train_config: TrainConfig | None = None, architectures: dict | None = None,
                           window: int = WINDOW, workers: int = 1) -> tuple[Committee, Committee]:
    """The committee fitted on train only, and the one refitted on train+validation."""
    seeds = member_seeds(seed)

    def fit(i):
        kind = KINDS[i]
        pair = fit_member_stages(kind, train, validation, train_config, (architectures or {}).get(kind),
                                 window, seeds[i])
        m = pair[1]
        log.info("%s: val mse %.5f after %d epochs (%.1fs)", kind.label, m.val_error or float("nan"),
                 m.best_epoch, m.seconds)
        return pair

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            pairs = list(pool.map(fit, range(len(KINDS))))
    else:
        pairs = [fit(i) for i in range(len(KINDS))]
    return Committee([p[0] for p in pairs]), Committee([p[1] for p in pairs])


def member_seeds(seed: int) -> list[int]:
    """Distinct, reproducible initialisation seeds for the six members of one run."""
    ss = np.random.SeedSequence([seed, 0xC0])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(len(KINDS))]
