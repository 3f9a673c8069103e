"""Non-learning and learned combinations of the six committee forecasts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, NumericError
from .numerics import Adam, Linear, Network
from .numerics.tensor import Tensor, tmean

N_MEMBERS = 6


def _committee_values(cf) -> np.ndarray:
    cf = np.asarray(cf, dtype=np.float64)
    if cf.shape[-1] != N_MEMBERS:
        raise DataError(f"committee forecast must have {N_MEMBERS} values on its last axis, got {cf.shape}")
    if not np.isfinite(cf).all():
        raise DataError("committee forecast contains non-finite values")
    return cf


def ensemble_mean(cf) -> np.ndarray | float:
    """Arithmetic mean over the last axis (one step or a whole ``(..., 6)`` array)."""
    out = _committee_values(cf).mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def ensemble_median(cf) -> np.ndarray | float:
    """Median over the last axis; with six values, the mean of the two central ones."""
    out = np.median(_committee_values(cf), axis=-1)
    return float(out) if out.ndim == 0 else out


class StackingNetwork(Network):
    """The meta-model: ``6 -> hidden (ReLU) -> 1``."""

    kind = "stacking"
    input_width = N_MEMBERS
    output_width = 1

    def __init__(self, hidden: int = 16, seed: int = 0):
        super().__init__({"hidden": hidden}, seed)
        rng = np.random.default_rng(seed)
        self.hidden = Linear(self.params, "hidden", N_MEMBERS, hidden, rng)
        self.out = Linear(self.params, "out", hidden, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(self.hidden(x).relu())


@dataclass
class StackingConfig:
    hidden: int = 16
    epochs: int = 300
    batch_size: int = 64
    lr: float = 1e-2


@dataclass
class StackingModel:
    network: StackingNetwork
    config: StackingConfig = field(default_factory=StackingConfig)
    train_mse: float | None = None

    def predict(self, cf) -> np.ndarray | float:
        cf = _committee_values(cf)
        flat = cf.reshape(-1, N_MEMBERS)
        out = self.network.predict(flat).reshape(cf.shape[:-1])
        return float(out) if out.ndim == 0 else out


def stacking_train(config: StackingConfig | None, forecasts, actuals, seed: int = 0) -> StackingModel:
    """Fit the meta-model by MSE on ``(committee forecast, actual)`` pairs.

    The pairs must come from data the committee was not fitted on (the
    validation region in the experiment).
    """
    cfg = config or StackingConfig()
    x = _committee_values(forecasts).reshape(-1, N_MEMBERS)
    y = np.asarray(actuals, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise ConfigurationError("stacking needs at least one training pair")
    if len(y) != len(x):
        raise DataError(f"{len(x)} forecasts but {len(y)} actuals")
    net = StackingNetwork(cfg.hidden, seed)
    opt = Adam(net.params, lr=cfg.lr)
    rng = np.random.default_rng(seed + 1)
    loss_value = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(x), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            net.params.zero_grad()
            err = net(x[idx]).reshape(len(idx)) - y[idx]
            loss = tmean(err * err)
            if not np.isfinite(loss.data).all():
                raise NumericError(f"stacking: non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
    if cfg.epochs > 0:
        loss_value = float(np.mean((net.predict(x).reshape(-1) - y) ** 2))
    return StackingModel(net, cfg, loss_value)


def stacking_predict(model: StackingModel, cf) -> np.ndarray | float:
    return model.predict(cf)
