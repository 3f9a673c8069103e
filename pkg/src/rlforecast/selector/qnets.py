"""Q-networks over the 41-value state: the CRFFNN agent and the plain FFNN baseline."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..numerics import GRU, Conv1d, Linear, Network
from ..numerics.tensor import Tensor
from .env import N_ACTIONS, STATE_WIDTH

DEFAULT_QNET_CONFIGS = {
    "crffnn": {"conv_filters": 8, "conv_kernel": 5, "recurrent": 32, "dense": 32, "zero_final": False},
    "ffnn": {"hidden": [64, 32], "zero_final": False},
}


class CRFFNN(Network):
    """Convolution over the state sequence, a GRU over the conv features, then a dense head."""

    kind = "crffnn"
    input_width = STATE_WIDTH
    output_width = N_ACTIONS

    def __init__(self, config: dict | None = None, seed: int = 0):
        cfg = {**DEFAULT_QNET_CONFIGS["crffnn"], **(config or {})}
        super().__init__(cfg, seed)
        rng = np.random.default_rng(seed)
        if cfg["conv_kernel"] > STATE_WIDTH:
            raise ConfigurationError(f"conv kernel {cfg['conv_kernel']} longer than the {STATE_WIDTH}-value state")
        self.conv = Conv1d(self.params, "conv", 1, cfg["conv_filters"], cfg["conv_kernel"], rng)
        self.rnn = GRU(self.params, "gru", cfg["conv_filters"], cfg["recurrent"], rng)
        self.hidden = Linear(self.params, "dense", cfg["recurrent"], cfg["dense"], rng)
        self.out = Linear(self.params, "out", cfg["dense"], N_ACTIONS, rng, zero_init=cfg["zero_final"])

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv(x.reshape(x.shape[0], STATE_WIDTH, 1)).relu()
        return self.out(self.hidden(self.rnn(h)).relu())


class FFNNAgent(Network):
    kind = "ffnn-agent"
    input_width = STATE_WIDTH
    output_width = N_ACTIONS

    def __init__(self, config: dict | None = None, seed: int = 0):
        cfg = {**DEFAULT_QNET_CONFIGS["ffnn"], **(config or {})}
        super().__init__(cfg, seed)
        rng = np.random.default_rng(seed)
        widths = [STATE_WIDTH] + list(cfg["hidden"])
        self.layers = [Linear(self.params, f"dense{i}", a, b, rng)
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]
        self.out = Linear(self.params, "out", widths[-1], N_ACTIONS, rng, zero_init=cfg["zero_final"])

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x).relu()
        return self.out(x)


ARCHITECTURES = {"crffnn": CRFFNN, "ffnn": FFNNAgent}


def build_qnet(arch: str, config: dict | None = None, seed: int = 0) -> Network:
    if arch not in ARCHITECTURES:
        raise ConfigurationError(f"unknown Q-network architecture {arch!r}; choose from {sorted(ARCHITECTURES)}")
    return ARCHITECTURES[arch](config, seed)


def q_forward(net: Network, states) -> np.ndarray:
    """Q-values without recording a graph; one state gives ``(6,)``, a batch ``(n, 6)``."""
    states = np.asarray(states, dtype=np.float64)
    out = net.predict(np.atleast_2d(states))
    return out[0] if states.ndim == 1 else out
