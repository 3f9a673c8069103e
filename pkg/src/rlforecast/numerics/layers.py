"""Layer building blocks shared by the forecasters and the Q-networks.

Layers register their weights in a caller-supplied :class:`NetworkParams`
under a name prefix, so one parameter set can hold a whole network.  Input
widths are validated at call time and output shapes can be computed ahead of
time, which lets network constructors reject impossible stacks early.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .params import NetworkParams
from .tensor import (Tensor, concat, conv1d, conv1d_output_length, dense, gru_cell, gru_sequence,
                     lstm_cell, lstm_sequence)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    def __init__(self, params: NetworkParams, name: str, in_features: int, out_features: int,
                 rng: np.random.Generator, zero_init: bool = False):
        if in_features < 1 or out_features < 1:
            raise ConfigurationError(f"{name}: widths must be positive, got {in_features}->{out_features}")
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            w = glorot_uniform(rng, (in_features, out_features), in_features, out_features)
        self.weight = params.add(f"{name}.weight", w)
        self.bias = params.add(f"{name}.bias", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigurationError(
                f"linear layer expects (batch, {self.in_features}), got {x.shape}")
        return dense(x, self.weight, self.bias)


class Conv1d:
    """Valid (unpadded) 1-D convolution over ``(batch, length, channels)``."""

    def __init__(self, params: NetworkParams, name: str, in_channels: int, filters: int,
                 kernel_size: int, rng: np.random.Generator, stride: int = 1):
        if min(in_channels, filters, kernel_size) < 1:
            raise ConfigurationError(f"{name}: channels, filters and kernel must be positive")
        if stride < 1:
            raise ConfigurationError(f"{name}: stride must be >= 1")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        shape = (kernel_size, in_channels, filters)
        self.weight = params.add(
            f"{name}.weight",
            glorot_uniform(rng, shape, kernel_size * in_channels, kernel_size * filters))
        self.bias = params.add(f"{name}.bias", np.zeros(filters))

    def output_length(self, length: int) -> int:
        return conv1d_output_length(length, self.kernel_size, self.stride)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, self.stride)


class _Recurrent:
    gates = 0

    def __init__(self, params: NetworkParams, name: str, input_size: int, hidden_size: int,
                 rng: np.random.Generator, reverse: bool = False):
        if input_size < 1 or hidden_size < 1:
            raise ConfigurationError(f"{name}: input and hidden sizes must be positive")
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.reverse = reverse
        width = self.gates * hidden_size
        self.w_input = params.add(
            f"{name}.w_input", glorot_uniform(rng, (input_size, width), input_size, width))
        self.w_hidden = params.add(
            f"{name}.w_hidden", glorot_uniform(rng, (hidden_size, width), hidden_size, width))
        self.bias = params.add(f"{name}.bias", np.zeros(width))

    @property
    def output_size(self) -> int:
        return self.hidden_size

    def _project(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ConfigurationError(
                f"recurrent layer expects (batch, length, {self.input_size}), got {x.shape}")
        return dense(x, self.w_input, self.bias)


class LSTM(_Recurrent):
    """Single-layer LSTM returning the final hidden state."""

    gates = 4

    def step(self, xw_t: Tensor, hc: Tensor) -> Tensor:
        return lstm_cell(xw_t, hc, self.w_hidden)

    def __call__(self, x: Tensor) -> Tensor:
        return lstm_sequence(self._project(x), self.w_hidden, self.reverse)


class GRU(_Recurrent):
    """Single-layer GRU returning the final hidden state."""

    gates = 3

    def step(self, xw_t: Tensor, h: Tensor) -> Tensor:
        return gru_cell(xw_t, h, self.w_hidden)

    def __call__(self, x: Tensor) -> Tensor:
        return gru_sequence(self._project(x), self.w_hidden, self.reverse)


class BiLSTM:
    """Forward LSTM and time-reversed LSTM; final states concatenated."""

    def __init__(self, params: NetworkParams, name: str, input_size: int, hidden_size: int,
                 rng: np.random.Generator):
        self.forward = LSTM(params, f"{name}.fwd", input_size, hidden_size, rng)
        self.backward = LSTM(params, f"{name}.bwd", input_size, hidden_size, rng, reverse=True)
        self.hidden_size = hidden_size

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size

    def __call__(self, x: Tensor) -> Tensor:
        return concat([self.forward(x), self.backward(x)], axis=1)
