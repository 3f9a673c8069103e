"""Dense float64 autodiff core, layers, optimizer and network base class."""
from .layers import GRU, LSTM, BiLSTM, Conv1d, Linear, glorot_uniform
from .network import Network, config_fingerprint, load_into, model_filename, save_network
from .optim import Adam, clip_grad_norm
from .params import NetworkParams
from .tensor import (Tensor, as_tensor, check_finite, concat, conv1d, dense, gru_cell,
                     gru_sequence, lstm_cell, lstm_sequence, matmul, no_grad, pick)

__all__ = [
    "Adam", "BiLSTM", "Conv1d", "GRU", "LSTM", "Linear", "Network", "NetworkParams", "Tensor",
    "as_tensor", "check_finite", "clip_grad_norm", "concat", "config_fingerprint", "conv1d",
    "dense", "glorot_uniform", "gru_cell", "gru_sequence", "load_into", "lstm_cell",
    "lstm_sequence", "matmul", "model_filename", "no_grad", "pick", "save_network",
]
