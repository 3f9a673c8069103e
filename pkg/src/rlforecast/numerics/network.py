"""Base class for every trainable network plus versioned parameter files."""
from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .params import NetworkParams
from .tensor import Tensor, as_tensor, check_finite, no_grad

MODEL_FORMAT_VERSION = 1


class Network:
    """A parameterised function of a batch of flat input vectors.

    Subclasses build their layers in ``__init__`` (raising
    ``ConfigurationError`` for impossible shapes) and implement ``forward``.
    """

    kind = "network"
    input_width = 0
    output_width = 0

    def __init__(self, config: dict, seed: int):
        self.config = dict(config)
        self.seed = seed
        self.params = NetworkParams()

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.input_width:
            raise ConfigurationError(
                f"{self.kind} expects input (batch, {self.input_width}), got {x.shape}")
        return check_finite(self.forward(x), f"{self.kind} forward pass")

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Inference without recording a graph; returns (batch, output_width)."""
        with no_grad():
            return self(np.atleast_2d(x)).data

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.kind, self.config)


def config_fingerprint(kind: str, config: dict) -> str:
    blob = json.dumps({"kind": kind, "config": config}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def model_filename(kind: str, fingerprint: str) -> str:
    return f"{kind}-{fingerprint}.model"


def save_network(net: Network, directory: str | Path, extra: dict | None = None) -> Path:
    """Write ``<kind>-<fingerprint>.model`` (an npz container with a JSON header)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / model_filename(net.kind, net.fingerprint)
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": net.kind,
        "fingerprint": net.fingerprint,
        "config": net.config,
        "seed": net.seed,
        "extra": extra or {},
    }
    arrays = {f"param:{name}": t.data for name, t in net.params.items()}
    buffer = io.BytesIO()
    np.savez(buffer, __header__=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    path.write_bytes(buffer.getvalue())
    return path


def read_model_file(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("format_version") != MODEL_FORMAT_VERSION:
            raise ConfigurationError(
                f"{path}: unsupported model format version {header.get('format_version')}")
        params = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    return header, params


def load_into(net: Network, path: str | Path) -> dict:
    """Load parameters into ``net``; refuse on kind or fingerprint mismatch."""
    header, params = read_model_file(path)
    if header["kind"] != net.kind or header["fingerprint"] != net.fingerprint:
        raise ConfigurationError(
            f"{path}: fingerprint mismatch (file {header['kind']}/{header['fingerprint']}, "
            f"expected {net.kind}/{net.fingerprint})")
    net.params.load_state_dict(params)
    return header
