"""Named trainable parameters with gradient slots."""
from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from ..errors import ConfigurationError
from .tensor import Tensor


class NetworkParams:
    """Ordered collection of parameter tensors.

    Every parameter gets a zero gradient array of identical shape at
    registration, so parameters untouched by a loss read back as exactly 0.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, op=name)
        t.grad = np.zeros_like(t.data)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    @property
    def size(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) ^ set(state)
        if missing:
            raise ConfigurationError(f"parameter name mismatch: {sorted(missing)}")
        for name, t in self._tensors.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != t.data.shape:
                raise ConfigurationError(
                    f"shape mismatch for {name!r}: {value.shape} vs {t.data.shape}")
            t.data[...] = value

    def copy_from(self, other: "NetworkParams") -> None:
        self.load_state_dict({name: t.data for name, t in other.items()})

    def digest(self) -> str:
        """SHA-256 over names and raw parameter bytes."""
        h = hashlib.sha256()
        for name, t in self._tensors.items():
            h.update(name.encode())
            h.update(t.data.tobytes())
        return h.hexdigest()

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._tensors.values()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([t.grad.ravel() for t in self._tensors.values()])
