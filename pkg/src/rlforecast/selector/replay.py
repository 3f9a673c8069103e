"""Fixed-capacity experience replay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, UsageError
from .env import N_ACTIONS, STATE_WIDTH


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not 0 <= self.action < N_ACTIONS:
            raise ConfigurationError(f"action must lie in [0, {N_ACTIONS}), got {self.action}")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        transitions = list(transitions)
        return cls(np.stack([t.state for t in transitions]),
                   np.array([t.action for t in transitions], dtype=np.int64),
                   np.array([t.reward for t in transitions], dtype=np.float64),
                   np.stack([t.next_state for t in transitions]),
                   np.array([t.terminal for t in transitions], dtype=bool))


class ReplayBuffer:
    """Ring buffer; the oldest transition is overwritten once full."""

    def __init__(self, capacity: int, state_width: int = STATE_WIDTH):
        if capacity < 1:
            raise ConfigurationError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_width))
        self.next_states = np.zeros((capacity, state_width))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.terminal[i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw without replacement inside the batch."""
        if batch_size < 1:
            raise ConfigurationError("batch size must be positive")
        if batch_size > self.size:
            raise UsageError(f"cannot sample {batch_size} transitions from a buffer holding {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminal[idx])
