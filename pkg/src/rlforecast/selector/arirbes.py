"""Average-reward improvement-rate early stopping.

Episode rewards are smoothed with a trailing mean over ``n`` episodes.  Each
new smoothed value is compared to the best so far as a ratio; a ratio of at
least ``1 + delta`` counts as progress and resets the patience counter,
anything less increments it.  Training stops when the counter reaches
``patience``.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from ..errors import ConfigurationError


class Decision(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass
class ArirbesState:
    n: int = 20
    patience: int = 15
    delta: float = 0.005
    rewards: list = field(default_factory=list)
    smoothed: list = field(default_factory=list)
    best: float | None = None
    counter: int = 0
    stopped_at: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.patience < 1 or self.delta < 0:
            raise ConfigurationError(
                f"need n >= 1, patience >= 1, delta >= 0; got {self.n}, {self.patience}, {self.delta}")
        self._window = deque(self.rewards[-self.n:], maxlen=self.n)

    @property
    def stopped(self) -> bool:
        return self.stopped_at is not None


def arirbes_check(state: ArirbesState, episode_reward: float) -> Decision:
    state.rewards.append(float(episode_reward))
    state._window.append(float(episode_reward))
    if len(state._window) < state.n:
        state.smoothed.append(math.nan)
        return Decision.CONTINUE
    sr = sum(state._window) / state.n
    state.smoothed.append(sr)
    if state.best is None:
        # the first complete window only sets the reference point
        state.best = sr
    elif sr / state.best >= 1.0 + state.delta:
        state.best = sr
        state.counter = 0
    else:
        # capped so a monitor-only run that trains past the stop point stays in range
        state.counter = min(state.counter + 1, state.patience)
    if state.counter >= state.patience:
        if state.stopped_at is None:
            state.stopped_at = len(state.rewards)
        return Decision.STOP
    return Decision.CONTINUE
