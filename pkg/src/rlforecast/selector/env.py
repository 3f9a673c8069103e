"""The model-selection MDP: states, rewards and the rolling demand window."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

WINDOW = 35
N_ACTIONS = 6
STATE_WIDTH = WINDOW + N_ACTIONS
FEEDBACK_MODES = ("forecast", "actual")
_TINY = np.finfo(np.float64).tiny


def build_state(window, cf) -> np.ndarray:
    """``[d_{t-35} .. d_{t-1}, f_t1 .. f_t6]`` as one length-41 vector."""
    window = np.asarray(window, dtype=np.float64).reshape(-1)
    cf = np.asarray(cf, dtype=np.float64).reshape(-1)
    if window.size != WINDOW:
        raise ConfigurationError(f"state window must hold {WINDOW} demands, got {window.size}")
    if cf.size != N_ACTIONS:
        raise ConfigurationError(f"state needs {N_ACTIONS} committee forecasts, got {cf.size}")
    return np.concatenate([window, cf])


def reward(forecast: float, actual: float):
    """``exp(-(f - a)^2)``: 1 for an exact step, decaying with the squared error.

    Floored at the smallest positive double so an astronomically bad step
    still yields a reward inside ``(0, 1]``.
    """
    return np.maximum(np.exp(-np.square(np.asarray(forecast) - np.asarray(actual))), _TINY)


def _check_feedback(feedback: str) -> None:
    if feedback not in FEEDBACK_MODES:
        raise ConfigurationError(f"feedback mode must be one of {FEEDBACK_MODES}, got {feedback!r}")


def env_step(state, action: int, actual: float, next_cf, feedback: str = "forecast"):
    """Score ``action`` against ``actual`` and roll the window forward one day.

    The newest window slot receives the chosen forecast (``forecast`` mode)
    or the observed demand (``actual`` mode).  Returns ``(next_state, reward)``.
    """
    _check_feedback(feedback)
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (STATE_WIDTH,):
        raise ConfigurationError(f"state must have shape ({STATE_WIDTH},), got {state.shape}")
    if not 0 <= action < N_ACTIONS:
        raise ConfigurationError(f"action must lie in [0, {N_ACTIONS}), got {action}")
    chosen = state[WINDOW + action]
    newest = chosen if feedback == "forecast" else float(actual)
    window = np.empty(WINDOW)
    window[:-1] = state[1:WINDOW]
    window[-1] = newest
    return build_state(window, next_cf), float(reward(chosen, actual))


@dataclass
class EpisodeData:
    """One series' decision steps: the opening window, per-step committee forecasts and actuals.

    ``actuals`` is ``None`` when the outcomes are unknown (test-time forecasting).
    """

    series_id: str
    window0: np.ndarray
    forecasts: np.ndarray
    actuals: np.ndarray | None = None

    def __post_init__(self):
        self.window0 = np.asarray(self.window0, dtype=np.float64)
        self.forecasts = np.asarray(self.forecasts, dtype=np.float64)
        if self.window0.shape != (WINDOW,):
            raise ConfigurationError(f"episode window must have shape ({WINDOW},), got {self.window0.shape}")
        if self.forecasts.ndim != 2 or self.forecasts.shape[1] != N_ACTIONS:
            raise ConfigurationError(f"episode forecasts must be (steps, {N_ACTIONS}), got {self.forecasts.shape}")
        if self.actuals is not None:
            self.actuals = np.asarray(self.actuals, dtype=np.float64)
            if self.actuals.shape != (len(self.forecasts),):
                raise ConfigurationError("episode actuals must have one value per step")

    def __len__(self) -> int:
        return len(self.forecasts)
