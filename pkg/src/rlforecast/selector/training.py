"""Training loop for the selection agent, greedy rollouts and test-time forecasting."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..datapipe import TimeSeries, postprocess_series
from ..errors import ConfigurationError, UsageError
from ..numerics import load_into, save_network
from .arirbes import ArirbesState, Decision, arirbes_check
from .ddqn import TARGET_RULES, QNetworks, ddqn_update
from .env import FEEDBACK_MODES, N_ACTIONS, WINDOW, EpisodeData, build_state, env_step, reward
from .replay import ReplayBuffer, Transition


@dataclass
class SelectorConfig:
    arch: str = "crffnn"
    qnet: dict = field(default_factory=dict)
    gamma: float = 0.9
    lr: float = 1e-3
    batch_size: int = 64
    replay_capacity: int = 50_000
    sync_period: int = 250
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    max_episodes: int = 1000
    early_stopping: bool = True
    arirbes_n: int = 20
    arirbes_patience: int = 15
    arirbes_delta: float = 0.005
    feedback: str = "forecast"
    target_rule: str = "double"
    update_every: int = 1
    grad_clip: float | None = None

    def __post_init__(self):
        if self.feedback not in FEEDBACK_MODES:
            raise ConfigurationError(f"feedback must be one of {FEEDBACK_MODES}, got {self.feedback!r}")
        if self.target_rule not in TARGET_RULES:
            raise ConfigurationError(f"target_rule must be one of {TARGET_RULES}, got {self.target_rule!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.max_episodes < 0 or self.batch_size < 1 or self.update_every < 1:
            raise ConfigurationError("max_episodes >= 0, batch_size >= 1 and update_every >= 1 required")
        for name in ("epsilon_start", "epsilon_end", "epsilon_decay_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")

    def epsilon(self, episode: int) -> float:
        """Linear decay from start to end over the first ``decay_fraction`` of the episodes."""
        span = self.epsilon_decay_fraction * self.max_episodes
        frac = 1.0 if span <= 0 else min(1.0, episode / span)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


@dataclass
class TrainedSelector:
    """A trained agent plus its reward log.

    ``stop_episode`` is where early stopping fired (or would have fired, when
    the run was configured to continue); ``stop_state`` holds the parameters
    an early-stopped run would have returned.
    """

    qnets: QNetworks
    config: SelectorConfig
    raw_rewards: list
    smoothed_rewards: list
    best_episode: int
    stop_episode: int | None
    stop_state: dict | None
    seconds: float
    stop_seconds: float | None = None

    @property
    def network(self):
        return self.qnets.online

    @property
    def episodes_run(self) -> int:
        return len(self.raw_rewards)

    @property
    def stopped_early(self) -> bool:
        return self.episodes_run < self.config.max_episodes

    def early_stopped_view(self) -> "TrainedSelector":
        """The agent an early-stopped run would have returned (same object if it did stop)."""
        if self.stop_state is None:
            raise UsageError("early stopping never fired in this run")
        if self.stopped_early:
            return self
        qn = QNetworks(self.qnets.arch, self.qnets.online.config, self.qnets.online.seed)
        qn.online.params.load_state_dict(self.stop_state)
        qn.sync()
        n = self.stop_episode
        return TrainedSelector(qn, self.config, self.raw_rewards[:n], self.smoothed_rewards[:n],
                               min(self.best_episode, n), n, self.stop_state,
                               self.stop_seconds or self.seconds, self.stop_seconds)

    def save(self, directory: str | Path) -> Path:
        return save_network(self.qnets.online, directory,
                            {"selector_config": asdict(self.config), "best_episode": self.best_episode,
                             "episodes_run": self.episodes_run})


def load_selector_network(path: str | Path, config: SelectorConfig, seed: int = 0) -> QNetworks:
    qn = QNetworks(config.arch, config.qnet, seed)
    load_into(qn.online, path)
    qn.sync()
    return qn


def _streams(seed: int) -> dict[str, np.random.Generator | int]:
    init, explore, replay, order = np.random.SeedSequence([seed, 0x5E1EC7]).spawn(4)
    return {"init": int(init.generate_state(1)[0]), "explore": np.random.default_rng(explore),
            "replay": np.random.default_rng(replay), "order": np.random.default_rng(order)}


def train_selector(episodes: Sequence[EpisodeData], config: SelectorConfig | None = None,
                   seed: int = 0, progress=None) -> TrainedSelector:
    """Double-DQN training over repeated passes through ``episodes``.

    Each episode is one series' decision steps.  Early-stopping bookkeeping
    always runs; with ``config.early_stopping`` false, training simply
    continues past the stop point and the would-be result is kept in
    ``stop_state``.  The returned online network holds the snapshot with the
    best smoothed episode reward.
    """
    cfg = config or SelectorConfig()
    episodes = list(episodes)
    if cfg.max_episodes > 0 and not episodes:
        raise ConfigurationError("train_selector needs at least one episode")
    for ep in episodes:
        if ep.actuals is None:
            raise ConfigurationError(f"training episode {ep.series_id!r} has no actuals")
    rng = _streams(seed)
    qn = QNetworks(cfg.arch, cfg.qnet, rng["init"], cfg.lr, cfg.sync_period, cfg.grad_clip)
    online = qn.online
    buffer = ReplayBuffer(cfg.replay_capacity)
    monitor = ArirbesState(cfg.arirbes_n, cfg.arirbes_patience, cfg.arirbes_delta)
    explore, replay = rng["explore"], rng["replay"]

    best_sr, best_state, best_episode = -math.inf, online.params.state_dict(), 0
    stop_episode, stop_state, stop_seconds = None, None, None
    order: list[int] = []
    steps = 0
    started = time.perf_counter()
    for episode in range(cfg.max_episodes):
        if not order:
            order = list(rng["order"].permutation(len(episodes)))
        data = episodes[order.pop()]
        eps = cfg.epsilon(episode)
        h = len(data)
        state = build_state(data.window0, data.forecasts[0])
        total = 0.0
        for t in range(h):
            if eps > 0.0 and explore.random() < eps:
                action = int(explore.integers(N_ACTIONS))
            else:
                action = int(np.argmax(online.predict(state[None])[0]))
            terminal = t == h - 1
            next_cf = data.forecasts[t] if terminal else data.forecasts[t + 1]
            next_state, r = env_step(state, action, data.actuals[t], next_cf, cfg.feedback)
            buffer.push(Transition(state, action, r, next_state, terminal))
            total += r
            steps += 1
            if len(buffer) >= cfg.batch_size and steps % cfg.update_every == 0:
                ddqn_update(buffer.sample(cfg.batch_size, replay), qn, cfg.gamma, cfg.target_rule)
                qn.maybe_sync()
            state = next_state
        decision = arirbes_check(monitor, total / h)
        sr = monitor.smoothed[-1]
        if not math.isnan(sr) and sr > best_sr:
            best_sr, best_state, best_episode = sr, online.params.state_dict(), episode + 1
        if progress is not None:
            progress(episode + 1, total / h, sr)
        if decision is Decision.STOP and stop_episode is None:
            stop_episode, stop_state = episode + 1, {k: v.copy() for k, v in best_state.items()}
            stop_seconds = time.perf_counter() - started
            if cfg.early_stopping:
                break
    online.params.load_state_dict(best_state)
    qn.sync()
    return TrainedSelector(qn, cfg, list(monitor.rewards), list(monitor.smoothed), best_episode,
                           stop_episode, stop_state, time.perf_counter() - started, stop_seconds)


@dataclass
class Rollout:
    actions: np.ndarray
    chosen: np.ndarray
    rewards: np.ndarray | None

    @property
    def mean_reward(self) -> float:
        if self.rewards is None:
            raise UsageError("rollout ran without actuals; no rewards")
        return float(self.rewards.mean())


def run_policy(policy, windows0: np.ndarray, forecasts: np.ndarray, actuals: np.ndarray | None = None,
               feedback: str = "forecast") -> Rollout:
    """Greedy rollout of many episodes at once.

    ``policy`` is any object with ``predict(states) -> (n, 6)`` (a Q-network)
    or a callable returning actions for a batch of states.
    """
    if feedback == "actual" and actuals is None:
        raise ConfigurationError("'actual' feedback needs the actuals")
    windows = np.array(np.atleast_2d(windows0), dtype=np.float64)
    forecasts = np.asarray(forecasts, dtype=np.float64)
    if forecasts.ndim == 2:
        forecasts = forecasts[None]
    n, h, _ = forecasts.shape
    if windows.shape != (n, WINDOW):
        raise ConfigurationError(f"expected {n} windows of {WINDOW}, got {windows.shape}")
    rows = np.arange(n)
    actions = np.empty((n, h), dtype=np.int64)
    chosen = np.empty((n, h))
    for t in range(h):
        states = np.concatenate([windows, forecasts[:, t]], axis=1)
        if hasattr(policy, "predict"):
            a = np.argmax(policy.predict(states), axis=1)
        else:
            a = np.asarray(policy(states), dtype=np.int64)
        actions[:, t] = a
        chosen[:, t] = forecasts[rows, t, a]
        newest = chosen[:, t] if feedback == "forecast" else actuals[:, t]
        windows[:, :-1] = windows[:, 1:]
        windows[:, -1] = newest
    rewards = None if actuals is None else reward(chosen, np.asarray(actuals, dtype=np.float64))
    return Rollout(actions, chosen, rewards)


def rollout_episodes(policy, episodes: Sequence[EpisodeData], feedback: str = "forecast") -> Rollout:
    windows = np.stack([e.window0 for e in episodes])
    forecasts = np.stack([e.forecasts for e in episodes])
    actuals = None if any(e.actuals is None for e in episodes) else np.stack([e.actuals for e in episodes])
    return run_policy(policy, windows, forecasts, actuals, feedback)


def evaluate_policy(policy, episodes: Sequence[EpisodeData], feedback: str = "forecast") -> float:
    """Mean per-step reward of the greedy policy."""
    return rollout_episodes(policy, episodes, feedback).mean_reward


def select_and_forecast(agent, series: TimeSeries, committee, horizon: int = 28, origin: int | None = None,
                        rounding: str = "nearest") -> np.ndarray:
    """Integer forecasts for the ``horizon`` days after ``origin``.

    Actual demand is unknown here, so the chosen forecast always feeds the
    rolling window.  ``agent`` may be a ``TrainedSelector`` or a bare policy.
    """
    if not series.is_preprocessed:
        raise UsageError("select_and_forecast needs a preprocessed series")
    origin = len(series.transformed) if origin is None else origin
    if origin < WINDOW:
        raise ConfigurationError(f"need {WINDOW} values before the forecast origin, have {origin}")
    window0 = series.transformed[origin - WINDOW:origin]
    forecasts = committee.forecast(window0[None], horizon, context=[(series.series_id, origin)])
    policy = agent.network if isinstance(agent, TrainedSelector) else agent
    roll = run_policy(policy, window0[None], forecasts)
    return postprocess_series(roll.chosen[0], series, rounding)


def write_reward_log(selector: TrainedSelector, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "raw_reward", "smoothed_reward"])
        for i, (r, s) in enumerate(zip(selector.raw_rewards, selector.smoothed_rewards), start=1):
            writer.writerow([i, repr(r), "" if math.isnan(s) else repr(s)])
    return path
