"""Online/target Q-network pair, the Bellman targets and the gradient step."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, NumericError
from ..numerics import Adam, Network, clip_grad_norm, pick
from ..numerics.tensor import tmean
from .env import N_ACTIONS
from .qnets import build_qnet
from .replay import Batch

TARGET_RULES = ("double", "max_target")


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy: uniform action with probability ``epsilon``, else the first argmax."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q_values))


def compute_targets(rewards, next_q_online, next_q_target, terminal, gamma: float,
                    rule: str = "double") -> np.ndarray:
    """Bellman targets for a batch.

    ``double`` evaluates the online network's argmax with the target network;
    ``max_target`` takes the target network's own maximum.  Terminal rows and
    ``gamma == 0`` return the reward unchanged.
    """
    if rule not in TARGET_RULES:
        raise ConfigurationError(f"target rule must be one of {TARGET_RULES}, got {rule!r}")
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=bool)
    if gamma == 0.0:
        return rewards.copy()
    next_q_target = np.asarray(next_q_target, dtype=np.float64)
    if rule == "double":
        best = np.argmax(np.asarray(next_q_online), axis=1)
        bootstrap = next_q_target[np.arange(len(rewards)), best]
    else:
        bootstrap = next_q_target.max(axis=1)
    return np.where(terminal, rewards, rewards + gamma * bootstrap)


class QNetworks:
    """Online network (trained) and target network (changed only by ``sync``)."""

    def __init__(self, arch: str = "crffnn", config: dict | None = None, seed: int = 0,
                 lr: float = 1e-3, sync_period: int = 250, grad_clip: float | None = None):
        if sync_period < 1:
            raise ConfigurationError(f"sync period must be >= 1, got {sync_period}")
        self.arch = arch
        self.online: Network = build_qnet(arch, config, seed)
        self.target: Network = build_qnet(arch, config, seed)
        self.target.params.copy_from(self.online.params)
        self.optimizer = Adam(self.online.params, lr=lr)
        self.sync_period = sync_period
        self.grad_clip = grad_clip
        self.steps_since_sync = 0
        self.updates = 0
        self.syncs = 0

    def sync(self) -> None:
        self.target.params.copy_from(self.online.params)
        self.steps_since_sync = 0
        self.syncs += 1

    def maybe_sync(self) -> bool:
        if self.steps_since_sync >= self.sync_period:
            self.sync()
            return True
        return False

    def q_online(self, states) -> np.ndarray:
        return self.online.predict(states)


def sync_target(qn: QNetworks) -> None:
    qn.sync()


def ddqn_update(batch: Batch, qn: QNetworks, gamma: float, rule: str = "double") -> float:
    """One optimiser step on the online network; returns the batch loss.

    The target network is read, never written.  Targets are constants (no
    gradient flows through them).
    """
    n = len(batch)
    if n == 0:
        raise ConfigurationError("ddqn_update needs a non-empty batch")
    if gamma == 0.0:
        next_online = next_target = None
    else:
        next_target = qn.target.predict(batch.next_states)
        next_online = qn.online.predict(batch.next_states) if rule == "double" else None
    y = compute_targets(batch.rewards, next_online, next_target, batch.terminal, gamma, rule)
    qn.online.params.zero_grad()
    q = qn.online(batch.states)
    err = pick(q, batch.actions) - y
    loss = tmean(err * err)
    if not np.isfinite(loss.data).all():
        raise NumericError(f"non-finite DDQN loss after {qn.updates} updates")
    loss.backward()
    if qn.grad_clip:
        clip_grad_norm(qn.online.params, qn.grad_clip)
    qn.optimizer.step()
    qn.updates += 1
    qn.steps_since_sync += 1
    return loss.item()
