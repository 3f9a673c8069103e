"""Reinforcement-learning forecaster selection: environment, Q-networks, DDQN and early stopping."""
from .arirbes import ArirbesState, Decision, arirbes_check
from .ddqn import QNetworks, compute_targets, ddqn_update, select_action, sync_target
from .env import N_ACTIONS, STATE_WIDTH, WINDOW, EpisodeData, build_state, env_step, reward
from .qnets import CRFFNN, FFNNAgent, build_qnet, q_forward
from .replay import Batch, ReplayBuffer, Transition
from .training import (Rollout, SelectorConfig, TrainedSelector, evaluate_policy, load_selector_network,
                       rollout_episodes, run_policy, select_and_forecast, train_selector,
                       write_reward_log)

__all__ = [
    "ArirbesState", "Batch", "CRFFNN", "Decision", "EpisodeData", "FFNNAgent", "N_ACTIONS",
    "QNetworks", "ReplayBuffer", "Rollout", "STATE_WIDTH", "SelectorConfig", "TrainedSelector",
    "Transition", "WINDOW", "arirbes_check", "build_qnet", "build_state", "compute_targets",
    "ddqn_update", "env_step", "evaluate_policy", "load_selector_network", "q_forward", "reward",
    "rollout_episodes", "run_policy", "select_action", "select_and_forecast", "sync_target",
    "train_selector", "write_reward_log",
]
