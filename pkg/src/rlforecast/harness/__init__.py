"""Configuration, synthetic data, multi-seed experiments, exports and the CLI."""
from .config import (ALL_METHODS, BENCHMARK_METHODS, CommitteeConfig, DatasetConfig, ExperimentConfig,
                     MetricConfig, config_from_dict, load_config, parse_seeds)
from .experiment import (ExperimentResult, PreparedData, TestVault, build_committees, episode_origins,
                         load_dataset, prepare, run_experiment, run_seed)
from .export import export_results, format_table, load_result, result_from_dict, result_to_dict
from .synthetic import StubCommittee, SyntheticDataset, SyntheticSpec, gen_synthetic

__all__ = [
    "ALL_METHODS", "BENCHMARK_METHODS", "CommitteeConfig", "DatasetConfig", "ExperimentConfig",
    "ExperimentResult", "MetricConfig", "PreparedData", "StubCommittee", "SyntheticDataset",
    "SyntheticSpec", "TestVault", "build_committees", "config_from_dict", "episode_origins",
    "export_results", "format_table", "gen_synthetic", "load_config", "load_dataset", "load_result",
    "parse_seeds", "prepare", "result_from_dict", "result_to_dict", "run_experiment", "run_seed",
]
