"""Experiment plumbing: config, runs, sweeps, op counting and the CLI."""

from deplm.harness.config import ExperimentConfig, load_config, preset_config
from deplm.harness.experiment import ExperimentReport, run_experiment
from deplm.harness.opcount import OpCountBreakdown, count_training_ops, estimate_energy
from deplm.harness.sweep import sweep_sparsity_noise
