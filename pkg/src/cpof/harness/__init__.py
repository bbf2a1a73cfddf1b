"""Synthetic scenes, experiment configuration and detection curves."""

from .config import ExperimentConfig, load_config, parse_config
from .experiment import run_curve, run_trial, wilson_interval
from .scenes import SceneSpec, default_targets, generate_scene
