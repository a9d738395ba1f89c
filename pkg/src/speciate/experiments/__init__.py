"""Experiment harness: U-turns, misattribution curves, collapses, config and CLI."""

from speciate.experiments.collapse import CollapseTable, scaling_collapse
from speciate.experiments.config import Config, ConfigError, load_config, parse_config_text
from speciate.experiments.output import RunManifest
from speciate.experiments.runner import HIERARCHICAL_BETAS, run_experiment
from speciate.experiments.uturn import AttributionMatrix, misattribution_curve, pooled_misattribution, u_turn

__all__ = [
    "AttributionMatrix",
    "CollapseTable",
    "Config",
    "ConfigError",
    "HIERARCHICAL_BETAS",
    "RunManifest",
    "load_config",
    "misattribution_curve",
    "parse_config_text",
    "pooled_misattribution",
    "run_experiment",
    "scaling_collapse",
    "u_turn",
]
