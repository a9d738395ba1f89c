"""Exact-score diffusion laboratory for speciation transitions in mixture targets."""

__version__ = "0.1.0"

from speciate.core import (
    IntegrationError,
    Schedule,
    ScoreModel,
    TrajectoryBatch,
    derive_sample_rng,
    forward_diffuse,
    integrate_backward,
    make_schedule,
)
from speciate.mixture import IsingComponent, MixtureModel

__all__ = [
    "IntegrationError",
    "IsingComponent",
    "MixtureModel",
    "Schedule",
    "ScoreModel",
    "TrajectoryBatch",
    "derive_sample_rng",
    "forward_diffuse",
    "integrate_backward",
    "make_schedule",
]
