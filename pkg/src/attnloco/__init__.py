"""Attention-based map encoding for legged locomotion.

Subpackages: :mod:`attnloco.terrain` (height fields and curriculum),
:mod:`attnloco.sim` (vectorised surrogate environment and rewards) and
:mod:`attnloco.ppo` (rollouts, GAE and the clipped-surrogate update). The
autodiff core lives in :mod:`attnloco.tensor`, layers in :mod:`attnloco.nn`.
"""

from .encoders import ENCODER_KINDS, EncoderConfig, build_encoder
from .errors import CheckpointError, ConfigurationError, DimensionError, EnvironmentFault, UnsupportedFeatureError
from .policy import ActorCritic, ObservationBundle

__version__ = "0.1.0"

__all__ = [
    "ENCODER_KINDS",
    "EncoderConfig",
    "build_encoder",
    "ActorCritic",
    "ObservationBundle",
    "CheckpointError",
    "ConfigurationError",
    "DimensionError",
    "EnvironmentFault",
    "UnsupportedFeatureError",
]
