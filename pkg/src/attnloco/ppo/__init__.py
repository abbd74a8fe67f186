"""PPO trainer: GAE, clipped surrogate, adaptive learning rate and stage orchestration."""

from .core import (
    Minibatch,
    PPOConfig,
    RolloutBuffer,
    UpdateStats,
    adapt_lr,
    gaussian_kl,
    normalize_advantages,
    ppo_loss,
    ppo_update,
)
from .gae import compute_gae
from .training import STAGE_ENTROPY, StagePlan, Trainer, TrainingLog, collect_rollout, run_stage

__all__ = [
    "Minibatch", "PPOConfig", "RolloutBuffer", "UpdateStats", "adapt_lr", "gaussian_kl", "normalize_advantages",
    "ppo_loss", "ppo_update", "compute_gae", "STAGE_ENTROPY", "StagePlan", "Trainer", "TrainingLog",
    "collect_rollout", "run_stage",
]
