"""Kinematic legged-robot surrogate: dynamics, rewards and the vectorised environment."""

from .dynamics import (
    DT,
    RandomizationConfig,
    SimState,
    StepInfo,
    apply_push,
    assemble_observation,
    initial_state,
    push_due,
    step,
)
from .env import CommandConfig, EnvConfig, EpisodeRecord, LeggedEnv, label_outcome, reset
from .rewards import REWARD_TABLE, TABLE_ROWS, compute_reward, reward_weights
from .robots import RobotModel, biped, quadruped, robot_model
