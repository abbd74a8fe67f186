"""Stage orchestration: rollouts, updates, per-epoch logging and checkpoint cadence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import ConfigurationError
from ..nn import Adam
from ..policy import ActorCritic
from ..sim.env import FAILURE, STUCK, SUCCESS, LeggedEnv
from ..terrain.generators import terrain_families
from .core import PPOConfig, RolloutBuffer, UpdateStats, ppo_update

STAGE_ENTROPY = {1: 0.005, 2: 0.002}


@dataclass
class StagePlan:
    """One training stage: which terrains, what the actor sees, how long.

    Stage 1 trains on the base terrain set with privileged actor
    observations; stage 2 adds the fine-tuning terrains and feeds the actor
    noisy, drifting observations. The critic is privileged in both.
    """

    stage: int
    families: tuple[str, ...]
    actor_privileged: bool
    epochs: int
    entropy_coef: float

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ConfigurationError(f"stage must be 1 or 2, got {self.stage}")
        if self.epochs < 0:
            raise ConfigurationError("stage epochs must be nonnegative")
        if not self.families:
            raise ConfigurationError("stage needs at least one terrain family")
        self.families = tuple(self.families)

    @classmethod
    def default(cls, stage: int, robot: str, epochs: int, families: tuple[str, ...] | None = None) -> "StagePlan":
        fams = tuple(families) if families else terrain_families(robot, stage)
        return cls(stage, fams, actor_privileged=(stage == 1), epochs=epochs, entropy_coef=STAGE_ENTROPY[stage])


class TrainingLog:
    """Append-only JSON-lines log; every record is also kept in memory."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def append(self, record: dict) -> None:
        record = _clean(record)
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self.records)

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class Trainer:
    """Owns the weights, the optimiser and the trainer-side RNG stream."""

    policy: ActorCritic
    ppo: PPOConfig
    rng: np.random.Generator
    optimizer: Adam | None = None
    epoch: int = 0
    last_stats: UpdateStats | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.optimizer is None:
            self.optimizer = Adam(self.policy.parameters(), lr=self.ppo.learning_rate)


def collect_rollout(env: LeggedEnv, trainer: Trainer, buffer: RolloutBuffer):
    """Fill ``buffer`` with ``steps_per_env`` transitions; returns per-term sums and finished episodes.

    Time-outs and tile crossings are bootstrapped by folding ``gamma * V`` of
    the pre-reset privileged observation into the final reward.
    """
    policy, cfg = trainer.policy, trainer.ppo
    buffer.reset()
    actor_obs, critic_obs = env.observations()
    term_sums: dict[str, float] = {}
    reward_sum = 0.0
    episodes = []
    faults = 0
    for _ in range(buffer.steps):
        res, value = policy.act_and_value(actor_obs, critic_obs, trainer.rng)
        out = env.step(res.action)
        reward = out.reward.astype(np.float64).copy()
        if out.final_obs is not None:
            ids = np.flatnonzero(out.truncated)
            reward[ids] += cfg.gamma * policy.evaluate(out.final_obs).astype(np.float64)
        done = out.terminated | out.truncated
        buffer.add(actor_obs, critic_obs, res.action, res.mean, res.log_prob, value, reward, done)
        for name, val in out.terms.items():
            term_sums[name] = term_sums.get(name, 0.0) + float(np.sum(val))
        reward_sum += float(np.sum(out.reward))
        episodes.extend(out.episodes)
        faults += int(np.sum(out.faults))
        actor_obs, critic_obs = out.actor_obs, out.critic_obs
    buffer.log_std = trainer.policy.log_std.data.astype(np.float64).copy()
    buffer.finish(policy.evaluate(critic_obs), cfg.gamma, cfg.lam)
    samples = buffer.steps * buffer.num_envs
    terms = {k: v / samples for k, v in sorted(term_sums.items())}
    return terms, reward_sum / samples, episodes, faults


def run_stage(
    plan: StagePlan,
    env: LeggedEnv,
    trainer: Trainer,
    log: TrainingLog | None = None,
    checkpoint: Callable[[Trainer, LeggedEnv, StagePlan], None] | None = None,
    checkpoint_every: int = 0,
    stop_when: Callable[[dict, list[dict]], bool] | None = None,
) -> TrainingLog:
    """Alternate rollout and update for ``plan.epochs`` epochs.

    ``env`` must match the plan (actor observation variant and stage).
    ``checkpoint`` is called every ``checkpoint_every`` epochs and after the
    last one. ``stop_when(record, history)`` may end the stage early.
    """
    if env.actor_privileged != plan.actor_privileged or env.stage != plan.stage:
        raise ConfigurationError("environment does not match the stage plan (actor observations / stage)")
    if set(env.config.families) != set(plan.families):
        raise ConfigurationError("environment terrain families do not match the stage plan")
    log = log if log is not None else TrainingLog()
    cfg = trainer.ppo
    cfg.entropy_coef = plan.entropy_coef
    cfg.minibatch_size(env.num_envs)
    buffer = RolloutBuffer(
        cfg.steps_per_env, env.num_envs, env.proprio_dim, (env.config.map_length, env.config.map_width, 3),
        env.action_dim, shared_obs=plan.actor_privileged,
    )
    for _ in range(plan.epochs):
        terms, mean_reward, episodes, faults = collect_rollout(env, trainer, buffer)
        stats = ppo_update(buffer, trainer.policy, trainer.optimizer, cfg, trainer.rng)
        trainer.last_stats = stats
        trainer.epoch += 1
        valid = [e for e in episodes if not e.fault]
        counts = {lab: sum(e.label == lab for e in valid) for lab in (SUCCESS, FAILURE, STUCK)}
        record = {
            "epoch": trainer.epoch,
            "stage": plan.stage,
            "reward": mean_reward,
            "terms": terms,
            "terrain_level": env.curriculum.mean_level(),
            "kl": stats.kl,
            "lr": stats.learning_rate,
            "clip_fraction": stats.clip_fraction,
            "surrogate": stats.surrogate,
            "value_loss": stats.value_loss,
            "entropy": stats.entropy,
            "episodes": len(valid),
            "outcomes": counts,
            "faults": faults,
            "aborted": stats.aborted,
        }
        log.append(record)
        last = trainer.epoch
        if checkpoint is not None and checkpoint_every and last % checkpoint_every == 0:
            checkpoint(trainer, env, plan)
        if stop_when is not None and stop_when(log.records[-1], log.records):
            break
    if checkpoint is not None and (not checkpoint_every or trainer.epoch % checkpoint_every):
        checkpoint(trainer, env, plan)
    return log
