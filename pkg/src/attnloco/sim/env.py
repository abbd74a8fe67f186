"""Vectorised surrogate environment: resets, commands, pushes, episode outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..errors import ConfigurationError
from ..policy import ObservationBundle
from ..terrain.curriculum import CurriculumState, curriculum_update, init_curriculum
from ..terrain.field import HeightField, scan_grid
from ..terrain.generators import build_terrain
from . import dynamics as D
from .rewards import compute_reward, reward_weights
from .robots import RobotModel, robot_model

SUCCESS, FAILURE, STUCK = "success", "failure", "stuck"
LABELS = (SUCCESS, FAILURE, STUCK)


@dataclass
class CommandConfig:
    lin_x: tuple[float, float] = (-1.0, 1.0)
    lin_y: tuple[float, float] = (-0.5, 0.5)
    yaw_rate: tuple[float, float] = (-1.0, 1.0)
    standing_fraction: float = 0.0
    resample_interval: float = 10.0  # seconds; 0 keeps one command per episode

    def __post_init__(self):
        for name in ("lin_x", "lin_y", "yaw_rate"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"commands.{name} must be (low, high)")
            setattr(self, name, (float(lo), float(hi)))
        if not 0.0 <= self.standing_fraction <= 1.0:
            raise ConfigurationError("commands.standing_fraction must be in [0, 1]")
        if self.resample_interval < 0:
            raise ConfigurationError("commands.resample_interval must be nonnegative")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        cmd = np.array([rng.uniform(*self.lin_x), rng.uniform(*self.lin_y), rng.uniform(*self.yaw_rate)])
        if self.standing_fraction > 0 and rng.random() < self.standing_fraction:
            cmd[:] = 0.0
        return cmd


@dataclass
class EnvConfig:
    robot: str = "quadruped"
    num_envs: int = 64
    families: tuple[str, ...] = ("flat",)
    map_length: int = 26
    map_width: int = 16
    map_resolution: float = 0.1
    terrain_resolution: float = 0.05
    tile_size: float = 8.0
    episode_length: float = 20.0  # seconds
    max_start_level: int = 9
    fixed_level: int | None = None  # all agents on one level, curriculum frozen
    random_heading: bool = True
    commands: CommandConfig = dc_field(default_factory=CommandConfig)
    reward_only: tuple[str, ...] | None = None
    reward_overrides: dict = dc_field(default_factory=dict)
    ramps: dict | None = None

    def __post_init__(self):
        if self.num_envs < 1:
            raise ConfigurationError("env.num_envs must be positive")
        if self.map_length < 1 or self.map_width < 1:
            raise ConfigurationError("env map size must be positive")
        if self.episode_length <= 0:
            raise ConfigurationError("env.episode_length must be positive")
        if self.fixed_level is not None and not 0 <= self.fixed_level <= 9:
            raise ConfigurationError("env.fixed_level must be in [0, 9]")
        if isinstance(self.commands, dict):
            self.commands = CommandConfig(**self.commands)
        self.families = tuple(self.families)

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / D.DT))


@dataclass
class EpisodeRecord:
    env: int
    family: str
    level: int
    label: str
    length: int
    crossed: bool
    collided: bool
    terminated: bool
    fault: bool
    tracking_error: float | None  # mean planar speed error, surviving episodes only
    episode_return: float


@dataclass
class StepResult:
    actor_obs: ObservationBundle
    critic_obs: ObservationBundle
    reward: np.ndarray
    terms: dict[str, np.ndarray]
    terminated: np.ndarray  # true terminations (no bootstrap)
    truncated: np.ndarray  # success or timeout (bootstrap from final_obs)
    final_obs: ObservationBundle | None  # privileged obs of truncated envs, before reset
    episodes: list[EpisodeRecord]
    faults: np.ndarray
    crossed: np.ndarray | None = None  # base left its tile this step
    collisions: np.ndarray | None = None  # feet that landed badly this step
    final_state: D.SimState | None = None  # post-step state before any reset


def label_outcome(crossed: bool, collided: bool, terminated: bool) -> str:
    """Undesirable contact or early termination is a failure; otherwise leaving the tile is a success."""
    if collided or terminated:
        return FAILURE
    if crossed:
        return SUCCESS
    return STUCK


class LeggedEnv:
    """``num_envs`` robots sharing one stitched terrain field.

    Every environment owns its RNG stream ``master_seed + index``; resets,
    commands, pushes and observation noise draw from that stream only.
    """

    def __init__(
        self,
        config: EnvConfig,
        seed: int,
        stage: int = 1,
        rand: D.RandomizationConfig | None = None,
        actor_privileged: bool = True,
        field: HeightField | None = None,
        curriculum: CurriculumState | None = None,
    ):
        self.config = config
        self.model: RobotModel = robot_model(config.robot)
        self.stage = stage
        self.rand = rand or D.RandomizationConfig()
        self.actor_privileged = actor_privileged
        self.seed = int(seed)
        self.weights = reward_weights(config.robot, config.reward_overrides, config.reward_only)
        self.field = field or build_terrain(
            config.families, seed, config.ramps, config.tile_size, config.terrain_resolution
        )
        self.grid = scan_grid(config.map_length, config.map_width, config.map_resolution)
        n = config.num_envs
        self.rngs = [np.random.default_rng(self.seed + i) for i in range(n)]
        if curriculum is None:
            crng = np.random.default_rng([self.seed, 7919])
            if config.fixed_level is not None:
                curriculum = init_curriculum(n, config.families, crng, 0, frozen=True)
                curriculum.level[:] = config.fixed_level
            else:
                curriculum = init_curriculum(n, config.families, crng, config.max_start_level)
        self.curriculum = curriculum
        self.state: D.SimState | None = None
        self._ep_collided = np.zeros(n, bool)
        self._ep_return = np.zeros(n)
        self._ep_err_sum = np.zeros(n)
        self.episode_log: list[EpisodeRecord] = []
        self.reset_all()

    @property
    def num_envs(self) -> int:
        return self.config.num_envs

    @property
    def proprio_dim(self) -> int:
        return self.model.proprio_dim

    @property
    def action_dim(self) -> int:
        return self.model.joint_count

    def tile_border(self, i: int) -> tuple[float, float, float, float]:
        return self.field.tiles[(self.curriculum.family_name(i), int(self.curriculum.level[i]))]

    def _fresh(self, ids: np.ndarray) -> D.SimState:
        spawn, yaw, cmd, mass, fric, drift = [], [], [], [], [], []
        for i in ids:
            rng = self.rngs[i]
            x0, y0, x1, y1 = self.tile_border(i)
            spawn.append(((x0 + x1) / 2.0, (y0 + y1) / 2.0))
            yaw.append(rng.uniform(-np.pi, np.pi) if self.config.random_heading else 0.0)
            cmd.append(self.config.commands.sample(rng))
            m, f, d = D.sample_episode_physics(self.model, self.rand, rng)
            mass.append(m)
            fric.append(f)
            drift.append(d)
        return D.initial_state(
            self.model, self.field, np.array(spawn), np.array(yaw), np.array(cmd), np.array(mass), np.array(fric), np.array(drift)
        )

    def reset_all(self) -> None:
        ids = np.arange(self.num_envs)
        self.state = self._fresh(ids)
        self._ep_collided[:] = False
        self._ep_return[:] = 0.0
        self._ep_err_sum[:] = 0.0

    def reset(self, ids) -> None:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return
        self.state.put(ids, self._fresh(ids))
        self._ep_collided[ids] = False
        self._ep_return[ids] = 0.0
        self._ep_err_sum[ids] = 0.0

    def observe(self, privileged: bool, state: D.SimState | None = None) -> ObservationBundle:
        state = self.state if state is None else state
        return D.assemble_observation(state, self.field, self.model, self.grid, self.rand, privileged, self.rngs)

    def observations(self) -> tuple[ObservationBundle, ObservationBundle]:
        """(actor, critic) bundles for the current state; the critic is always privileged."""
        critic = self.observe(True)
        actor = critic if self.actor_privileged else self.observe(False)
        return actor, critic

    def _crossed(self, state: D.SimState) -> np.ndarray:
        out = np.zeros(self.num_envs, bool)
        for i in range(self.num_envs):
            x0, y0, x1, y1 = self.tile_border(i)
            x, y = state.base_pos[i, 0], state.base_pos[i, 1]
            out[i] = not (x0 <= x < x1 and y0 <= y < y1)
        return out

    def step(self, actions: np.ndarray) -> StepResult:
        s = self.state
        due = D.push_due(s.step_count, self.rand)
        if due.any():
            for i in np.flatnonzero(due):
                pushed = D.apply_push(s.take([i]), self.rand, self.rngs[i])
                s.put([i], pushed)
        nxt, info = D.step(s, actions, self.field, self.model)
        reward, terms = compute_reward(s, nxt, info, self.model, self.stage, self.weights)

        self._ep_collided |= info.collided > 0
        self._ep_return += reward
        self._ep_err_sum += np.linalg.norm(nxt.command[:, :2] - nxt.lin_vel[:, :2], axis=1)
        crossed = self._crossed(nxt)
        timeout = nxt.step_count >= self.config.max_steps
        terminated = info.terminated
        truncated = (crossed | timeout) & ~terminated
        done = terminated | truncated

        self.state = nxt
        final_state = nxt.take(slice(None))
        final_obs = None
        if truncated.any():
            final_obs = self.observe(True).take(np.flatnonzero(truncated))

        episodes = []
        done_ids = np.flatnonzero(done)
        for i in done_ids:
            length = int(nxt.step_count[i])
            rec = EpisodeRecord(
                env=int(i),
                family=self.curriculum.family_name(i),
                level=int(self.curriculum.level[i]),
                label=label_outcome(bool(crossed[i]), bool(self._ep_collided[i]), bool(terminated[i])),
                length=length,
                crossed=bool(crossed[i]),
                collided=bool(self._ep_collided[i]),
                terminated=bool(terminated[i]),
                fault=bool(info.fault[i]),
                tracking_error=None if terminated[i] else float(self._ep_err_sum[i] / max(length, 1)),
                episode_return=float(self._ep_return[i]),
            )
            episodes.append(rec)
        self.episode_log.extend(episodes)
        valid = np.array([not e.fault for e in episodes], dtype=bool)
        if done_ids.size:
            solved = (crossed & ~terminated)[done_ids][valid]
            self.curriculum = curriculum_update(self.curriculum, solved, done_ids[valid])
            self.reset(done_ids)

        if self.config.commands.resample_interval > 0:
            every = max(int(round(self.config.commands.resample_interval / D.DT)), 1)
            due_cmd = (self.state.step_count > 0) & (self.state.step_count % every == 0)
            for i in np.flatnonzero(due_cmd):
                self.state.command[i] = self.config.commands.sample(self.rngs[i])

        actor_obs, critic_obs = self.observations()
        return StepResult(
            actor_obs, critic_obs, reward, terms, terminated, truncated, final_obs, episodes, info.fault,
            crossed, info.collided, final_state,
        )


def reset(env: LeggedEnv, curriculum: CurriculumState | None = None, rand: D.RandomizationConfig | None = None) -> D.SimState:
    """Reset every environment of ``env`` (optionally swapping curriculum and randomization)."""
    if curriculum is not None:
        env.curriculum = curriculum
    if rand is not None:
        env.rand = rand
    env.reset_all()
    return env.state
