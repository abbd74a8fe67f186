"""Run configuration: strict YAML loading, validation and object construction.

Every section maps onto a dataclass; unknown keys, wrong types and
out-of-range values raise :class:`ConfigurationError` naming the offending
field (``ppo.clip``, ``env.commands.lin_x`` ...). The documented schema with
defaults lives in ``configs/schema.yaml``.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .encoders import ENCODER_KINDS, EncoderConfig, build_encoder
from .errors import ConfigurationError
from .policy import ActorCritic
from .ppo.core import PPOConfig
from .ppo.training import STAGE_ENTROPY, StagePlan
from .sim.dynamics import RandomizationConfig
from .sim.env import CommandConfig, EnvConfig, LeggedEnv
from .sim.robots import ROBOTS, robot_model
from .terrain.generators import FAMILIES, merge_ramps, terrain_families

OUTPUT_ENV_VAR = "ATTNLOCO_OUTPUT_DIR"


@dataclass
class ModelConfig:
    """Encoder and head sizes (desk-scale defaults)."""

    map_length: int = 11
    map_width: int = 7
    dim: int = 16
    heads: int = 4
    cnn_hidden: int = 4
    kernel: int = 5
    hidden: tuple[int, ...] = (64, 64)
    concat_proprio: bool = True
    init_std: float = 0.5

    def __post_init__(self):
        if any(h < 1 for h in self.hidden):
            raise ConfigurationError("model.hidden sizes must be positive")
        if self.init_std <= 0:
            raise ConfigurationError("model.init_std must be positive")


@dataclass
class EnvSection:
    num_envs: int = 64
    map_resolution: float = 0.1
    terrain_resolution: float = 0.05
    tile_size: float = 8.0
    episode_length: float = 20.0
    max_start_level: int = 9
    fixed_level: int | None = None
    random_heading: bool = True
    commands: CommandConfig = field(default_factory=CommandConfig)
    reward_only: tuple[str, ...] | None = None
    reward_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.map_resolution <= 0 or self.terrain_resolution <= 0 or self.tile_size <= 0:
            raise ConfigurationError("env resolutions and tile_size must be positive")
        if not 0 <= self.max_start_level <= 9:
            raise ConfigurationError("env.max_start_level must be in [0, 9]")


@dataclass
class StageSection:
    epochs: int = 100
    families: tuple[str, ...] | None = None  # None: the robot's default set for the stage

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("stage epochs must be nonnegative")
        for fam in self.families or ():
            if fam not in FAMILIES:
                raise ConfigurationError(f"unknown terrain family {fam!r}")


@dataclass
class StagesSection:
    stage1: StageSection = field(default_factory=StageSection)
    stage2: StageSection = field(default_factory=StageSection)


@dataclass
class RunConfig:
    robot: str = "quadruped"
    encoder: str = "primary"
    seed: int = 0
    output_dir: str = "runs/default"
    dtype: str = "float32"
    checkpoint_every: int = 50
    model: ModelConfig = field(default_factory=ModelConfig)
    env: EnvSection = field(default_factory=EnvSection)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    terrain: dict = field(default_factory=dict)  # family -> {parameter: [easy, hard]}
    stages: StagesSection = field(default_factory=StagesSection)

    def __post_init__(self):
        if self.robot not in ROBOTS:
            raise ConfigurationError(f"robot: expected one of {sorted(ROBOTS)}, got {self.robot!r}")
        if self.encoder not in ENCODER_KINDS:
            raise ConfigurationError(f"encoder: expected one of {list(ENCODER_KINDS)}, got {self.encoder!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be float32 or float64")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be nonnegative")
        try:
            merge_ramps(self.terrain)
        except ConfigurationError as exc:
            raise ConfigurationError(f"terrain: {exc}") from None
        # eager checks that need several sections at once
        self.encoder_config()
        for stage in (1, 2):
            self.ppo.minibatch_size(self.env.num_envs)
            self.stage_plan(stage)

    # ------------------------------------------------------------ builders

    def encoder_config(self) -> EncoderConfig:
        m = self.model
        try:
            return EncoderConfig(
                map_length=m.map_length, map_width=m.map_width, dim=m.dim, heads=m.heads, query_len=1,
                proprio_dim=robot_model(self.robot).proprio_dim, cnn_hidden=m.cnn_hidden, kernel=m.kernel,
            )
        except ConfigurationError as exc:
            raise ConfigurationError(f"model: {exc}") from None

    def build_policy(self, rng: np.random.Generator) -> ActorCritic:
        enc = build_encoder(self.encoder, self.encoder_config(), rng)
        policy = ActorCritic(
            enc, robot_model(self.robot).joint_count, rng, hidden=tuple(self.model.hidden),
            concat_proprio=self.model.concat_proprio, init_std=self.model.init_std,
        )
        return policy.astype(np.dtype(self.dtype))

    def stage_plan(self, stage: int) -> StagePlan:
        sec = self.stages.stage1 if stage == 1 else self.stages.stage2
        fams = tuple(sec.families) if sec.families else terrain_families(self.robot, stage)
        return StagePlan(stage, fams, actor_privileged=(stage == 1), epochs=sec.epochs, entropy_coef=STAGE_ENTROPY[stage])

    def env_config(self, families: tuple[str, ...]) -> EnvConfig:
        e = self.env
        return EnvConfig(
            robot=self.robot, num_envs=e.num_envs, families=tuple(families), map_length=self.model.map_length,
            map_width=self.model.map_width, map_resolution=e.map_resolution, terrain_resolution=e.terrain_resolution,
            tile_size=e.tile_size, episode_length=e.episode_length, max_start_level=e.max_start_level,
            fixed_level=e.fixed_level, random_heading=e.random_heading, commands=dataclasses.replace(e.commands),
            reward_only=e.reward_only, reward_overrides=dict(e.reward_overrides), ramps=self.terrain or None,
        )

    def build_env(self, stage: int, seed: int | None = None) -> LeggedEnv:
        plan = self.stage_plan(stage)
        return LeggedEnv(
            self.env_config(plan.families), self.seed if seed is None else seed, stage=stage,
            rand=dataclasses.replace(self.randomization), actor_privileged=plan.actor_privileged,
        )

    def ppo_config(self) -> PPOConfig:
        return dataclasses.replace(self.ppo)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


# ---------------------------------------------------------------- strict parsing


def _type_name(tp) -> str:
    return getattr(tp, "__name__", None) or str(tp).replace("typing.", "")


def _coerce(path: str, value, tp):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        errors = []
        for a in inner:
            try:
                return _coerce(path, value, a)
            except ConfigurationError as exc:
                errors.append(str(exc))
        raise ConfigurationError(errors[0] if errors else f"{path}: invalid value {value!r}")
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path}: expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(f"{path}[{i}]", v, args[0]) for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigurationError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(f"{path}[{i}]", v, a) for i, (v, a) in enumerate(zip(value, args)))
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigurationError(f"{path}: expected a mapping, got {value!r}")
        return dict(value)
    raise ConfigurationError(f"{path}: unsupported field type {_type_name(tp)}")


def _from_dict(cls, data, path: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'}: expected a mapping, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError(f"{where}{unknown[0]}: unknown key (allowed: {', '.join(sorted(names))})")
    kwargs = {k: _coerce(f"{path}.{k}" if path else k, v, hints[k]) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        msg = str(exc)
        if path and not msg.startswith(path.split(".")[0]):
            msg = f"{path}: {msg}"
        raise ConfigurationError(msg) from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path or 'config'}: {exc}") from None


def config_from_dict(data: dict | None) -> RunConfig:
    return _from_dict(RunConfig, data or {})


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"{path}: config file not found")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    return config_from_dict(data)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True)
