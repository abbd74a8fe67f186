"""Command-line entry points: train, eval, attn, terrain-preview, grad-check."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import OUTPUT_ENV_VAR, RunConfig, config_from_dict, dump_config, load_config
from .errors import CheckpointError, ConfigurationError, UnsupportedFeatureError
from .evaluation import attention_frames, evaluate_suite, export_attention
from .ppo import Trainer, TrainingLog, run_stage
from .sim.env import CommandConfig, EnvConfig, LeggedEnv
from .sim.dynamics import RandomizationConfig
from .terrain.curriculum import CurriculumState
from .terrain.field import save_heightfield, to_grayscale, write_pgm
from .terrain.generators import FAMILIES, TerrainSpec, generate


def output_dir(config: RunConfig | None, override: str | None = None) -> Path:
    """``--out`` beats the environment variable, which beats the config value."""
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV_VAR)
    if env:
        return Path(env)
    return Path(config.output_dir if config is not None else "runs/default")


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def make_checkpoint(config: RunConfig, trainer: Trainer, env: LeggedEnv, stage: int) -> Checkpoint:
    cur = env.curriculum
    return Checkpoint(
        config=config.to_dict(),
        weights=trainer.policy.state_dict(),
        optimizer=trainer.optimizer.state_dict(),
        curriculum=dict(
            families=list(cur.families), family=cur.family, level=cur.level, frozen=cur.frozen, rng=_rng_state(cur.rng)
        ),
        epoch=trainer.epoch,
        stage=stage,
        rng_states={"trainer": _rng_state(trainer.rng), **{f"env.{i}": _rng_state(r) for i, r in enumerate(env.rngs)}},
    )


def policy_from_checkpoint(ckpt: Checkpoint):
    config = config_from_dict(ckpt.config)
    policy = config.build_policy(np.random.default_rng(config.seed))
    try:
        policy.load_state_dict(ckpt.weights)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint weights do not match its config: {exc}") from None
    return config, policy


def train(config: RunConfig, stage: int, resume: str | None, out: Path, seed: int | None, epochs: int | None) -> Path:
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    if epochs is not None:
        sec = config.stages.stage1 if stage == 1 else config.stages.stage2
        sec.epochs = epochs
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(config))
    rng = np.random.default_rng(config.seed)
    policy = config.build_policy(rng)
    trainer = Trainer(policy, config.ppo_config(), np.random.default_rng([config.seed, 1]))
    if resume:
        ckpt = load_checkpoint(resume)
        policy.load_state_dict(ckpt.weights)
        if ckpt.stage == stage:
            # continuing the same stage: keep the optimiser, counters and RNG streams
            trainer.optimizer.load_state_dict(ckpt.optimizer)
            trainer.epoch = ckpt.epoch
            trainer.rng = _restore_rng(ckpt.rng_states["trainer"])
    env = config.build_env(stage)
    if resume and ckpt.stage == stage and ckpt.curriculum is not None:
        c = ckpt.curriculum
        env.curriculum = CurriculumState(tuple(c["families"]), c["family"], c["level"], _restore_rng(c["rng"]), c["frozen"])
        env.rngs = [_restore_rng(ckpt.rng_states[f"env.{i}"]) for i in range(env.num_envs)]
        env.reset_all()
    plan = config.stage_plan(stage)
    log = TrainingLog(out / f"stage{stage}_log.jsonl")

    def checkpoint(tr, e, p):
        save_checkpoint(make_checkpoint(config, tr, e, p.stage), out / f"stage{p.stage}_epoch{tr.epoch:05d}.ckpt")
        save_checkpoint(make_checkpoint(config, tr, e, p.stage), out / f"stage{p.stage}_last.ckpt")

    run_stage(plan, env, trainer, log, checkpoint, config.checkpoint_every)
    return out / f"stage{stage}_last.ckpt"


def _cmd_train(args) -> int:
    if args.stage == 2 and not args.resume:
        print("error: stage 2 fine-tunes a stage-1 checkpoint; pass --resume PATH", file=sys.stderr)
        return 2
    config = load_config(args.config) if args.config else RunConfig()
    out = output_dir(config, args.out)
    path = train(config, args.stage, args.resume, out, args.seed, args.epochs)
    print(f"checkpoint: {path}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config, policy = policy_from_checkpoint(ckpt)
    families = tuple(args.families) if args.families else config.stage_plan(2).families
    seed = config.seed if args.seed is None else args.seed
    rand = RandomizationConfig.none() if args.privileged else dataclasses.replace(config.randomization)
    overrides = dict(
        map_length=config.model.map_length, map_width=config.model.map_width, episode_length=config.env.episode_length
    )
    table = evaluate_suite(
        policy, families, args.episodes, seed, robot=config.robot, level=args.level, env_overrides=overrides,
        rand=rand, actor_privileged=args.privileged,
    )
    out = output_dir(config, args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "rates.tsv"
    table.write(path)
    sys.stdout.write(table.to_text())
    print(f"rate table: {path}")
    return 0


def _cmd_attn(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config, policy = policy_from_checkpoint(ckpt)
    if config.encoder != "primary":
        raise UnsupportedFeatureError(f"the {config.encoder} encoder has no point-wise attention to export")
    seed = config.seed if args.seed is None else args.seed
    env_cfg = EnvConfig(
        robot=config.robot, num_envs=1, families=(args.family,), map_length=config.model.map_length,
        map_width=config.model.map_width, fixed_level=args.level, random_heading=False,
        commands=CommandConfig(lin_x=(args.speed, args.speed), lin_y=(0.0, 0.0), yaw_rate=(0.0, 0.0), resample_interval=0.0),
    )
    env = LeggedEnv(env_cfg, seed, stage=2, rand=RandomizationConfig.none(), actor_privileged=True)
    frames = attention_frames(policy, env, args.steps, per_head=args.per_head)
    out = output_dir(config, args.out) / "attention"
    path = export_attention(frames, out)
    print(f"{len(frames)} frames: {path}")
    return 0


def _cmd_terrain_preview(args) -> int:
    out = output_dir(None, args.out)
    out.mkdir(parents=True, exist_ok=True)
    field = generate(TerrainSpec(args.family, args.level, args.seed))
    stem = out / f"{args.family}_level{args.level}_seed{args.seed}"
    write_pgm(stem.with_suffix(".pgm"), to_grayscale(field))
    save_heightfield(field, stem.with_suffix(".txt"))
    print(f"preview: {stem.with_suffix('.pgm')}")
    return 0


def _cmd_grad_check(args) -> int:
    from .verification import run_verification

    results = run_verification(seed=args.seed)
    ok = True
    for name, err, tol in results:
        passed = err < tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:48s} max rel err {err:.3e} (tol {tol:.0e})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnloco", description="Attention-based map encoding for legged locomotion.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="master seed (defaults to the config seed)")
        p.add_argument("--out", default=None, help=f"output directory (overrides ${OUTPUT_ENV_VAR} and the config)")

    p = sub.add_parser("train", help="run one training stage")
    p.add_argument("config", nargs="?", default=None, help="YAML run config (defaults when omitted)")
    p.add_argument("--stage", type=int, choices=(1, 2), default=1)
    p.add_argument("--resume", default=None, help="checkpoint to continue from (required for stage 2)")
    p.add_argument("--epochs", type=int, default=None, help="override the stage epoch budget")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="success / failure / stuck rates per terrain family")
    p.add_argument("checkpoint")
    p.add_argument("--families", nargs="*", default=None, choices=FAMILIES)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--level", type=int, default=9, choices=range(10))
    p.add_argument("--privileged", action="store_true", help="noise-free actor observations")
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("attn", help="export head-averaged attention frames")
    p.add_argument("checkpoint")
    p.add_argument("--family", default="grid_stones", choices=FAMILIES)
    p.add_argument("--level", type=int, default=5, choices=range(10))
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--speed", type=float, default=0.6)
    p.add_argument("--per-head", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_attn)

    p = sub.add_parser("terrain-preview", help="render one terrain tile as PGM + text grid")
    p.add_argument("family", choices=FAMILIES)
    p.add_argument("--level", type=int, default=5, choices=range(10))
    common(p)
    p.set_defaults(func=_cmd_terrain_preview)

    p = sub.add_parser("grad-check", help="finite-difference verification of every differentiable component")
    common(p)
    p.set_defaults(func=_cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command in ("terrain-preview", "grad-check"):
        args.seed = 0
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointError, UnsupportedFeatureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
