"""Deployment-style evaluation: episode traces, outcome labels, rate tables and attention export."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, UnsupportedFeatureError
from .policy import ActResult, ObservationBundle
from .sim import dynamics as D
from .sim.env import FAILURE, LABELS, STUCK, SUCCESS, CommandConfig, EnvConfig, LeggedEnv, label_outcome
from .terrain.field import write_pgm

EVAL_COMMANDS = CommandConfig(lin_x=(0.5, 1.0), lin_y=(0.0, 0.0), yaw_rate=(0.0, 0.0), resample_interval=0.0)
RATE_COLUMNS = ("family", "level", "episodes", "success", "failure", "stuck", "tracking_error")
TRACE_MAGIC = "# attnloco episode trace v1"
ATTENTION_MAGIC = "# attnloco attention frames v1"


class TruncatedTraceError(ValueError):
    """The trace stops before the episode ended (no crossing, termination or time-out)."""


@dataclass
class EpisodeTrace:
    """Per-step record of one episode, row ``t`` is the state after action ``t``."""

    family: str
    level: int
    base_pos: np.ndarray  # (T, 3)
    yaw: np.ndarray  # (T,)
    lin_vel: np.ndarray  # (T, 3) base frame
    command: np.ndarray  # (T, 3)
    action: np.ndarray  # (T, A)
    reward: np.ndarray  # (T,)
    terms: dict[str, np.ndarray]  # name -> (T,)
    collisions: np.ndarray  # (T,) int
    terminated: np.ndarray  # (T,) bool
    crossed: np.ndarray  # (T,) bool
    end: str | None  # "crossed", "terminated", "timeout" or None while running
    fault: bool = False

    def __len__(self) -> int:
        return len(self.reward)


@dataclass
class EpisodeOutcome:
    label: str
    length: int
    tracking_errors: np.ndarray  # per surviving step


def classify_episode(trace: EpisodeTrace) -> EpisodeOutcome:
    """Failure on any bad landing or termination, success on leaving the tile, stuck otherwise."""
    if trace.end is None:
        raise TruncatedTraceError("episode trace is incomplete")
    label = label_outcome(bool(trace.crossed.any()), bool(trace.collisions.any()), bool(trace.terminated.any()))
    return EpisodeOutcome(label, len(trace), _step_errors(trace))


def _step_errors(trace: EpisodeTrace) -> np.ndarray:
    alive = ~trace.terminated
    err = np.linalg.norm(trace.command[:, :2] - trace.lin_vel[:, :2], axis=1)
    return err[alive]


def tracking_error(trace: EpisodeTrace) -> float | None:
    """Mean planar velocity-tracking error over the steps the robot survived (None if none)."""
    err = _step_errors(trace)
    return float(err.mean()) if err.size else None


class RandomPolicy:
    """Standard-normal actions, ignoring observations."""

    def __init__(self, action_dim: int):
        self.action_dim = action_dim

    def act(self, obs: ObservationBundle, stochastic: bool = True, rng: np.random.Generator | None = None) -> ActResult:
        if rng is None:
            raise ValueError("RandomPolicy needs an rng")
        a = rng.standard_normal((len(obs), self.action_dim))
        return ActResult(a, np.zeros(len(obs)), np.zeros_like(a), None)


def run_episodes(policy, env: LeggedEnv, rng: np.random.Generator, stochastic: bool = False) -> list[EpisodeTrace]:
    """One complete episode per environment of ``env``, starting from a fresh reset."""
    env.reset_all()
    n, cfg = env.num_envs, env.config
    rows: list[list[dict]] = [[] for _ in range(n)]
    traces: list[EpisodeTrace | None] = [None] * n
    active = np.ones(n, dtype=bool)
    actor_obs, _ = env.observations()
    levels = env.curriculum.level.copy()
    for _ in range(cfg.max_steps + 1):
        if not active.any():
            break
        res = policy.act(actor_obs, stochastic, rng)
        out = env.step(res.action)
        s = out.final_state
        ended = {e.env: e for e in out.episodes}
        for i in np.flatnonzero(active):
            rows[i].append(
                dict(
                    base_pos=s.base_pos[i].copy(), yaw=float(s.yaw[i]), lin_vel=s.lin_vel[i].copy(),
                    command=s.command[i].copy(), action=np.asarray(res.action[i], dtype=np.float64),
                    reward=float(out.reward[i]), terms={k: float(v[i]) for k, v in out.terms.items()},
                    collisions=int(out.collisions[i]), terminated=bool(out.terminated[i]), crossed=bool(out.crossed[i]),
                )
            )
            if i in ended:
                rec = ended[i]
                end = "terminated" if rec.terminated else ("crossed" if rec.crossed else "timeout")
                traces[i] = _stack(rows[i], env.curriculum.families[env.curriculum.family[i]], int(levels[i]), end, rec.fault)
                active[i] = False
        actor_obs = out.actor_obs
    for i in np.flatnonzero(active):
        traces[i] = _stack(rows[i], env.curriculum.family_name(i), int(levels[i]), None)
    return traces


def _stack(rows: list[dict], family: str, level: int, end: str | None, fault: bool = False) -> EpisodeTrace:
    names = sorted({k for r in rows for k in r["terms"]})
    return EpisodeTrace(
        family=family,
        level=level,
        base_pos=np.array([r["base_pos"] for r in rows]).reshape(-1, 3),
        yaw=np.array([r["yaw"] for r in rows]),
        lin_vel=np.array([r["lin_vel"] for r in rows]).reshape(-1, 3),
        command=np.array([r["command"] for r in rows]).reshape(-1, 3),
        action=np.array([r["action"] for r in rows]),
        reward=np.array([r["reward"] for r in rows]),
        terms={k: np.array([r["terms"].get(k, 0.0) for r in rows]) for k in names},
        collisions=np.array([r["collisions"] for r in rows], dtype=np.int64),
        terminated=np.array([r["terminated"] for r in rows], dtype=bool),
        crossed=np.array([r["crossed"] for r in rows], dtype=bool),
        end=end,
        fault=fault,
    )


@dataclass
class RateRow:
    family: str
    level: int
    episodes: int
    counts: dict[str, int]
    tracking_error: float | None

    def rate(self, label: str) -> float:
        return self.counts[label] / self.episodes if self.episodes else 0.0


@dataclass
class RateTable:
    rows: list[RateRow] = field(default_factory=list)

    def row(self, family: str) -> RateRow:
        for r in self.rows:
            if r.family == family:
                return r
        raise KeyError(family)

    def to_text(self) -> str:
        """Tab-separated, columns in :data:`RATE_COLUMNS` order; absent tracking error is ``-``."""
        lines = ["\t".join(RATE_COLUMNS)]
        for r in self.rows:
            err = "-" if r.tracking_error is None else f"{r.tracking_error:.6f}"
            lines.append(
                "\t".join([r.family, str(r.level), str(r.episodes)] + [f"{r.rate(lab):.6f}" for lab in LABELS] + [err])
            )
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @staticmethod
    def read(path) -> list[dict]:
        lines = Path(path).read_text().splitlines()
        if not lines or tuple(lines[0].split("\t")) != RATE_COLUMNS:
            raise ConfigurationError(f"{path}: unexpected rate-table header")
        out = []
        for line in lines[1:]:
            vals = line.split("\t")
            out.append(
                dict(
                    family=vals[0], level=int(vals[1]), episodes=int(vals[2]),
                    success=float(vals[3]), failure=float(vals[4]), stuck=float(vals[5]),
                    tracking_error=None if vals[6] == "-" else float(vals[6]),
                )
            )
        return out


def evaluate_suite(
    policy,
    families: tuple[str, ...],
    n_episodes: int,
    seed: int,
    robot: str = "quadruped",
    level: int = 9,
    env_overrides: dict | None = None,
    rand: D.RandomizationConfig | None = None,
    actor_privileged: bool = False,
    stochastic: bool = False,
) -> RateTable:
    """Run ``n_episodes`` episodes per family at one difficulty level.

    Each family gets its own terrain and environment batch (one episode per
    environment) so results depend only on ``seed``, the family and the
    policy. Commands default to forward walking so that leaving the tile is
    possible within the time-out.
    """
    if n_episodes < 1:
        raise ConfigurationError("n_episodes must be positive")
    table = RateTable()
    for fi, fam in enumerate(families):
        opts = dict(robot=robot, num_envs=n_episodes, families=(fam,), fixed_level=level, commands=EVAL_COMMANDS)
        opts.update(env_overrides or {})
        env = LeggedEnv(EnvConfig(**opts), seed=seed + 100_003 * fi, stage=2, rand=rand, actor_privileged=actor_privileged)
        rng = np.random.default_rng([seed, fi, 17])
        traces = run_episodes(policy, env, rng, stochastic)
        counts = {lab: 0 for lab in LABELS}
        errors = []
        done = 0
        for tr in traces:
            if tr.fault:
                continue
            outcome = classify_episode(tr)
            counts[outcome.label] += 1
            done += 1
            if outcome.label != FAILURE:
                err = tracking_error(tr)
                if err is not None:
                    errors.append(err)
        table.rows.append(RateRow(fam, level, done, counts, float(np.mean(errors)) if errors else None))
    return table


# ---------------------------------------------------------------- traces as text


def write_trace(trace: EpisodeTrace, path) -> None:
    """Row-per-step text export.

    Header lines start with ``#``; the column line lists
    ``step x y z yaw vx vy vz cmd_x cmd_y cmd_yaw reward collisions terminated crossed``
    followed by ``term:<name>`` and ``action:<j>`` columns. Floats use 17
    significant digits.
    """
    names = sorted(trace.terms)
    cols = ["step", "x", "y", "z", "yaw", "vx", "vy", "vz", "cmd_x", "cmd_y", "cmd_yaw", "reward",
            "collisions", "terminated", "crossed"]
    cols += [f"term:{n}" for n in names] + [f"action:{j}" for j in range(trace.action.shape[1])]
    lines = [TRACE_MAGIC, f"# family {trace.family} level {trace.level} end {trace.end or '-'} fault {int(trace.fault)}",
             " ".join(cols)]
    for t in range(len(trace)):
        vals = [str(t)]
        vals += [f"{v:.17g}" for v in trace.base_pos[t]] + [f"{trace.yaw[t]:.17g}"]
        vals += [f"{v:.17g}" for v in trace.lin_vel[t]] + [f"{v:.17g}" for v in trace.command[t]]
        vals += [f"{trace.reward[t]:.17g}", str(int(trace.collisions[t])), str(int(trace.terminated[t])), str(int(trace.crossed[t]))]
        vals += [f"{trace.terms[n][t]:.17g}" for n in names] + [f"{v:.17g}" for v in trace.action[t]]
        lines.append(" ".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path) -> EpisodeTrace:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != TRACE_MAGIC:
        raise ConfigurationError(f"{path}: not an episode trace")
    meta = lines[1].lstrip("# ").split()
    info = dict(zip(meta[::2], meta[1::2]))
    cols = lines[2].split()
    data = np.array([[float(v) for v in ln.split()] for ln in lines[3:]]).reshape(-1, len(cols))
    col = {c: data[:, i] for i, c in enumerate(cols)}
    terms = {c[5:]: col[c] for c in cols if c.startswith("term:")}
    actions = np.column_stack([col[c] for c in cols if c.startswith("action:")]) if len(data) else np.zeros((0, 0))
    return EpisodeTrace(
        family=info["family"], level=int(info["level"]),
        base_pos=np.column_stack([col["x"], col["y"], col["z"]]), yaw=col["yaw"],
        lin_vel=np.column_stack([col["vx"], col["vy"], col["vz"]]),
        command=np.column_stack([col["cmd_x"], col["cmd_y"], col["cmd_yaw"]]),
        action=actions, reward=col["reward"], terms=terms,
        collisions=col["collisions"].astype(np.int64), terminated=col["terminated"].astype(bool),
        crossed=col["crossed"].astype(bool), end=None if info["end"] == "-" else info["end"], fault=info["fault"] == "1",
    )


# ---------------------------------------------------------------- attention export


@dataclass
class AttentionFrame:
    step: int
    time: float
    points: np.ndarray  # (L, W, 3) world-frame scan points
    weights: np.ndarray  # (L, W) head-averaged attention
    heads: np.ndarray | None = None  # (h, L, W) per-head weights when requested


def attention_frames(policy, env: LeggedEnv, steps: int, env_index: int = 0, per_head: bool = False) -> list[AttentionFrame]:
    """Deterministic rollout recording the attention of environment ``env_index`` at every step."""
    encoder = policy.encoder
    if getattr(encoder, "kind", None) != "primary":
        raise UnsupportedFeatureError(f"the {getattr(encoder, 'kind', type(encoder).__name__)} encoder has no point-wise attention")
    L, W = env.config.map_length, env.config.map_width
    frames = []
    actor_obs, _ = env.observations()
    for t in range(steps):
        res = policy.act(actor_obs, stochastic=False)
        if res.attention is None:
            raise UnsupportedFeatureError("policy did not report attention weights")
        att = np.asarray(res.attention[env_index], dtype=np.float64)[:, 0, :]  # (h, P)
        pose = env.state.pose()[env_index]
        scan = actor_obs.scan[env_index]
        c, s = np.cos(pose[3]), np.sin(pose[3])
        world = np.empty_like(scan, dtype=np.float64)
        world[..., 0] = pose[0] + c * scan[..., 0] - s * scan[..., 1]
        world[..., 1] = pose[1] + s * scan[..., 0] + c * scan[..., 1]
        world[..., 2] = pose[2] + scan[..., 2]
        frames.append(
            AttentionFrame(t, t * D.DT, world, att.mean(axis=0).reshape(L, W), att.reshape(-1, L, W) if per_head else None)
        )
        actor_obs = env.step(res.action).actor_obs
    return frames


def attention_image(weights: np.ndarray) -> np.ndarray:
    """8-bit heat image scaled by the frame maximum (uniform weights give a flat image)."""
    w = np.asarray(weights, dtype=np.float64)
    top = w.max()
    if top <= 0:
        return np.zeros(w.shape, dtype=np.uint8)
    return np.round(w / top * 255.0).astype(np.uint8)


def export_attention(frames: list[AttentionFrame], out_dir, prefix: str = "attention") -> Path:
    """Write all frames to ``<prefix>.txt`` plus one ``<prefix>_<step>.pgm`` image per frame.

    Text format: a magic line, then per frame a ``frame <step> time <t> length <L> width <W> heads <h>``
    line, ``L*W`` rows ``x y z weight`` (17 significant digits, row-major
    over the scan grid), ``h`` optional rows of per-head weights and ``end``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [ATTENTION_MAGIC]
    for fr in frames:
        L, W = fr.weights.shape
        h = 0 if fr.heads is None else fr.heads.shape[0]
        lines.append(f"frame {fr.step} time {fr.time:.17g} length {L} width {W} heads {h}")
        pts = fr.points.reshape(-1, 3)
        wts = fr.weights.reshape(-1)
        lines.extend(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} {w:.17g}" for p, w in zip(pts, wts))
        for k in range(h):
            lines.append("head " + " ".join(f"{v:.17g}" for v in fr.heads[k].reshape(-1)))
        lines.append("end")
        write_pgm(out / f"{prefix}_{fr.step:05d}.pgm", attention_image(fr.weights))
    path = out / f"{prefix}.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def read_attention(path) -> list[AttentionFrame]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ATTENTION_MAGIC:
        raise ConfigurationError(f"{path}: not an attention frame file")
    frames, k = [], 1
    while k < len(lines):
        head = lines[k].split()
        step, t, L, W, h = int(head[1]), float(head[3]), int(head[5]), int(head[7]), int(head[9])
        rows = np.array([[float(v) for v in ln.split()] for ln in lines[k + 1:k + 1 + L * W]])
        k += 1 + L * W
        heads = None
        if h:
            heads = np.array([[float(v) for v in lines[k + j].split()[1:]] for j in range(h)]).reshape(h, L, W)
            k += h
        if lines[k] != "end":
            raise ConfigurationError(f"{path}: malformed frame {step}")
        k += 1
        frames.append(AttentionFrame(step, t, rows[:, :3].reshape(L, W, 3), rows[:, 3].reshape(L, W), heads))
    return frames


__all__ = [
    "EVAL_COMMANDS", "RATE_COLUMNS", "AttentionFrame", "EpisodeOutcome", "EpisodeTrace", "RandomPolicy", "RateRow",
    "RateTable", "TruncatedTraceError", "attention_frames", "attention_image", "classify_episode", "evaluate_suite",
    "export_attention", "read_attention", "read_trace", "run_episodes", "tracking_error", "write_trace",
    "SUCCESS", "FAILURE", "STUCK",
]
