"""Reward terms for both robot profiles.

Each :class:`RewardRow` names one row of the reward table, the function it
computes and its per-robot weight and joint/foot indices. A row with weight
``None`` does not apply to that robot. Penalty functions already carry their
minus sign, so every contribution is ``weight * value`` and the total is the
plain sum of the contributions.

The biped torque row is listed three times (one entry per index group, each
with its own weight).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConfigurationError
from .dynamics import SimState, StepInfo
from .robots import RobotModel

CONTACT_FORCE_LIMIT = 700.0
Q_LIMIT_FRACTION = 0.9
QD_LIMIT_FRACTION = 0.9
TAU_LIMIT_FRACTION = 0.8
DEVIATION_ALLOWANCE = 0.25
STANDING_COMMAND = 0.1


@dataclass(frozen=True)
class RewardRow:
    name: str
    row: str  # reward-table row label
    quadruped: float | None
    biped: float | None
    quadruped_index: tuple | None = None
    biped_index: tuple | None = None
    stage2_only: bool = False
    per_foot: bool = False

    def weight(self, robot: str) -> float | None:
        return self.quadruped if robot == "quadruped" else self.biped

    def index(self, robot: str):
        return self.quadruped_index if robot == "quadruped" else self.biped_index


def _r(*parts):
    """Concatenate python ranges into an index tuple."""
    out = []
    for p in parts:
        out.extend(p if isinstance(p, range) else [p])
    return tuple(out)


REWARD_TABLE: tuple[RewardRow, ...] = (
    RewardRow("lin_vel_tracking", "linear velocity tracking", 5.0, 5.0),
    RewardRow("ang_vel_tracking", "angular velocity tracking", 3.0, 3.0),
    RewardRow("termination", "termination penalty", 200.0, 200.0),
    RewardRow("collision", "collision penalty", 1.0, None),
    RewardRow("action_rate", "action rate", 5.0e-3, 5.0e-3, _r(range(12)), _r(range(23))),
    RewardRow("joint_acc", "joint acceleration penalty", 2.5e-7, 1e-6, _r(range(12)), _r(range(15, 18), range(19, 22))),
    RewardRow("joint_torque", "joint torques penalty", 2.0e-5, None, _r(range(12)), None),
    RewardRow("joint_torque_shoulder", "joint torques penalty", None, 1e-4, None, (15, 19)),
    RewardRow("joint_torque_knee", "joint torques penalty", None, 5e-5, None, (3, 9)),
    RewardRow("joint_torque_hip", "joint torques penalty", None, 5e-5, None, (2, 8)),
    RewardRow("joint_pos_limits", "joint position limits", 1.0, 10.0, _r(range(12)), _r(range(23))),
    RewardRow("joint_vel_limits", "joint velocity limits", 1.0, 0.1, _r(range(12)), _r(range(23))),
    RewardRow("joint_torque_limits", "joint torque limits", 0.2, 2e-3, _r(range(12)), _r(range(23))),
    RewardRow("lin_vel_z", "linear velocity penalty", 1.0, None),
    RewardRow("ang_vel_xy", "angular velocity penalty", 5.0e-2, 5.0e-2),
    RewardRow("contact_force", "contact forces penalty", 2.5e-5, None, _r(range(4)), None, per_foot=True),
    RewardRow("foot_slip", "foot slippage penalty", 0.5, 1.0, _r(range(4)), (0, 1), per_foot=True),
    RewardRow("joint_deviation", "joint deviation penalty", None, 0.5, None, _r(range(15, 23))),
    RewardRow("no_fly", "no fly", None, 5.0, None, (0, 1), per_foot=True),
    RewardRow("straight_body", "straight body", None, 3.0),
    RewardRow("standing_joint_pos", "standing joint positions penalty", 0.1, None, _r(range(12)), None, True),
    RewardRow("standing_joint_vel", "standing joint velocity penalty", 0.5, 0.2, _r(range(12)), _r(range(23)), True),
)

TABLE_ROWS = tuple(dict.fromkeys(r.row for r in REWARD_TABLE))
TRACKING_TERMS = ("lin_vel_tracking", "ang_vel_tracking")


def active_terms(robot: str, stage: int) -> tuple[str, ...]:
    return tuple(
        r.name for r in REWARD_TABLE if r.weight(robot) is not None and (stage == 2 or not r.stage2_only)
    )


def reward_weights(robot: str, overrides: dict | None = None, only: tuple[str, ...] | None = None) -> dict[str, float]:
    """Default weights for ``robot``; ``only`` zeroes every other term."""
    if robot not in ("quadruped", "biped"):
        raise ConfigurationError(f"unknown robot {robot!r}")
    weights = {r.name: float(r.weight(robot)) for r in REWARD_TABLE if r.weight(robot) is not None}
    for key, value in (overrides or {}).items():
        if key not in weights:
            raise ConfigurationError(f"reward term {key!r} does not apply to the {robot}")
        weights[key] = float(value)
    if only is not None:
        unknown = set(only) - set(weights)
        if unknown:
            raise ConfigurationError(f"unknown reward terms {sorted(unknown)}")
        weights = {k: (v if k in only else 0.0) for k, v in weights.items()}
    return weights


def _idx(row: RewardRow, robot: str, width: int):
    index = row.index(robot)
    return slice(None) if index is None else np.asarray(index)[np.asarray(index) < width]


def _hinge(value: np.ndarray, limit: np.ndarray, fraction: float) -> np.ndarray:
    return -np.sum(np.maximum(np.abs(value) - fraction * limit, 0.0), axis=1)


def _standing(curr: SimState) -> np.ndarray:
    """1.0 where the command is (almost) zero, else 0.0."""
    return (np.linalg.norm(curr.command, axis=1) < STANDING_COMMAND).astype(np.float64)


TermFn = Callable[[SimState, SimState, StepInfo, RobotModel, object], np.ndarray]

_TERMS: dict[str, TermFn] = {
    "lin_vel_tracking": lambda p, c, i, m, ix: np.exp(-np.sum((c.command[:, :2] - c.lin_vel[:, :2]) ** 2, axis=1)),
    "ang_vel_tracking": lambda p, c, i, m, ix: np.exp(-((c.command[:, 2] - c.ang_vel[:, 2]) ** 2)),
    "termination": lambda p, c, i, m, ix: -(i.terminated & ~i.fault).astype(np.float64),
    "collision": lambda p, c, i, m, ix: -i.collided.astype(np.float64),
    "action_rate": lambda p, c, i, m, ix: -np.sum((c.action[:, ix] - c.prev_action[:, ix]) ** 2, axis=1),
    "joint_acc": lambda p, c, i, m, ix: -np.sum(c.qdd[:, ix] ** 2, axis=1),
    "joint_torque": lambda p, c, i, m, ix: -np.sum(c.tau[:, ix] ** 2, axis=1),
    "joint_pos_limits": lambda p, c, i, m, ix: _hinge(c.q[:, ix], m.q_limit[ix], Q_LIMIT_FRACTION),
    "joint_vel_limits": lambda p, c, i, m, ix: _hinge(c.qd[:, ix], m.qd_limit[ix], QD_LIMIT_FRACTION),
    "joint_torque_limits": lambda p, c, i, m, ix: _hinge(c.tau[:, ix], m.tau_limit[ix], TAU_LIMIT_FRACTION),
    "lin_vel_z": lambda p, c, i, m, ix: -(c.lin_vel[:, 2] ** 2),
    "ang_vel_xy": lambda p, c, i, m, ix: -np.sum(c.ang_vel[:, :2] ** 2, axis=1),
    "contact_force": lambda p, c, i, m, ix: -np.sum(np.maximum(c.force[:, ix] - CONTACT_FORCE_LIMIT, 0.0), axis=1),
    "foot_slip": lambda p, c, i, m, ix: -np.sum(
        (c.contact & p.contact)[:, ix] * np.linalg.norm(c.foot_vel[:, ix], axis=-1), axis=1
    ),
    "joint_deviation": lambda p, c, i, m, ix: -np.maximum(
        np.sum((c.q[:, ix] - m.default_q[ix]) ** 2, axis=1) - DEVIATION_ALLOWANCE, 0.0
    ),
    "no_fly": lambda p, c, i, m, ix: -i.zero_contact.astype(np.float64),
    "straight_body": lambda p, c, i, m, ix: -np.sum(c.gravity[:, :2] ** 2, axis=1),
    "standing_joint_pos": lambda p, c, i, m, ix: -_standing(c) * np.linalg.norm(m.default_q[ix] - c.q[:, ix], axis=1),
    "standing_joint_vel": lambda p, c, i, m, ix: -_standing(c) * np.linalg.norm(c.qd[:, ix], axis=1),
}
for _name in ("joint_torque_shoulder", "joint_torque_knee", "joint_torque_hip"):
    _TERMS[_name] = _TERMS["joint_torque"]


def compute_reward(
    prev: SimState,
    curr: SimState,
    info: StepInfo,
    model: RobotModel,
    stage: int,
    weights: dict[str, float] | None = None,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Weighted per-term contributions and their sum, one value per environment.

    ``weights`` defaults to the table weights for ``model.kind``. Stage-2-only
    rows are skipped in stage 1.
    """
    robot = model.kind
    weights = reward_weights(robot) if weights is None else weights
    terms = {}
    total = np.zeros(curr.num_envs)
    for row in REWARD_TABLE:
        if row.weight(robot) is None or (row.stage2_only and stage != 2):
            continue
        w = weights.get(row.name, 0.0)
        if w == 0.0:
            continue
        ix = _idx(row, robot, model.foot_count if row.per_foot else model.joint_count)
        value = w * _TERMS[row.name](prev, curr, info, model, ix)
        terms[row.name] = value
        total = total + value
    return total, terms
