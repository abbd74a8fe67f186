"""Robot profiles for the kinematic surrogate.

Each joint carries a kinematic *role* that decides how it moves the foot it
belongs to:

- ``lateral``: foot target shifts sideways (hip abduction / hip roll)
- ``fore_aft``: foot target shifts forward (hip flexion / hip pitch)
- ``lift``: swing clearance from knee flexion
- ``turn``: heading change (biped hip yaw)
- ``none``: no effect on footholds (ankles, waist, arms)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError

ROLES = ("lateral", "fore_aft", "lift", "turn", "none")

QUADRUPED_JOINTS = (
    "LF_HAA", "LF_HFE", "LF_KFE",
    "LH_HAA", "LH_HFE", "LH_KFE",
    "RF_HAA", "RF_HFE", "RF_KFE",
    "RH_HAA", "RH_HFE", "RH_KFE",
)

# The published index list skips l_hip_yaw while counting 23 joints; it is
# restored at index 1 so that knee, hip-pitch and shoulder-pitch indices pair up.
BIPED_JOINTS = (
    "l_hip_roll", "l_hip_yaw", "l_hip_pitch", "l_knee_pitch", "l_ankle_pitch", "l_ankle_roll",
    "r_hip_roll", "r_hip_yaw", "r_hip_pitch", "r_knee_pitch", "r_ankle_pitch", "r_ankle_roll",
    "waist_yaw", "waist_pitch", "waist_roll",
    "l_shoulder_pitch", "l_shoulder_roll", "l_shoulder_yaw", "l_elbow_pitch",
    "r_shoulder_pitch", "r_shoulder_roll", "r_shoulder_yaw", "r_elbow_pitch",
)


@dataclass
class RobotModel:
    name: str
    kind: str  # "quadruped" or "biped"
    foot_names: tuple[str, ...]
    joint_names: tuple[str, ...]
    joint_foot: np.ndarray  # (A,) foot index or -1
    joint_role: tuple[str, ...]
    nominal_feet: np.ndarray  # (F, 2) base-frame foot positions at rest
    gait_offsets: np.ndarray  # (F,) phase offset in steps
    gait_period: int
    swing_steps: int
    default_q: np.ndarray
    q_limit: np.ndarray
    qd_limit: np.ndarray
    tau_limit: np.ndarray
    base_length: float
    base_width: float
    standing_height: float
    reach: float
    foot_radius: float
    mass: float
    friction: float = 1.0
    step_gain: float = 0.3  # m of foot offset per rad of joint offset
    lift_gain: float = 0.3  # m of apex clearance per rad of knee flexion
    turn_gain: float = 1.0  # rad of heading per rad of hip yaw, per swing
    hop_flexion: float = 0.9  # stance knee flexion that lifts the foot
    joint_alpha: float = 0.4  # first-order joint tracking per control step
    stiffness: float = 80.0  # torque proxy gain, N m / rad
    load_lever: float = 0.1  # m, stance-load lever on fore_aft and lift joints
    max_tilt: float = 0.8
    min_base_clearance: float = 0.15
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        a = len(self.joint_names)
        for name in ("default_q", "q_limit", "qd_limit", "tau_limit", "joint_foot"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (a,):
                raise ConfigurationError(f"{self.name}: {name} must have {a} entries, got {arr.shape}")
        if len(self.joint_role) != a or any(r not in ROLES for r in self.joint_role):
            raise ConfigurationError(f"{self.name}: joint roles must be one of {ROLES}")
        for name in ("q_limit", "qd_limit", "tau_limit"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ConfigurationError(f"{self.name}: {name} must be strictly positive")
        if self.reach <= 0:
            raise ConfigurationError(f"{self.name}: reach must be positive")
        if not 0 < self.swing_steps < self.gait_period:
            raise ConfigurationError(f"{self.name}: swing_steps must lie in (0, gait_period)")
        self.joint_foot = np.asarray(self.joint_foot, dtype=np.int64)
        self.nominal_feet = np.asarray(self.nominal_feet, dtype=np.float64)
        self.gait_offsets = np.asarray(self.gait_offsets, dtype=np.int64)
        # role masks (A,) and per-foot joint lookup (F,) for roles present
        self._masks = {r: np.array([x == r for x in self.joint_role]) for r in ROLES}
        self._foot_joint = {}
        for r in ("lateral", "fore_aft", "lift", "turn"):
            idx = np.full(self.foot_count, -1, dtype=np.int64)
            for j in np.flatnonzero(self._masks[r]):
                idx[self.joint_foot[j]] = j
            self._foot_joint[r] = idx

    @property
    def foot_count(self) -> int:
        return len(self.foot_names)

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def proprio_dim(self) -> int:
        """lin vel 3, ang vel 3, gravity 3, q, qd, previous action, command 3, gait phase 2."""
        return 14 + 3 * self.joint_count

    def foot_joint(self, role: str) -> np.ndarray:
        """Per-foot joint index with ``role`` (-1 if the foot has none)."""
        return self._foot_joint[role]

    def joint_indices(self, *names: str) -> np.ndarray:
        return np.array([self.joint_names.index(n) for n in names], dtype=np.int64)


def quadruped() -> RobotModel:
    """ANYmal-like quadruped: 4 feet, 12 joints, trotting gait."""
    roles = ("lateral", "fore_aft", "lift") * 4
    joint_foot = np.repeat(np.arange(4), 3)
    # default pose: HAA 0, HFE +-0.4, KFE -+0.8 (front / hind mirrored)
    default_q = np.array([0.0, 0.4, -0.8, 0.0, -0.4, 0.8, 0.0, 0.4, -0.8, 0.0, -0.4, 0.8])
    return RobotModel(
        name="anymal_like",
        kind="quadruped",
        foot_names=("LF", "LH", "RF", "RH"),
        joint_names=QUADRUPED_JOINTS,
        joint_foot=joint_foot,
        joint_role=roles,
        nominal_feet=np.array([[0.3, 0.2], [-0.3, 0.2], [0.3, -0.2], [-0.3, -0.2]]),
        gait_offsets=np.array([0, 12, 12, 0]),  # LF+RH, LH+RF
        gait_period=24,
        swing_steps=12,
        default_q=default_q,
        q_limit=np.tile([0.72, 2.0, 2.6], 4),
        qd_limit=np.full(12, 7.5),
        tau_limit=np.full(12, 80.0),
        base_length=0.93,
        base_width=0.53,
        standing_height=0.5,
        reach=0.35,
        foot_radius=0.03,
        mass=50.0,
    )


def biped() -> RobotModel:
    """GR-1-like humanoid: 2 feet, 23 joints, alternating gait."""
    leg_roles = ("lateral", "turn", "fore_aft", "lift", "none", "none")
    roles = leg_roles + leg_roles + ("none",) * 3 + ("none",) * 8
    joint_foot = np.array([0] * 6 + [1] * 6 + [-1] * 11)
    leg_q = [0.0, 0.0, -0.5, 1.0, -0.5, 0.0]
    default_q = np.array(leg_q + leg_q + [0.0] * 3 + [0.0, 0.2, 0.0, -0.3, 0.0, -0.2, 0.0, -0.3])
    leg_lim = [0.8, 0.7, 1.8, 2.0, 1.0, 0.5]
    q_limit = np.array(leg_lim + leg_lim + [1.0, 0.5, 0.5] + [2.8, 1.5, 1.5, 1.8] * 2)
    qd_limit = np.array([10.0] * 12 + [6.0] * 3 + [8.0] * 8)
    tau_limit = np.array([120.0, 60.0, 200.0, 200.0, 80.0, 40.0] * 2 + [100.0] * 3 + [40.0] * 8)
    return RobotModel(
        name="gr1_like",
        kind="biped",
        foot_names=("L", "R"),
        joint_names=BIPED_JOINTS,
        joint_foot=joint_foot,
        joint_role=roles,
        nominal_feet=np.array([[0.0, 0.1], [0.0, -0.1]]),
        gait_offsets=np.array([0, 20]),
        gait_period=40,
        swing_steps=20,
        default_q=default_q,
        q_limit=q_limit,
        qd_limit=qd_limit,
        tau_limit=tau_limit,
        base_length=0.3,
        base_width=0.4,
        standing_height=0.9,
        reach=0.45,
        foot_radius=0.05,
        mass=55.0,
        stiffness=150.0,
    )


ROBOTS = {"quadruped": quadruped, "biped": biped}


def robot_model(kind: str) -> RobotModel:
    if kind not in ROBOTS:
        raise ConfigurationError(f"unknown robot profile {kind!r}; expected one of {sorted(ROBOTS)}")
    return ROBOTS[kind]()
