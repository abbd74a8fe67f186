"""Kinematic foothold surrogate for legged locomotion.

The state of ``N`` robots is advanced in lock-step at a fixed control rate.
A fixed gait clock decides which feet swing; the policy's joint targets only
shape *where* a swing foot lands and how high it lifts:

- joint positions follow their targets with first-order lag
- each swing foot interpolates from its liftoff point towards a target
  ``base + R(yaw) (nominal + offset)``, where the offset comes from the
  fore-aft and lateral joints, and lifts by an arc whose apex comes from the
  knee
- at touchdown the foot must land on support within reach and must have
  cleared any step-up; otherwise the foot is counted as a collision
- the base pose is a rigid fit to the feet: xy centroid, heading (Kabsch fit
  for the quadruped, hip-yaw driven for the biped), height from the mean foot
  height, roll and pitch from a ridge plane fit to the foot heights

With zero actions on flat ground no foot moves, so the robot stands still.
Velocities and accelerations are finite differences over the control step,
torques and contact forces are proxies (see :func:`step`).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigurationError
from ..policy import ObservationBundle
from ..terrain.field import HeightField, sample_map_scan
from .robots import RobotModel

GRAVITY = 9.81
DT = 0.02
ACTION_SCALE = 0.5
ACTION_CLIP = 10.0
STUB_TOLERANCE = 0.02
VOID_DROP = 0.3
SLIP_FRICTION = 0.6
PLANE_RIDGE = 1e-3

LIN_VEL_SCALE = 2.0
ANG_VEL_SCALE = 0.25
QD_SCALE = 0.05
COMMAND_SCALE = np.array([2.0, 2.0, 0.25])


@dataclass
class RandomizationConfig:
    """Uniform observation-noise half-widths, map drift, pushes and physical ranges."""

    lin_vel_noise: float = 0.1
    ang_vel_noise: float = 0.2
    gravity_noise: float = 0.05
    q_noise: float = 0.01
    qd_noise: float = 0.5
    scan_noise: float = 0.02
    drift_sigma: float = 0.03
    push_interval: float = 0.0  # seconds; 0 disables pushes
    push_lin_vel: float = 0.5
    push_ang_vel: float = 0.5
    mass_offset: tuple[float, float] = (-5.0, 5.0)
    friction: tuple[float, float] = (0.4, 1.2)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            vals = v if isinstance(v, (tuple, list)) else (v,)
            if f.name == "mass_offset":
                if v[0] > v[1]:
                    raise ConfigurationError("randomization.mass_offset must be (low, high)")
                continue
            if any(x < 0 for x in vals):
                raise ConfigurationError(f"randomization.{f.name} must be nonnegative, got {v}")
        if self.friction[0] > self.friction[1]:
            raise ConfigurationError("randomization.friction must be (low, high)")
        self.mass_offset = tuple(float(x) for x in self.mass_offset)
        self.friction = tuple(float(x) for x in self.friction)

    @classmethod
    def none(cls) -> "RandomizationConfig":
        """No noise, no drift, no pushes, nominal mass and friction."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, (0.0, 0.0), (1.0, 1.0))


@dataclass
class SimState:
    """Batched surrogate state; every array has a leading environment axis."""

    base_pos: np.ndarray  # (N, 3) world
    yaw: np.ndarray  # (N,)
    roll: np.ndarray
    pitch: np.ndarray
    lin_vel: np.ndarray  # (N, 3) base frame
    ang_vel: np.ndarray  # (N, 3) base frame
    world_vel: np.ndarray  # (N, 3)
    gravity: np.ndarray  # (N, 3) base-frame unit gravity
    feet: np.ndarray  # (N, F, 3) world
    foot_vel: np.ndarray  # (N, F, 3)
    foot_ground: np.ndarray  # (N, F) foot height without swing arc
    liftoff: np.ndarray  # (N, F, 3)
    liftoff_supported: np.ndarray  # (N, F) bool
    apex: np.ndarray  # (N, F) highest clearance so far this swing
    supported: np.ndarray  # (N, F) bool, foot not lost in a void
    contact: np.ndarray  # (N, F) bool
    force: np.ndarray  # (N, F) contact force magnitude proxy, N
    q: np.ndarray  # (N, A)
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    q_target: np.ndarray
    action: np.ndarray  # (N, A) current action a_t
    prev_action: np.ndarray  # (N, A) a_{t-1}
    command: np.ndarray  # (N, 3) vx, vy (base frame), yaw rate
    step_count: np.ndarray  # (N,) int
    sway: np.ndarray  # (N, 3) push-induced x, y, yaw offset
    push_twist: np.ndarray  # (N, 3) decaying push velocity
    mass: np.ndarray  # (N,)
    friction: np.ndarray  # (N,)
    drift: np.ndarray  # (N, 2) map drift, constant per episode

    @property
    def num_envs(self) -> int:
        return self.base_pos.shape[0]

    def copy(self) -> "SimState":
        return copy.deepcopy(self)

    def take(self, idx) -> "SimState":
        return SimState(**{f.name: getattr(self, f.name)[idx].copy() for f in fields(self)})

    def put(self, idx, other: "SimState") -> None:
        for f in fields(self):
            getattr(self, f.name)[idx] = getattr(other, f.name)

    def pose(self) -> np.ndarray:
        """(N, 4) rows of x, y, z, yaw."""
        return np.column_stack([self.base_pos, self.yaw])

    def equals(self, other: "SimState") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


@dataclass
class StepInfo:
    terminated: np.ndarray  # (N,) bool
    collided: np.ndarray  # (N,) int, feet that landed badly this step
    zero_contact: np.ndarray  # (N,) int, 1 when no foot touches the ground
    fault: np.ndarray  # (N,) bool, non-finite action
    landed: np.ndarray  # (N, F) bool, clean touchdowns


def rotate(yaw: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Rotate (..., 2) vectors by per-env yaw (N,); xy has a leading N axis."""
    c, s = np.cos(yaw), np.sin(yaw)
    shape = (-1,) + (1,) * (xy.ndim - 2)
    c, s = c.reshape(shape), s.reshape(shape)
    return np.stack([c * xy[..., 0] - s * xy[..., 1], s * xy[..., 0] + c * xy[..., 1]], axis=-1)


def wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def gravity_vector(roll: np.ndarray, pitch: np.ndarray) -> np.ndarray:
    """Unit gravity in the base frame (z up); pitch > 0 is nose up, roll > 0 is left side up."""
    return np.column_stack([-np.sin(pitch), -np.sin(roll) * np.cos(pitch), -np.cos(roll) * np.cos(pitch)])


def tilt_angle(gravity: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(-gravity[:, 2], -1.0, 1.0))


def _rim_offsets(radius: float):
    offsets = [(0.0, 0.0)]
    if radius > 0:
        offsets += [(radius, 0.0), (-radius, 0.0), (0.0, radius), (0.0, -radius)]
    return offsets


def footprint_support(field: HeightField, xy: np.ndarray, radius: float) -> np.ndarray:
    """A foot is supported if its centre or any rim point of its contact patch is over support."""
    return footprint(field, xy, radius)[0]


def footprint(field: HeightField, xy: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Support flag and resting height of a foot.

    A supported foot rests on the highest supported point of its patch (a
    foot straddling a gap sits on the stone, not in the gap); an unsupported
    one reports the height under its centre.
    """
    ok = np.zeros(np.shape(xy)[:-1], dtype=bool)
    z = np.full(ok.shape, -np.inf)
    for dx, dy in _rim_offsets(radius):
        px, py = xy[..., 0] + dx, xy[..., 1] + dy
        sup = field.support_at(px, py)
        ok |= sup
        z = np.where(sup, np.maximum(z, field.height_at(px, py)), z)
    z = np.where(ok, z, field.height_at(xy[..., 0], xy[..., 1]))
    return ok, z


def _plane_matrix(model: RobotModel) -> np.ndarray:
    n = model.nominal_feet - model.nominal_feet.mean(axis=0)
    return np.linalg.solve(n.T @ n + PLANE_RIDGE * np.eye(2), n.T)  # (2, F)


def initial_state(
    model: RobotModel,
    field: HeightField,
    spawn_xy: np.ndarray,
    yaw: np.ndarray | None = None,
    command: np.ndarray | None = None,
    mass: np.ndarray | None = None,
    friction: np.ndarray | None = None,
    drift: np.ndarray | None = None,
) -> SimState:
    """Robots standing in the default pose, at rest."""
    spawn_xy = np.atleast_2d(np.asarray(spawn_xy, dtype=np.float64))
    n, nf, na = spawn_xy.shape[0], model.foot_count, model.joint_count
    yaw = np.zeros(n) if yaw is None else np.asarray(yaw, dtype=np.float64).copy()
    feet_xy = spawn_xy[:, None, :] + rotate(yaw, np.broadcast_to(model.nominal_feet, (n, nf, 2)))
    support, fz = footprint(field, feet_xy, model.foot_radius)
    feet = np.concatenate([feet_xy, fz[..., None]], axis=-1)
    ground = fz.copy()
    M = _plane_matrix(model)
    slopes = (ground - ground.mean(axis=1, keepdims=True)) @ M.T
    pitch, roll = np.arctan(slopes[:, 0]), np.arctan(slopes[:, 1])
    base = np.column_stack([spawn_xy, ground.mean(axis=1) + model.standing_height])
    q0 = np.broadcast_to(model.default_q, (n, na)).copy()
    mass = np.full(n, model.mass) if mass is None else np.asarray(mass, dtype=np.float64).copy()
    contact = support.copy()
    n_contact = np.maximum(contact.sum(axis=1, keepdims=True), 1)
    force = contact * (mass[:, None] * GRAVITY / n_contact)
    z3 = np.zeros((n, 3))
    return SimState(
        base_pos=base,
        yaw=yaw,
        roll=roll,
        pitch=pitch,
        lin_vel=z3.copy(),
        ang_vel=z3.copy(),
        world_vel=z3.copy(),
        gravity=gravity_vector(roll, pitch),
        feet=feet,
        foot_vel=np.zeros((n, nf, 3)),
        foot_ground=ground,
        liftoff=feet.copy(),
        liftoff_supported=support.copy(),
        apex=np.zeros((n, nf)),
        supported=support,
        contact=contact,
        force=force,
        q=q0.copy(),
        qd=np.zeros((n, na)),
        qdd=np.zeros((n, na)),
        tau=_stance_load(model, contact, mass),
        q_target=q0.copy(),
        action=np.zeros((n, na)),
        prev_action=np.zeros((n, na)),
        command=np.zeros((n, 3)) if command is None else np.asarray(command, dtype=np.float64).copy(),
        step_count=np.zeros(n, dtype=np.int64),
        sway=z3.copy(),
        push_twist=z3.copy(),
        mass=mass,
        friction=np.full(n, model.friction) if friction is None else np.asarray(friction, dtype=np.float64).copy(),
        drift=np.zeros((n, 2)) if drift is None else np.asarray(drift, dtype=np.float64).copy(),
    )


def _stance_load(model: RobotModel, contact: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Gravity load carried by the fore-aft and lift joints of feet in contact."""
    n = contact.shape[0]
    load = np.zeros((n, model.joint_count))
    n_contact = np.maximum(contact.sum(axis=1), 1)
    share = mass * GRAVITY / n_contact * model.load_lever
    for role in ("fore_aft", "lift"):
        idx = model.foot_joint(role)
        for f, j in enumerate(idx):
            if j >= 0:
                load[:, j] = contact[:, f] * share
    return load


def gait_clock(model: RobotModel, step_count: np.ndarray) -> np.ndarray:
    """Per-foot clock in [0, period); a foot swings while 1 <= clock <= swing_steps."""
    return (step_count[:, None] + model.gait_offsets[None, :]) % model.gait_period


def gait_phase(model: RobotModel, step_count: np.ndarray) -> np.ndarray:
    """(N, 2) sin/cos of the gait cycle, the phase of the first foot."""
    ang = 2 * np.pi * (step_count % model.gait_period) / model.gait_period
    return np.column_stack([np.sin(ang), np.cos(ang)])


def step(state: SimState, action: np.ndarray, field: HeightField, model: RobotModel) -> tuple[SimState, StepInfo]:
    """Advance every environment by one control step.

    Proxies: torque ``stiffness * (target - q)`` plus the stance gravity load;
    contact force is the weight share of the feet in contact, scaled up on
    touchdown by the foot's vertical speed. Stance feet slip along with the
    base when friction is below 0.6. Pure and deterministic.
    """
    s = state
    n, nf = s.num_envs, model.foot_count
    action = np.asarray(action, dtype=np.float64).reshape(n, model.joint_count)
    fault = ~np.all(np.isfinite(action), axis=1)
    action = np.where(fault[:, None], 0.0, np.clip(action, -ACTION_CLIP, ACTION_CLIP))

    q0 = model.default_q
    target = np.clip(q0 + ACTION_SCALE * action, -model.q_limit, model.q_limit)
    q = s.q + model.joint_alpha * (target - s.q)
    qd = (q - s.q) / DT
    qdd = (qd - s.qd) / DT
    dq = q - q0

    k = s.step_count + 1
    clock = gait_clock(model, k)
    swing = (clock >= 1) & (clock <= model.swing_steps)
    starting = clock == 1
    landing = clock == model.swing_steps
    phi = np.where(swing, clock / model.swing_steps, 0.0)

    def per_foot(role):
        idx = model.foot_joint(role)
        out = np.zeros((n, nf))
        has = idx >= 0
        out[:, has] = dq[:, idx[has]]
        return out

    offset = model.step_gain * np.stack([per_foot("fore_aft"), per_foot("lateral")], axis=-1)
    flex = per_foot("lift")
    clearance = model.lift_gain * np.maximum(flex, 0.0)

    liftoff = np.where(starting[..., None], s.feet, s.liftoff)
    liftoff_supported = np.where(starting, s.supported, s.liftoff_supported)
    apex = np.where(starting, 0.0, s.apex)
    apex = np.where(swing, np.maximum(apex, clearance), apex)

    base_xy_prev = s.base_pos[:, :2]
    target_xy = base_xy_prev[:, None, :] + rotate(s.yaw, model.nominal_feet[None] + offset)
    target_ok, target_z = footprint(field, target_xy, model.foot_radius)
    in_reach = np.linalg.norm(offset, axis=-1) <= model.reach
    ref_z = s.base_pos[:, 2:3] - model.standing_height
    stub = target_ok & (target_z - ref_z > apex + STUB_TOLERANCE)

    void_land = landing & in_reach & ~target_ok
    bounced = landing & (~in_reach | stub)
    good = landing & in_reach & target_ok & ~stub
    collided = void_land | bounced

    feet = s.feet.copy()
    ground = s.foot_ground.copy()
    supported = s.supported.copy()
    # swing feet in flight
    fly = swing & ~landing
    interp_xy = liftoff[..., :2] + phi[..., None] * (target_xy - liftoff[..., :2])
    interp_ground = liftoff[..., 2] + phi * (np.where(target_ok, target_z, liftoff[..., 2]) - liftoff[..., 2])
    arc = 4.0 * clearance * phi * (1.0 - phi)
    feet[..., :2] = np.where(fly[..., None], interp_xy, feet[..., :2])
    ground = np.where(fly, interp_ground, ground)
    feet[..., 2] = np.where(fly, interp_ground + arc, feet[..., 2])
    # touchdowns
    feet[..., :2] = np.where((good | void_land)[..., None], target_xy, feet[..., :2])
    land_z = np.where(good, target_z, liftoff[..., 2] - VOID_DROP)
    feet[..., 2] = np.where(good | void_land, land_z, feet[..., 2])
    ground = np.where(good | void_land, land_z, ground)
    feet = np.where(bounced[..., None], liftoff, feet)
    ground = np.where(bounced, liftoff[..., 2], ground)
    supported = np.where(good, True, supported)
    supported = np.where(void_land, False, supported)
    supported = np.where(bounced, liftoff_supported, supported)

    # stance feet slip with the base on low friction
    stance = ~swing | landing
    slip_gain = np.clip(1.0 - s.friction / SLIP_FRICTION, 0.0, 1.0) * 0.5
    slip = slip_gain[:, None] * s.world_vel[:, :2] * DT
    slipping = stance & ~landing & s.contact
    feet[..., :2] = feet[..., :2] + slipping[..., None] * slip[:, None, :]

    # heading
    if model.kind == "biped":
        turn = per_foot("turn")
        yaw_kin = s.yaw - s.sway[:, 2] + model.turn_gain / model.swing_steps * np.sum(np.where(swing, turn, 0.0), axis=1)
    else:
        nom = model.nominal_feet - model.nominal_feet.mean(axis=0)
        p = feet[..., :2] - feet[..., :2].mean(axis=1, keepdims=True)
        num = np.sum(nom[None, :, 0] * p[..., 1] - nom[None, :, 1] * p[..., 0], axis=1)
        den = np.sum(nom[None, :, 0] * p[..., 0] + nom[None, :, 1] * p[..., 1], axis=1)
        yaw_kin = np.arctan2(num, den)

    # pushes decay back to the kinematic pose
    sway = s.sway * 0.9 + s.push_twist * DT
    push_twist = s.push_twist * 0.8
    yaw = wrap_angle(yaw_kin + sway[:, 2])
    centroid = np.mean(feet[..., :2] - rotate(yaw_kin, np.broadcast_to(model.nominal_feet, (n, nf, 2))), axis=1)
    base_xy = centroid + sway[:, :2]
    base_z = ground.mean(axis=1) + model.standing_height
    slopes = (ground - ground.mean(axis=1, keepdims=True)) @ _plane_matrix(model).T
    pitch, roll = np.arctan(slopes[:, 0]), np.arctan(slopes[:, 1])
    base_pos = np.column_stack([base_xy, base_z])

    world_vel = (base_pos - s.base_pos) / DT
    lin_vel = np.column_stack([rotate(-yaw, world_vel[:, None, :2])[:, 0], world_vel[:, 2]])
    ang_vel = np.column_stack([(roll - s.roll) / DT, (pitch - s.pitch) / DT, wrap_angle(yaw - s.yaw) / DT])
    gravity = gravity_vector(roll, pitch)

    hopping = (~swing) & (flex > model.hop_flexion)
    contact = supported & (~swing | landing) & ~hopping & ~void_land & ~bounced
    n_contact = contact.sum(axis=1)
    foot_vel = (feet - s.feet) / DT
    impact = 1.0 + np.where(good, np.abs(foot_vel[..., 2]) + np.abs(s.foot_vel[..., 2]), 0.0)
    force = contact * (s.mass[:, None] * GRAVITY / np.maximum(n_contact, 1)[:, None]) * impact
    tau = model.stiffness * (target - q) + _stance_load(model, contact, s.mass)

    n_supported = supported.sum(axis=1)
    base_ground = field.height_at(base_xy[:, 0], base_xy[:, 1])
    torso_hit = base_z - base_ground < model.min_base_clearance
    terminated = fault | (n_supported < int(np.ceil(nf / 2))) | (tilt_angle(gravity) > model.max_tilt) | torso_hit

    nxt = SimState(
        base_pos=base_pos,
        yaw=yaw,
        roll=roll,
        pitch=pitch,
        lin_vel=lin_vel,
        ang_vel=ang_vel,
        world_vel=world_vel,
        gravity=gravity,
        feet=feet,
        foot_vel=foot_vel,
        foot_ground=ground,
        liftoff=liftoff,
        liftoff_supported=liftoff_supported,
        apex=apex,
        supported=supported,
        contact=contact,
        force=force,
        q=q,
        qd=qd,
        qdd=qdd,
        tau=tau,
        q_target=target,
        action=action,
        prev_action=s.action.copy(),
        command=s.command.copy(),
        step_count=k,
        sway=sway,
        push_twist=push_twist,
        mass=s.mass.copy(),
        friction=s.friction.copy(),
        drift=s.drift.copy(),
    )
    info = StepInfo(
        terminated=terminated,
        collided=collided.sum(axis=1),
        zero_contact=(n_contact == 0).astype(np.int64),
        fault=fault,
        landed=good,
    )
    return nxt, info


def push_due(step_count: np.ndarray, rand: RandomizationConfig) -> np.ndarray:
    """Pushes fire every ``push_interval`` seconds of episode time."""
    if rand.push_interval <= 0:
        return np.zeros_like(step_count, dtype=bool)
    every = max(int(round(rand.push_interval / DT)), 1)
    return (step_count > 0) & (step_count % every == 0)


def apply_push(state: SimState, rand: RandomizationConfig, rng: np.random.Generator, mask=None) -> SimState:
    """Overwrite the base twist of the selected robots with a bounded random twist.

    The planar velocity is drawn inside a disc of radius ``push_lin_vel``,
    the yaw rate uniformly within ``push_ang_vel``.
    """
    out = state.copy()
    n = state.num_envs
    mask = np.ones(n, bool) if mask is None else np.asarray(mask, bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0 or (rand.push_lin_vel == 0 and rand.push_ang_vel == 0):
        return out
    ang = rng.uniform(0, 2 * np.pi, idx.size)
    rad = rand.push_lin_vel * np.sqrt(rng.uniform(0, 1, idx.size))
    v_world = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    wz = rng.uniform(-rand.push_ang_vel, rand.push_ang_vel, idx.size)
    out.push_twist[idx] = np.column_stack([v_world, wz])
    out.world_vel[idx, :2] = v_world
    out.lin_vel[idx, :2] = rotate(-out.yaw[idx], v_world[:, None, :])[:, 0]
    out.ang_vel[idx, 2] = wz
    return out


def sample_episode_physics(model: RobotModel, rand: RandomizationConfig, rng: np.random.Generator) -> tuple[float, float, np.ndarray]:
    """Torso mass, foot friction and map drift, drawn once per episode."""
    mass = model.mass + rng.uniform(*rand.mass_offset)
    friction = rng.uniform(*rand.friction)
    drift = rng.normal(0.0, rand.drift_sigma, 2) if rand.drift_sigma > 0 else np.zeros(2)
    return mass, friction, drift


def proprioception(state: SimState, model: RobotModel) -> np.ndarray:
    """Exact, scaled proprioceptive vector (N, 14 + 3A)."""
    return np.concatenate(
        [
            state.lin_vel * LIN_VEL_SCALE,
            state.ang_vel * ANG_VEL_SCALE,
            state.gravity,
            state.q - model.default_q,
            state.qd * QD_SCALE,
            state.action,
            state.command * COMMAND_SCALE,
            gait_phase(model, state.step_count),
        ],
        axis=1,
    )


def proprio_slices(model: RobotModel) -> dict[str, slice]:
    a = model.joint_count
    names = [("lin_vel", 3), ("ang_vel", 3), ("gravity", 3), ("q", a), ("qd", a), ("prev_action", a), ("command", 3), ("phase", 2)]
    out, start = {}, 0
    for name, width in names:
        out[name] = slice(start, start + width)
        start += width
    return out


def assemble_observation(
    state: SimState,
    field: HeightField,
    model: RobotModel,
    grid: np.ndarray,
    rand: RandomizationConfig,
    privileged: bool,
    rngs: list | None = None,
) -> ObservationBundle:
    """Privileged: exact values, no drift. Noisy: per-term uniform noise and the episode's map drift.

    Previous actions and commands are never perturbed. ``rngs`` holds one
    generator per environment and is required for the noisy variant.
    """
    proprio = proprioception(state, model)
    if privileged:
        scan = sample_map_scan(field, state.pose(), grid)
        return ObservationBundle(proprio, scan, True)
    if rngs is None or len(rngs) != state.num_envs:
        raise ValueError("noisy observations need one rng per environment")
    sl = proprio_slices(model)
    half = np.zeros(proprio.shape[1])
    half[sl["lin_vel"]] = rand.lin_vel_noise * LIN_VEL_SCALE
    half[sl["ang_vel"]] = rand.ang_vel_noise * ANG_VEL_SCALE
    half[sl["gravity"]] = rand.gravity_noise
    half[sl["q"]] = rand.q_noise
    half[sl["qd"]] = rand.qd_noise * QD_SCALE
    scan = sample_map_scan(field, state.pose(), grid, drift=state.drift)
    cells = grid.shape[0] * grid.shape[1]
    u = np.stack([r.uniform(-1.0, 1.0, proprio.shape[1] + cells) for r in rngs])
    noisy = proprio + u[:, : proprio.shape[1]] * half
    scan[..., 2] += (u[:, proprio.shape[1]:] * rand.scan_noise).reshape(scan.shape[:3])
    return ObservationBundle(noisy, scan, False)
