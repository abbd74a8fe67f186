import numpy as np
import pytest

from attnloco.errors import ConfigurationError
from attnloco.sim import dynamics as D
from attnloco.sim.env import FAILURE, STUCK, SUCCESS, CommandConfig, EnvConfig, LeggedEnv, label_outcome
from attnloco.sim.rewards import (
    REWARD_TABLE,
    active_terms,
    compute_reward,
    reward_weights,
)
from attnloco.sim.robots import robot_model
from attnloco.terrain.field import HeightField


def _flat_field():
    return HeightField(0.05, np.zeros((80, 80)), np.ones((80, 80), bool))


def _pair(kind="quadruped", n=3, command=(0.6, -0.2, 0.4)):
    model = robot_model(kind)
    field = _flat_field()
    s = D.initial_state(model, field, np.full((n, 2), 2.0), command=np.tile(command, (n, 1)))
    return model, s, s.copy()


def _info(n):
    return D.StepInfo(
        terminated=np.zeros(n, bool), collided=np.zeros(n, int), zero_contact=np.zeros(n, int),
        fault=np.zeros(n, bool), landed=np.zeros((n, 4), bool),
    )


@pytest.mark.parametrize("kind", ["quadruped", "biped"])
def test_perfect_tracking_is_worth_eight(kind):
    model, prev, curr = _pair(kind)
    curr.lin_vel[:, :2] = curr.command[:, :2]
    curr.ang_vel[:, 2] = curr.command[:, 2]
    _, terms = compute_reward(prev, curr, _info(3), model, 1)
    np.testing.assert_array_equal(terms["lin_vel_tracking"], 5.0)
    np.testing.assert_array_equal(terms["ang_vel_tracking"], 3.0)


def test_contact_force_threshold():
    model, prev, curr = _pair()
    curr.force[:] = 700.0
    _, terms = compute_reward(prev, curr, _info(3), model, 1)
    np.testing.assert_array_equal(terms["contact_force"], 0.0)
    curr.force[:, 0] = 710.0
    _, terms = compute_reward(prev, curr, _info(3), model, 1)
    np.testing.assert_allclose(terms["contact_force"], -2.5e-5 * 10.0)


@pytest.mark.parametrize("kind", ["quadruped", "biped"])
def test_limit_hinges_vanish_inside_their_fractions(kind):
    model, prev, curr = _pair(kind)
    curr.q[:] = 0.9 * model.q_limit * np.sign(np.arange(model.joint_count) % 2 - 0.5)
    curr.qd[:] = -0.9 * model.qd_limit
    curr.tau[:] = 0.8 * model.tau_limit
    _, terms = compute_reward(prev, curr, _info(3), model, 1)
    for name in ("joint_pos_limits", "joint_vel_limits", "joint_torque_limits"):
        np.testing.assert_array_equal(terms[name], 0.0)
    curr.q[:, 0] = 0.95 * model.q_limit[0]
    _, terms = compute_reward(prev, curr, _info(3), model, 1)
    w = reward_weights(kind)["joint_pos_limits"]
    np.testing.assert_allclose(terms["joint_pos_limits"], -w * 0.05 * model.q_limit[0])


def test_standing_terms_only_in_stage_two_with_zero_command():
    model, prev, curr = _pair(command=(0.0, 0.0, 0.0))
    curr.qd[:] = 1.0
    _, stage1 = compute_reward(prev, curr, _info(3), model, 1)
    _, stage2 = compute_reward(prev, curr, _info(3), model, 2)
    assert "standing_joint_vel" not in stage1
    np.testing.assert_allclose(stage2["standing_joint_vel"], -0.5 * np.sqrt(12))
    model, prev, curr = _pair(command=(0.5, 0.0, 0.0))
    curr.qd[:] = 1.0
    _, stage2 = compute_reward(prev, curr, _info(3), model, 2)
    np.testing.assert_array_equal(stage2["standing_joint_vel"], 0.0)


def test_total_is_sum_of_terms():
    model, prev, curr = _pair()
    rng = np.random.default_rng(0)
    curr.qd[:] = rng.standard_normal(curr.qd.shape) * 5
    curr.lin_vel[:] = rng.standard_normal((3, 3))
    total, terms = compute_reward(prev, curr, _info(3), model, 2)
    np.testing.assert_allclose(total, sum(terms.values()))


def test_term_counts_per_robot():
    # stage 1 uses 14 quadruped terms and 16 biped terms (three torque groups); stage 2 adds the standing rows
    assert len(active_terms("quadruped", 1)) == 14
    assert len(active_terms("biped", 1)) == 16
    assert len(active_terms("quadruped", 2)) == 16
    assert len(active_terms("biped", 2)) == 17


def test_reward_weight_overrides():
    w = reward_weights("quadruped", {"collision": 2.0}, only=("collision", "lin_vel_tracking"))
    assert w["collision"] == 2.0 and w["lin_vel_tracking"] == 5.0 and w["termination"] == 0.0
    with pytest.raises(ConfigurationError):
        reward_weights("quadruped", {"no_fly": 1.0})
    with pytest.raises(ConfigurationError):
        reward_weights("biped", only=("warp_speed",))


def test_outcome_precedence():
    assert label_outcome(True, False, False) == SUCCESS
    assert label_outcome(True, True, False) == FAILURE
    assert label_outcome(False, False, True) == FAILURE
    assert label_outcome(False, False, False) == STUCK


def _env(seed=3, **kw):
    cfg = dict(num_envs=4, families=("flat", "grid_stones"), map_length=5, map_width=3)
    cfg.update(kw)
    return LeggedEnv(EnvConfig(**cfg), seed)


def test_env_observation_shapes():
    env = _env()
    actor, critic = env.observations()
    assert actor.proprio.shape == (4, env.proprio_dim) and critic.scan.shape == (4, 5, 3, 3)
    assert actor is critic and critic.privileged


def test_noisy_actor_sees_perturbed_values():
    env = LeggedEnv(EnvConfig(num_envs=2, map_length=5, map_width=3), 0, stage=2, actor_privileged=False)
    actor, critic = env.observations()
    assert not actor.privileged and critic.privileged
    assert not np.array_equal(actor.proprio, critic.proprio)
    sl = D.proprio_slices(env.model)
    # previous actions and commands are never perturbed
    np.testing.assert_array_equal(actor.proprio[:, sl["prev_action"]], critic.proprio[:, sl["prev_action"]])
    np.testing.assert_array_equal(actor.proprio[:, sl["command"]], critic.proprio[:, sl["command"]])


def _rollout(env, steps, seed):
    rng = np.random.default_rng(seed)
    rewards, episodes = [], []
    for _ in range(steps):
        r = env.step(rng.standard_normal((env.num_envs, env.action_dim)))
        rewards.append(r.reward)
        episodes += r.episodes
    return np.array(rewards), episodes


def test_env_is_bitwise_deterministic():
    a, b = _env(), _env()
    ra, ea = _rollout(a, 60, 1)
    rb, eb = _rollout(b, 60, 1)
    np.testing.assert_array_equal(ra, rb)
    assert ea == eb
    assert a.state.equals(b.state)


def test_nan_action_is_a_fault_not_a_curriculum_outcome():
    env = _env(fixed_level=None, max_start_level=5)
    levels = env.curriculum.level.copy()
    act = np.zeros((4, env.action_dim))
    act[1, 0] = np.nan
    r = env.step(act)
    assert r.faults[1] and not r.faults[[0, 2, 3]].any()
    assert any(e.fault and e.env == 1 for e in r.episodes)
    np.testing.assert_array_equal(env.curriculum.level, levels)


def test_forward_action_walks_forward():
    env = LeggedEnv(
        EnvConfig(num_envs=2, map_length=5, map_width=3, random_heading=False,
                  commands=CommandConfig(lin_x=(0.5, 0.5), lin_y=(0, 0), yaw_rate=(0, 0))),
        0, rand=D.RandomizationConfig.none(),
    )
    model = env.model
    act = np.zeros((2, env.action_dim))
    act[:, model.joint_role.index("fore_aft")::3] = 0.5
    x0 = env.state.base_pos[:, 0].copy()
    for _ in range(100):
        env.step(act)
    assert (env.state.base_pos[:, 0] - x0 > 0.3).all()
