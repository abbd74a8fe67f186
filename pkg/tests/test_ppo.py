import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnloco import tensor as T
from attnloco.errors import ConfigurationError, DimensionError
from attnloco.ppo import (
    PPOConfig,
    RolloutBuffer,
    StagePlan,
    Trainer,
    TrainingLog,
    adapt_lr,
    collect_rollout,
    compute_gae,
    gaussian_kl,
    normalize_advantages,
    ppo_loss,
    ppo_update,
    run_stage,
)
from attnloco.sim.rewards import active_terms
from attnloco.verification import tiny_minibatch, tiny_policy

from helpers import small_config
from oracles import naive_gae


def _rollout(rng, steps=30, n=6, p_done=0.1):
    rewards = rng.standard_normal((steps, n))
    values = rng.standard_normal((steps, n))
    dones = rng.random((steps, n)) < p_done
    bootstrap = rng.standard_normal(n)
    return rewards, values, dones, bootstrap


def test_gae_matches_scalar_recursion(rng):
    for _ in range(20):
        r, v, d, b = _rollout(rng)
        adv, ret = compute_gae(r, v, d, b, 0.99, 0.95)
        np.testing.assert_allclose(adv, naive_gae(r, v, d, b, 0.99, 0.95), rtol=0, atol=1e-10)
        np.testing.assert_allclose(ret, adv + v, rtol=0, atol=1e-12)


def test_gae_done_cuts_the_carry():
    r = np.array([[1.0], [1.0], [1.0]])
    v = np.zeros((3, 1))
    d = np.array([[0.0], [1.0], [0.0]])
    adv, _ = compute_gae(r, v, d, np.array([10.0]), gamma=0.5, lam=1.0)
    # step 1 ends an episode: step 0 sees only step 1's reward, step 2 sees the bootstrap
    np.testing.assert_allclose(adv[:, 0], [1.5, 1.0, 6.0])


def test_gae_lambda_zero_is_one_step_td(rng):
    r, v, d, b = _rollout(rng, steps=8, n=3, p_done=0.0)
    adv, _ = compute_gae(r, v, d, b, 0.9, 0.0)
    nxt = np.concatenate([v[1:], b[None]])
    np.testing.assert_allclose(adv, r + 0.9 * nxt - v)


def test_gae_shape_errors():
    with pytest.raises(DimensionError):
        compute_gae(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DimensionError):
        compute_gae(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3))


def test_adapt_lr_rule():
    assert adapt_lr(1e-3, 0.03, 0.01) == pytest.approx(1e-3 / 1.5)
    assert adapt_lr(1e-3, 0.004, 0.01) == pytest.approx(1.5e-3)
    assert adapt_lr(1e-3, 0.01, 0.01) == 1e-3
    assert adapt_lr(1e-2, 0.0, 0.01) == 1e-2  # capped
    assert adapt_lr(1e-6, 1.0, 0.01) == 1e-6  # floored


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_normalized_advantages_are_standardised(values):
    adv = np.array(values)
    if adv.std() < 1e-3:
        return
    out = normalize_advantages(adv)
    assert abs(out.mean()) < 1e-9
    assert out.std() == pytest.approx(1.0, abs=1e-6)


@given(st.integers(0, 10_000))
def test_gaussian_kl_nonnegative_and_zero_on_identity(seed):
    r = np.random.default_rng(seed)
    mu_a, mu_b = r.standard_normal((4, 3)), r.standard_normal((4, 3))
    ls_a, ls_b = r.normal(0, 0.5, 3), r.normal(0, 0.5, 3)
    assert np.all(gaussian_kl(mu_a, ls_a, mu_b, ls_b) >= -1e-12)
    np.testing.assert_allclose(gaussian_kl(mu_a, ls_a, mu_a, ls_a), 0.0, atol=1e-12)


def test_gaussian_kl_closed_form_1d():
    kl = gaussian_kl(np.array([[0.0]]), np.array([0.0]), np.array([[1.0]]), np.array([math.log(2.0)]))
    expected = math.log(2.0) + (1.0 + 1.0) / 8.0 - 0.5
    assert kl[0] == pytest.approx(expected)


def test_ppo_config_validation():
    with pytest.raises(ConfigurationError, match="ppo.clip"):
        PPOConfig(clip=1.5)
    with pytest.raises(ConfigurationError, match="ppo.gamma"):
        PPOConfig(gamma=1.2)
    cfg = PPOConfig()
    assert cfg.batch_size(64) == 24 * 64
    assert cfg.minibatch_size(64) == 8 * 64
    with pytest.raises(ConfigurationError, match="not divisible"):
        PPOConfig(num_minibatches=5).minibatch_size(3)


def test_loss_clip_fraction_and_value():
    policy = tiny_policy()
    batch = tiny_minibatch(policy)
    with T.precision(np.float64):
        loss, info = ppo_loss(policy, batch, PPOConfig())
    # offsets of +-0.4 put two of five ratios outside the 0.2 band
    assert info.clip_fraction == pytest.approx(0.4)
    assert np.isfinite(loss.data)


def test_rollout_buffer_shares_observations_in_stage_one():
    shared = RolloutBuffer(4, 2, 5, (3, 2, 3), 2, shared_obs=True)
    split = RolloutBuffer(4, 2, 5, (3, 2, 3), 2, shared_obs=False)
    assert shared.critic_proprio is shared.actor_proprio
    assert split.critic_proprio is not split.actor_proprio
    with pytest.raises(RuntimeError):
        shared.finish(np.zeros(2), 0.99, 0.95)


def test_collect_rollout_and_zero_lr_update_is_noop():
    cfg = small_config()
    policy = cfg.build_policy(np.random.default_rng(0))
    trainer = Trainer(policy, PPOConfig(steps_per_env=6, learning_rate=0.0), np.random.default_rng(1))
    env = cfg.build_env(1)
    buf = RolloutBuffer(6, 3, env.proprio_dim, (5, 3, 3), env.action_dim, shared_obs=True)
    terms, mean_reward, _, _ = collect_rollout(env, trainer, buf)
    assert buf.full and buf.advantages.shape == (6, 3)
    assert np.isfinite(mean_reward) and set(terms) == set(active_terms("quadruped", 1))
    before = {k: v.copy() for k, v in policy.state_dict().items() if not k.startswith("value_norm")}
    stats = ppo_update(buf, policy, trainer.optimizer, trainer.ppo, trainer.rng)
    after = policy.state_dict()
    for k, v in before.items():
        np.testing.assert_array_equal(v, after[k])
    assert stats.learning_rate == 0.0
    assert 0.0 <= stats.clip_fraction <= 1.0


def test_run_stage_records_and_plan_checks(tmp_path):
    cfg = small_config()
    policy = cfg.build_policy(np.random.default_rng(0))
    trainer = Trainer(policy, cfg.ppo_config(), np.random.default_rng(1))
    calls = []
    log = run_stage(
        cfg.stage_plan(1), cfg.build_env(1), trainer, TrainingLog(tmp_path / "log.jsonl"),
        checkpoint=lambda tr, e, p: calls.append(tr.epoch), checkpoint_every=0,
    )
    assert [r["epoch"] for r in log.records] == [1, 2]
    assert calls == [2]
    keys = {"epoch", "stage", "reward", "terms", "terrain_level", "kl", "lr", "clip_fraction", "entropy", "outcomes"}
    assert keys <= set(log.records[0])
    assert TrainingLog.read(tmp_path / "log.jsonl") == log.records
    with pytest.raises(ConfigurationError):
        run_stage(cfg.stage_plan(2), cfg.build_env(1), trainer)


def test_stage_plan_entropy_and_observation_roles():
    cfg = small_config()
    assert cfg.stage_plan(1).actor_privileged and cfg.stage_plan(1).entropy_coef == 0.005
    assert not cfg.stage_plan(2).actor_privileged and cfg.stage_plan(2).entropy_coef == 0.002
    with pytest.raises(ConfigurationError):
        StagePlan(3, ("flat",), True, 1, 0.0)


def test_training_log_writes_nan_as_null(tmp_path):
    log = TrainingLog(tmp_path / "l.jsonl")
    log.append({"kl": float("nan"), "x": np.float32(1.5), "n": np.int64(3)})
    line = (tmp_path / "l.jsonl").read_text().strip()
    assert json.loads(line) == {"kl": None, "n": 3, "x": 1.5}
