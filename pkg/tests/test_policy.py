import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnloco import tensor as T
from attnloco.gradcheck import grad_check
from attnloco.policy import ObservationBundle, ValueNormalizer, gaussian_entropy, gaussian_log_prob
from attnloco.verification import tiny_policy


def _bundle(rng, policy, n=4, privileged=True):
    cfg = policy.encoder.config
    return ObservationBundle(
        rng.standard_normal((n, cfg.proprio_dim)), rng.standard_normal((n, cfg.map_length, cfg.map_width, 3)), privileged
    )


def test_gaussian_log_prob_matches_closed_form(rng):
    mu, ls, a = rng.standard_normal((3, 2)), rng.standard_normal(2) * 0.3, rng.standard_normal((3, 2))
    with T.precision(np.float64):
        lp = gaussian_log_prob(T.Tensor(mu), T.Tensor(ls), a).data
    std = np.exp(ls)
    ref = (-0.5 * ((a - mu) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi)).sum(-1)
    np.testing.assert_allclose(lp, ref, atol=1e-12)
    with T.precision(np.float64):
        ent = gaussian_entropy(T.Tensor(ls)).data
    assert float(ent) == pytest.approx(np.sum(0.5 * np.log(2 * np.pi * np.e * std**2)))


def test_log_prob_gradient(rng):
    mu, a = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    assert grad_check(lambda ls: gaussian_log_prob(T.Tensor(mu), ls, a).sum(), rng.standard_normal(2) * 0.3) < 1e-6


def test_critic_refuses_noisy_observations(rng):
    policy = tiny_policy()
    noisy = _bundle(rng, policy, privileged=False)
    with pytest.raises(ValueError, match="privileged"):
        policy.evaluate(noisy)
    with pytest.raises(ValueError, match="privileged"):
        policy.forward(noisy, noisy)


def test_hooks_see_each_role(rng):
    policy = tiny_policy()
    seen = []
    policy.add_hook(lambda role, obs: seen.append((role, obs.privileged)))
    actor, critic = _bundle(rng, policy, privileged=False), _bundle(rng, policy)
    policy.act_and_value(actor, critic, rng)
    policy.evaluate(critic)
    policy.act(actor, stochastic=False)
    assert seen == [("actor", False), ("critic", True), ("critic", True), ("actor", False)]


def test_shared_bundle_gives_same_result_as_separate_passes(rng):
    policy = tiny_policy()
    obs = _bundle(rng, policy)
    twin = ObservationBundle(obs.proprio.copy(), obs.scan.copy(), True)
    with T.precision(np.float64):
        m1, v1, _ = policy.forward(obs, obs)
        m2, v2, _ = policy.forward(obs, twin)
    np.testing.assert_array_equal(m1.data, m2.data)
    np.testing.assert_array_equal(v1.data, v2.data)


def test_deterministic_act_returns_mean(rng):
    policy = tiny_policy()
    obs = _bundle(rng, policy)
    res = policy.act(obs, stochastic=False)
    np.testing.assert_array_equal(res.action, res.mean)
    assert res.attention.shape == (4, 2, 1, 12)
    with pytest.raises(ValueError):
        policy.act(obs, stochastic=True)


def test_state_dict_round_trip_includes_value_normaliser(rng):
    a, b = tiny_policy(seed=0), tiny_policy(seed=1)
    a.value_norm.update(rng.standard_normal(50) * 3 + 2)
    b.load_state_dict(a.state_dict())
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])
    assert b.value_norm.mean == a.value_norm.mean


def test_load_state_dict_rejects_mismatch(rng):
    a = tiny_policy()
    state = a.state_dict()
    state.pop("log_std")
    with pytest.raises(KeyError):
        a.load_state_dict(state)
    state = a.state_dict()
    state["log_std"] = np.zeros(5)
    with pytest.raises(ValueError):
        a.load_state_dict(state)


@given(st.lists(arrays(np.float64, st.integers(1, 30), elements=st.floats(-100, 100)), min_size=1, max_size=5))
def test_value_normaliser_merge_equals_pooled_moments(chunks):
    norm = ValueNormalizer()
    for c in chunks:
        norm.update(c)
    pooled = np.concatenate(chunks)
    assert norm.mean == pytest.approx(pooled.mean(), abs=1e-9)
    assert norm.var == pytest.approx(pooled.var(), rel=1e-9, abs=1e-9)
    assert norm.count == pooled.size


@given(arrays(np.float64, 8, elements=st.floats(-50, 50)))
def test_value_normaliser_inverse(x):
    norm = ValueNormalizer()
    norm.update(x * 2 + 1)
    np.testing.assert_allclose(norm.denormalize(norm.normalize(x)), x, atol=1e-7)
