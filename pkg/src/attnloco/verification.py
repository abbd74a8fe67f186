"""Finite-difference verification suite behind ``attnloco grad-check``.

Every check runs in float64 and returns ``(name, worst relative error,
tolerance)``. Elementary operations must agree to 1e-6; the composed
encoder + heads + clipped-surrogate loss to 1e-4.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .encoders import ENCODER_KINDS, EncoderConfig, build_encoder
from .gradcheck import grad_check, grad_check_parameters
from .nn import LayerNorm
from .policy import ActorCritic, ObservationBundle, gaussian_log_prob
from .ppo.core import Minibatch, PPOConfig, ppo_loss

ELEMENTARY_TOL = 1e-6
COMPOSED_TOL = 1e-4


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.0, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def elementary_checks(seed: int = 0) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    w = rng.standard_normal((4, 5))
    pos = rng.uniform(0.5, 2.0, (3, 4))
    kern = rng.standard_normal((2, 3, 3, 3))
    img = rng.standard_normal((2, 3, 7, 5))
    bw = rng.standard_normal((2, 4, 3))
    up_same = rng.standard_normal((2, 2, 7, 5))
    up_stride = rng.standard_normal((2, 2, 4, 3))
    up_valid = rng.standard_normal((2, 2, 5, 3))
    bt = T.Tensor(b)
    cases = {
        "add": (lambda x: (x + bt).sum(), a),
        "sub": (lambda x: (bt - x).sum(), a),
        "mul": (lambda x: (x * bt).sum(), a),
        "div": (lambda x: (bt / x).sum(), pos),
        "exp": (lambda x: T.exp(x).sum(), a),
        "log": (lambda x: T.log(x).sum(), pos),
        "tanh": (lambda x: T.tanh(x).sum(), a),
        "sqrt": (lambda x: T.sqrt(x).sum(), pos),
        "elu": (lambda x: (T.elu(x) * bt).sum(), _away_from_zero(rng, (3, 4))),
        "maximum": (lambda x: (T.maximum(x, 0.05) * bt).sum(), _away_from_zero(rng, (3, 4))),
        "clip": (lambda x: (T.clip(x, -0.5, 0.5) * bt).sum(), np.array([[-0.9, -0.3, 0.1, 0.7], [0.2, -0.8, 0.35, -0.1], [1.2, 0.4, -0.45, -0.6]])),
        "matmul": (lambda x: T.square(T.matmul(x, T.Tensor(w))).sum(), a),
        "batched matmul": (lambda x: T.square(T.matmul(x, T.Tensor(bw))).sum(), rng.standard_normal((2, 3, 4))),
        "sum axis": (lambda x: (x.sum(axis=1) * T.Tensor(np.arange(3.0))).sum(), a),
        "mean keepdims": (lambda x: (x.mean(axis=0, keepdims=True) * T.Tensor(np.arange(4.0))).sum(), a),
        "reshape/transpose": (lambda x: (x.reshape(4, 3).transpose(1, 0) * bt).sum(), a),
        "slice": (lambda x: (x[1:, ::2] * T.Tensor(b[1:, ::2])).sum(), a),
        "concat": (lambda x: (T.concat([x, x * 2.0], axis=-1) * T.Tensor(np.arange(24.0).reshape(3, 8))).sum(), a),
        "softmax": (lambda x: (T.softmax(x, axis=-1) * bt).sum(), a),
        "layernorm": (lambda x: (LayerNorm(4)(x) * bt).sum(), a),
        "conv2d same": (lambda x: (T.conv2d(x, T.Tensor(kern), padding=1) * T.Tensor(up_same)).sum(), img),
        "conv2d kernels": (lambda k: (T.conv2d(T.Tensor(img), k, padding=1) * T.Tensor(up_same)).sum(), kern),
        "conv2d stride 2": (lambda x: (T.conv2d(x, T.Tensor(kern), padding=1, stride=2) * T.Tensor(up_stride)).sum(), img),
        "conv2d valid": (lambda x: (T.conv2d(x, T.Tensor(kern)) * T.Tensor(up_valid)).sum(), img),
    }
    out = []
    with T.precision(np.float64):
        for name, (f, x) in cases.items():
            out.append((name, grad_check(f, x), ELEMENTARY_TOL))
    return out


def tiny_policy(encoder: str = "primary", seed: int = 0) -> ActorCritic:
    cfg = EncoderConfig(map_length=4, map_width=3, dim=8, heads=2, query_len=1, proprio_dim=6, cnn_hidden=2, kernel=3)
    if encoder == "cnn-downsample":
        cfg = EncoderConfig(map_length=11, map_width=11, dim=8, heads=2, query_len=1, proprio_dim=6, cnn_hidden=2, kernel=3)
    rng = np.random.default_rng(seed)
    with T.precision(np.float64):
        enc = build_encoder(encoder, cfg, rng)
        policy = ActorCritic(enc, 3, rng, hidden=(8,), init_std=0.7)
    return policy.astype(np.float64)


def tiny_minibatch(policy: ActorCritic, n: int = 5, seed: int = 1) -> Minibatch:
    rng = np.random.default_rng(seed)
    cfg = policy.encoder.config
    obs = ObservationBundle(
        rng.standard_normal((n, cfg.proprio_dim)), rng.standard_normal((n, cfg.map_length, cfg.map_width, 3)) * 0.3, True
    )
    actions = rng.standard_normal((n, policy.action_dim))
    with T.no_grad():
        mean, _, _ = policy.forward(obs, obs)
        logp = gaussian_log_prob(mean, policy.log_std, actions).data
    # old log-probs offset so ratios sit inside and outside the clip band, away from its edges
    offsets = np.array([0.05, -0.4, 0.4, 0.1, -0.05] * (n // 5 + 1))[:n]
    return Minibatch(
        obs, obs, actions, mean.data.copy(), policy.log_std.data.copy(), logp + offsets,
        rng.standard_normal(n), rng.standard_normal(n) * 2.0,
    )


def composed_check(encoder: str = "primary", seed: int = 0, max_entries: int | None = 12) -> float:
    """Worst relative error of the PPO loss gradient w.r.t. every parameter tensor."""
    policy = tiny_policy(encoder, seed)
    batch = tiny_minibatch(policy)
    cfg = PPOConfig()
    with T.precision(np.float64):
        report = grad_check_parameters(
            lambda: ppo_loss(policy, batch, cfg)[0], dict(policy.named_parameters()), eps=1e-6, max_entries=max_entries, seed=seed
        )
    return max(report.values())


def run_verification(seed: int = 0) -> list[tuple[str, float, float]]:
    results = elementary_checks(seed)
    for kind in ENCODER_KINDS:
        results.append((f"{kind} encoder + heads + PPO surrogate", composed_check(kind, seed), COMPOSED_TOL))
    return results
