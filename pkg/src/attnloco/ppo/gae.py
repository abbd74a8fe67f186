"""Generalized advantage estimation over ``(T, N)`` rollouts."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def compute_gae(rewards, values, dones, bootstrap, gamma: float = 0.99, lam: float = 0.95):
    """Advantages and returns for ``T`` steps of ``N`` environments.

    ``rewards``, ``values`` and ``dones`` are ``(T, N)`` (or ``(T,)``);
    ``bootstrap`` is the value after the last step, ``(N,)``. A done at step
    ``t`` cuts both the bootstrap and the advantage carry. The time recursion
    is a single backward sweep vectorised across environments.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    bootstrap = np.asarray(bootstrap, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise DimensionError(f"rewards {rewards.shape}, values {values.shape}, dones {dones.shape} must align")
    if rewards.ndim == 0 or bootstrap.shape != rewards.shape[1:]:
        raise DimensionError(f"bootstrap shape {bootstrap.shape} does not match rollout {rewards.shape}")
    not_done = 1.0 - dones
    next_values = np.concatenate([values[1:], bootstrap[None]], axis=0)
    deltas = rewards + gamma * next_values * not_done - values
    decay = gamma * lam * not_done
    adv = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        carry = deltas[t] + decay[t] * carry
        adv[t] = carry
    return adv, adv + values
