"""Rollout storage, the clipped PPO objective and the adaptive learning rate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as T
from ..errors import ConfigurationError
from ..nn import Adam, clip_grad_norm
from ..policy import ActorCritic, ObservationBundle, gaussian_log_prob
from ..tensor import Tensor
from .gae import compute_gae


@dataclass
class PPOConfig:
    steps_per_env: int = 24
    num_minibatches: int = 3
    epochs: int = 5
    clip: float = 0.2
    entropy_coef: float = 0.005  # 0.002 in the fine-tuning stage
    gamma: float = 0.99
    lam: float = 0.95
    desired_kl: float = 0.01
    learning_rate: float = 1e-3
    adaptive_lr: bool = True
    lr_factor: float = 1.5
    lr_min: float = 1e-6
    lr_max: float = 1e-2
    value_coef: float = 1.0
    max_grad_norm: float = 1.0

    def __post_init__(self):
        checks = [
            ("steps_per_env", self.steps_per_env >= 1),
            ("num_minibatches", self.num_minibatches >= 1),
            ("epochs", self.epochs >= 1),
            ("clip", 0.0 < self.clip < 1.0),
            ("entropy_coef", 0.0 <= self.entropy_coef <= 1.0),
            ("gamma", 0.0 <= self.gamma <= 1.0),
            ("lam", 0.0 <= self.lam <= 1.0),
            ("desired_kl", self.desired_kl > 0.0),
            ("learning_rate", 0.0 <= self.learning_rate <= 1.0),
            ("lr_factor", self.lr_factor > 1.0),
            ("lr_min", 0.0 < self.lr_min <= self.lr_max),
            ("value_coef", self.value_coef >= 0.0),
            ("max_grad_norm", self.max_grad_norm > 0.0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigurationError(f"ppo.{name} out of range: {getattr(self, name)!r}")

    def batch_size(self, num_envs: int) -> int:
        return self.steps_per_env * num_envs

    def minibatch_size(self, num_envs: int) -> int:
        batch = self.batch_size(num_envs)
        if batch % self.num_minibatches:
            raise ConfigurationError(
                f"batch {batch} ({self.steps_per_env} steps x {num_envs} envs) is not divisible by "
                f"{self.num_minibatches} minibatches"
            )
        return batch // self.num_minibatches


def adapt_lr(lr: float, measured_kl: float, desired_kl: float, factor: float = 1.5, lo: float = 1e-6, hi: float = 1e-2) -> float:
    """Shrink the step when the policy moved too far, grow it when it barely moved."""
    if measured_kl > 2.0 * desired_kl:
        lr = lr / factor
    elif measured_kl < desired_kl / 2.0:
        lr = lr * factor
    return float(min(max(lr, lo), hi))


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def gaussian_kl(mu_old, log_std_old, mu_new, log_std_new) -> np.ndarray:
    """KL(old || new) for diagonal Gaussians, one value per row."""
    mu_old, mu_new = np.asarray(mu_old, np.float64), np.asarray(mu_new, np.float64)
    ls_old, ls_new = np.asarray(log_std_old, np.float64), np.asarray(log_std_new, np.float64)
    var_old, var_new = np.exp(2 * ls_old), np.exp(2 * ls_new)
    per_dim = ls_new - ls_old + (var_old + (mu_old - mu_new) ** 2) / (2.0 * var_new) - 0.5
    return per_dim.sum(axis=-1)


class RolloutBuffer:
    """Fixed ``steps_per_env x num_envs`` storage, filled one step at a time.

    When the actor sees the privileged observation (stage 1) only one copy of
    the observations is stored and both heads share it.
    """

    def __init__(self, steps: int, num_envs: int, proprio_dim: int, scan_shape: tuple, action_dim: int, shared_obs: bool):
        self.steps, self.num_envs, self.shared_obs = steps, num_envs, shared_obs
        f32 = np.float32
        self.actor_proprio = np.zeros((steps, num_envs, proprio_dim), f32)
        self.actor_scan = np.zeros((steps, num_envs, *scan_shape), f32)
        if shared_obs:
            self.critic_proprio, self.critic_scan = self.actor_proprio, self.actor_scan
        else:
            self.critic_proprio = np.zeros((steps, num_envs, proprio_dim), f32)
            self.critic_scan = np.zeros((steps, num_envs, *scan_shape), f32)
        self.actions = np.zeros((steps, num_envs, action_dim), f32)
        self.means = np.zeros((steps, num_envs, action_dim), f32)
        self.log_probs = np.zeros((steps, num_envs))
        self.values = np.zeros((steps, num_envs))
        self.rewards = np.zeros((steps, num_envs))
        self.dones = np.zeros((steps, num_envs))
        self.log_std = np.zeros(action_dim)
        self.bootstrap = np.zeros(num_envs)
        self.advantages = None
        self.returns = None
        self.count = 0

    @property
    def full(self) -> bool:
        return self.count == self.steps

    def add(self, actor_obs: ObservationBundle, critic_obs: ObservationBundle, action, mean, log_prob, value, reward, done) -> None:
        if self.full:
            raise RuntimeError("rollout buffer is full")
        t = self.count
        self.actor_proprio[t] = actor_obs.proprio
        self.actor_scan[t] = actor_obs.scan
        if not self.shared_obs:
            self.critic_proprio[t] = critic_obs.proprio
            self.critic_scan[t] = critic_obs.scan
        self.actions[t] = action
        self.means[t] = mean
        self.log_probs[t] = log_prob
        self.values[t] = value
        self.rewards[t] = reward
        self.dones[t] = done
        self.count += 1

    def finish(self, bootstrap, gamma: float, lam: float) -> None:
        if not self.full:
            raise RuntimeError(f"rollout buffer holds {self.count}/{self.steps} steps")
        self.bootstrap = np.asarray(bootstrap, dtype=np.float64)
        self.advantages, self.returns = compute_gae(self.rewards, self.values, self.dones, self.bootstrap, gamma, lam)

    def reset(self) -> None:
        self.count = 0
        self.advantages = self.returns = None

    def flat(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        return arr.reshape(self.steps * self.num_envs, *arr.shape[2:])

    def batch(self, index: np.ndarray, advantages: np.ndarray) -> "Minibatch":
        actor = ObservationBundle(self.flat("actor_proprio")[index], self.flat("actor_scan")[index], self.shared_obs)
        critic = actor if self.shared_obs else ObservationBundle(
            self.flat("critic_proprio")[index], self.flat("critic_scan")[index], True
        )
        return Minibatch(
            actor, critic, self.flat("actions")[index], self.flat("means")[index], self.log_std,
            self.flat("log_probs")[index], advantages[index], self.flat("returns")[index],
        )


@dataclass
class Minibatch:
    actor_obs: ObservationBundle
    critic_obs: ObservationBundle
    actions: np.ndarray
    old_means: np.ndarray
    old_log_std: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


@dataclass
class LossInfo:
    surrogate: float
    value_loss: float
    entropy: float
    clip_fraction: float
    means: np.ndarray


def ppo_loss(policy: ActorCritic, batch: Minibatch, config: PPOConfig) -> tuple[Tensor, LossInfo]:
    """Clipped surrogate plus value regression minus the entropy bonus."""
    mean, value, _ = policy.forward(batch.actor_obs, batch.critic_obs)
    dtype = mean.data.dtype
    log_prob = gaussian_log_prob(mean, policy.log_std, batch.actions.astype(dtype))
    ratio = T.exp(log_prob - T.as_tensor(batch.old_log_probs.astype(dtype)))
    adv = T.as_tensor(batch.advantages.astype(dtype))
    unclipped = ratio * adv
    clipped = T.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * adv
    surrogate = -T.minimum(unclipped, clipped).mean()
    targets = policy.value_norm.normalize(batch.returns).astype(dtype)
    err = value - T.as_tensor(targets)
    value_loss = (err * err).mean()
    entropy = policy.entropy()
    loss = surrogate + config.value_coef * value_loss - config.entropy_coef * entropy
    clip_fraction = float(np.mean(np.abs(ratio.data - 1.0) > config.clip))
    info = LossInfo(float(surrogate.data), float(value_loss.data), float(entropy.data), clip_fraction, mean.data)
    return loss, info


@dataclass
class UpdateStats:
    kl: float
    clip_fraction: float
    surrogate: float
    value_loss: float
    entropy: float
    learning_rate: float
    aborted: bool = False
    message: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def ppo_update(
    buffer: RolloutBuffer, policy: ActorCritic, optimizer: Adam, config: PPOConfig, rng: np.random.Generator
) -> UpdateStats:
    """``epochs`` passes over shuffled minibatches of a full, finished buffer.

    Advantages are normalised over the whole batch and the return
    normaliser absorbs the batch returns before the first step. The learning rate is
    adapted after every minibatch from the KL between the rollout policy and
    the current one; a learning rate of exactly zero is left alone so that a
    frozen update is a no-op. A non-finite loss aborts the update before the
    offending step is applied.
    """
    if buffer.advantages is None:
        raise RuntimeError("call buffer.finish() before ppo_update")
    n = buffer.steps * buffer.num_envs
    size = config.minibatch_size(buffer.num_envs)
    advantages = normalize_advantages(buffer.advantages.reshape(-1))
    policy.value_norm.update(buffer.returns)
    params = policy.parameters()
    kls, clips, surrs, vls, ents = [], [], [], [], []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for k in range(config.num_minibatches):
            batch = buffer.batch(order[k * size:(k + 1) * size], advantages)
            policy.zero_grad()
            loss, info = ppo_loss(policy, batch, config)
            if not np.isfinite(loss.data).all():
                policy.zero_grad()
                return UpdateStats(
                    float(np.mean(kls)) if kls else float("nan"), float(np.mean(clips)) if clips else 0.0,
                    float("nan"), float("nan"), float("nan"), optimizer.lr, True, "non-finite loss",
                )
            kl = float(np.mean(gaussian_kl(batch.old_means, batch.old_log_std, info.means, policy.log_std.data)))
            if config.adaptive_lr and optimizer.lr > 0.0:
                optimizer.lr = adapt_lr(optimizer.lr, kl, config.desired_kl, config.lr_factor, config.lr_min, config.lr_max)
            loss.backward()
            clip_grad_norm(params, config.max_grad_norm)
            optimizer.step()
            kls.append(kl)
            clips.append(info.clip_fraction)
            surrs.append(info.surrogate)
            vls.append(info.value_loss)
            ents.append(info.entropy)
    policy.zero_grad()
    return UpdateStats(
        float(np.mean(kls)), float(np.mean(clips)), float(np.mean(surrs)), float(np.mean(vls)),
        float(np.mean(ents)), float(optimizer.lr),
    )
