"""Actor and critic heads sharing one map encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoders import EncoderOutput
from .nn import MLP, Module, parameter
from .tensor import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class ObservationBundle:
    """Proprioception ``(N, d_obs)`` and map scan ``(N, L, W, 3)``.

    ``privileged`` marks the noise- and drift-free variant used by the critic.
    """

    proprio: np.ndarray
    scan: np.ndarray
    privileged: bool

    def __len__(self) -> int:
        return len(self.proprio)

    def take(self, index) -> "ObservationBundle":
        return ObservationBundle(self.proprio[index], self.scan[index], self.privileged)


@dataclass
class ActResult:
    action: np.ndarray
    log_prob: np.ndarray
    mean: np.ndarray
    attention: np.ndarray | None


def gaussian_log_prob(mean: Tensor, log_std: Tensor, actions) -> Tensor:
    """Diagonal Gaussian log density, summed over the last axis."""
    z = (T.as_tensor(actions) - mean) / T.exp(log_std)
    per_dim = z * z * -0.5 - log_std - 0.5 * LOG_2PI
    return per_dim.sum(axis=-1)


def gaussian_entropy(log_std: Tensor) -> Tensor:
    return log_std.sum() + 0.5 * log_std.shape[-1] * (1.0 + LOG_2PI)


class ValueNormalizer:
    """Running mean and variance of return targets (parallel Welford merge).

    The critic head regresses normalised returns; :meth:`ActorCritic.evaluate`
    maps its output back to reward units.
    """

    def __init__(self):
        self.mean = 0.0
        self.var = 1.0
        self.count = 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var)) + 1e-8

    def update(self, values) -> None:
        x = np.asarray(values, dtype=np.float64).reshape(-1)
        if x.size == 0:
            return
        b_mean, b_var, b_count = float(x.mean()), float(x.var()), float(x.size)
        if self.count == 0:
            self.mean, self.var, self.count = b_mean, b_var, b_count
            return
        total = self.count + b_count
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * b_count + delta * delta * self.count * b_count / total
        self.mean, self.var, self.count = self.mean + delta * b_count / total, m2 / total, total

    def normalize(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"mean": np.array(self.mean), "var": np.array(self.var), "count": np.array(self.count)}

    def load_state_dict(self, state: dict) -> None:
        self.mean, self.var, self.count = (float(np.asarray(state[k]).reshape(-1)[0]) for k in ("mean", "var", "count"))


class ActorCritic(Module):
    """Gaussian actor and value critic on top of a shared encoder.

    With ``concat_proprio`` the heads see ``[encoding, proprio_embedding]``;
    otherwise only the encoding.
    """

    def __init__(
        self,
        encoder: Module,
        action_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (256, 256),
        concat_proprio: bool = True,
        init_std: float = 1.0,
    ):
        dim = encoder.config.dim
        feat = 2 * dim if concat_proprio else dim
        self.encoder = encoder
        self.concat_proprio = concat_proprio
        self.action_dim = action_dim
        self.actor = MLP([feat, *hidden, action_dim], rng, out_gain=0.01)
        self.critic = MLP([feat, *hidden, 1], rng, out_gain=1.0)
        self.log_std = parameter(np.full(action_dim, np.log(init_std)))
        self.value_norm = ValueNormalizer()
        self._hooks = []

    def state_dict(self) -> dict[str, np.ndarray]:
        state = super().state_dict()
        state.update({f"value_norm.{k}": v for k, v in self.value_norm.state_dict().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        norm = {k.split(".", 1)[1]: v for k, v in state.items() if k.startswith("value_norm.")}
        super().load_state_dict({k: v for k, v in state.items() if not k.startswith("value_norm.")})
        if norm:
            self.value_norm.load_state_dict(norm)

    def add_hook(self, fn) -> None:
        """``fn(role, obs)`` is called with role "actor" or "critic" before every head evaluation."""
        self._hooks.append(fn)

    def _notify(self, role: str, obs: ObservationBundle) -> None:
        for fn in self._hooks:
            fn(role, obs)

    def features(self, obs: ObservationBundle) -> tuple[Tensor, EncoderOutput]:
        out = self.encoder(obs.scan, obs.proprio)
        if self.concat_proprio:
            return T.concat([out.encoding, out.proprio_embedding], axis=-1), out
        return out.encoding, out

    def action_mean(self, obs: ObservationBundle) -> tuple[Tensor, EncoderOutput]:
        feats, out = self.features(obs)
        return self.actor(feats), out

    def value(self, obs: ObservationBundle) -> Tensor:
        """Critic head output in normalised return units."""
        feats, _ = self.features(obs)
        return self.critic(feats).reshape(-1)

    def forward(self, actor_obs: ObservationBundle, critic_obs: ObservationBundle) -> tuple[Tensor, Tensor, EncoderOutput]:
        """Action mean and (normalised) value in one pass; the encoder runs once when both bundles are the same object."""
        if not critic_obs.privileged:
            raise ValueError("the critic only consumes privileged observations")
        self._notify("actor", actor_obs)
        self._notify("critic", critic_obs)
        feats, out = self.features(actor_obs)
        critic_feats = feats if critic_obs is actor_obs else self.features(critic_obs)[0]
        return self.actor(feats), self.critic(critic_feats).reshape(-1), out

    def act(self, obs: ObservationBundle, stochastic: bool = True, rng: np.random.Generator | None = None) -> ActResult:
        self._notify("actor", obs)
        with T.no_grad():
            mean, out = self.action_mean(obs)
        mu = mean.data
        std = np.exp(self.log_std.data)
        if stochastic:
            if rng is None:
                raise ValueError("stochastic act() needs an rng")
            action = mu + std * rng.standard_normal(mu.shape).astype(mu.dtype)
        else:
            action = mu.copy()
        with T.no_grad():
            logp = gaussian_log_prob(mean, self.log_std, action).data
        attention = out.attention
        return ActResult(action, logp, mu, attention)

    def evaluate(self, obs_privileged: ObservationBundle) -> np.ndarray:
        if not obs_privileged.privileged:
            raise ValueError("the critic only consumes privileged observations")
        self._notify("critic", obs_privileged)
        with T.no_grad():
            return self.value_norm.denormalize(self.value(obs_privileged).data)

    def act_and_value(
        self, actor_obs: ObservationBundle, critic_obs: ObservationBundle, rng: np.random.Generator
    ) -> tuple[ActResult, np.ndarray]:
        """Stochastic action plus critic value, sharing the encoder pass when possible."""
        with T.no_grad():
            mean, value, out = self.forward(actor_obs, critic_obs)
            mu = mean.data
            action = mu + np.exp(self.log_std.data) * rng.standard_normal(mu.shape).astype(mu.dtype)
            logp = gaussian_log_prob(mean, self.log_std, action).data
        return ActResult(action, logp, mu, out.attention), self.value_norm.denormalize(value.data)

    def entropy(self) -> Tensor:
        return gaussian_entropy(self.log_std)
