"""TD3 learner whose discount is supplied per update."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..core import ConfigError
from .mlp import Adam, Mlp, soft_update
from .replay import Batch, ReplayBuffer


@dataclass(frozen=True)
class AgentConfig:
    hidden_dim: int = 64
    learning_rate: float = 1e-4
    batch_size: int = 128
    n_step: int = 3
    soft_update_rate: float = 0.005
    policy_noise: float = 0.1
    noise_clip: float = 0.3
    policy_delay: int = 1

    @classmethod
    def from_config(cls, cfg) -> "AgentConfig":
        return cls(**{k: getattr(cfg, k) for k in cls.__dataclass_fields__})


class Td3Agent:
    """Actor, twin critics and their targets; actions live in ``[-1, 1]^act_dim``."""

    dtype = np.float32

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig = AgentConfig(),
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.act_dim, self.config = obs_dim, act_dim, config
        h = config.hidden_dim
        dt = self.dtype
        self.actor = Mlp([obs_dim, h, h, act_dim], "tanh", rng, dt)
        self.critic1 = Mlp([obs_dim + act_dim, h, h, 1], "identity", rng, dt)
        self.critic2 = Mlp([obs_dim + act_dim, h, h, 1], "identity", rng, dt)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        lr = config.learning_rate
        self.actor_opt = Adam(self.actor.n_params, lr, dtype=dt)
        self.critic1_opt = Adam(self.critic1.n_params, lr, dtype=dt)
        self.critic2_opt = Adam(self.critic2.n_params, lr, dtype=dt)
        self.updates = 0

    # -- acting -------------------------------------------------------------

    def policy(self, obs) -> np.ndarray:
        return self.actor.forward(obs).astype(np.float64)

    def noisy_action(self, obs, noise_sd: float, rng: np.random.Generator | None = None) -> np.ndarray:
        """Deterministic action plus Gaussian exploration noise, before clipping."""
        action = self.actor.forward(obs).astype(np.float64)
        if noise_sd > 0.0:
            if rng is None:
                raise ConfigError("exploration noise needs a random stream")
            action = action + rng.normal(0.0, noise_sd, size=action.shape)
        return action

    def act(self, obs, noise_sd: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.clip(self.noisy_action(obs, noise_sd, rng), -1.0, 1.0)

    # -- learning -----------------------------------------------------------

    def targets(self, batch: Batch, rng: np.random.Generator) -> np.ndarray:
        c = self.config
        noise = np.clip(rng.normal(0.0, c.policy_noise, size=(len(batch.reward), self.act_dim)),
                        -c.noise_clip, c.noise_clip)
        next_action = np.clip(self.actor_target.forward(batch.next_obs) + noise, -1.0, 1.0)
        x = np.concatenate([batch.next_obs, next_action], axis=1)
        q_next = np.minimum(self.critic1_target.forward(x), self.critic2_target.forward(x))[:, 0]
        return batch.reward + batch.discount * q_next

    def update(self, buffer: ReplayBuffer, gamma: float, rng: np.random.Generator) -> dict:
        """One TD3 step with n-step targets discounted by ``gamma``."""
        c = self.config
        if len(buffer) == 0:
            return {"skipped": True, "critic_loss": float("nan"), "actor_loss": float("nan"),
                    "target_mean": float("nan")}
        batch = buffer.sample(c.batch_size, c.n_step, gamma, rng)
        return self.update_on_batch(batch, rng)

    def update_on_batch(self, batch: Batch, rng: np.random.Generator) -> dict:
        c = self.config
        y = self.targets(batch, rng)
        x = np.concatenate([batch.obs, batch.action], axis=1)
        B = len(y)
        critic_loss = 0.0
        for net, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, acts = net.forward(x, keep=True)
            err = q[:, 0] - y
            critic_loss += float(err @ err) / B
            grad, _ = net.backward(acts, (2.0 / B) * err[:, None])
            opt.step(net.params, grad)
        self.updates += 1
        actor_loss = float("nan")
        if self.updates % c.policy_delay == 0:
            a, actor_acts = self.actor.forward(batch.obs, keep=True)
            q, critic_acts = self.critic1.forward(np.concatenate([batch.obs, a], axis=1), keep=True)
            actor_loss = -float(q.mean())
            _, dx = self.critic1.backward(critic_acts, np.full((B, 1), -1.0 / B), param_grads=False)
            grad, _ = self.actor.backward(actor_acts, dx[:, self.obs_dim:])
            self.actor_opt.step(self.actor.params, grad)
            rate = c.soft_update_rate
            soft_update(self.actor_target, self.actor, rate)
            soft_update(self.critic1_target, self.critic1, rate)
            soft_update(self.critic2_target, self.critic2, rate)
        return {"skipped": False, "critic_loss": critic_loss, "actor_loss": actor_loss,
                "target_mean": float(y.mean())}

    # -- checkpoints --------------------------------------------------------

    _NETS = ("actor", "critic1", "critic2", "actor_target", "critic1_target", "critic2_target")
    _OPTS = ("actor_opt", "critic1_opt", "critic2_opt")

    def state_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "config": asdict(self.config),
            "updates": self.updates,
            "networks": {name: getattr(self, name).params.tolist() for name in self._NETS},
            "optimizers": {name: getattr(self, name).state_dict() for name in self._OPTS},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "Td3Agent":
        agent = cls(state["obs_dim"], state["act_dim"], AgentConfig(**state["config"]))
        for name in cls._NETS:
            getattr(agent, name).set_params(state["networks"][name])
        for name in cls._OPTS:
            getattr(agent, name).load_state_dict(state["optimizers"][name])
        agent.updates = int(state["updates"])
        return agent

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.state_dict()))

    @classmethod
    def load(cls, path) -> "Td3Agent":
        return cls.from_state_dict(json.loads(Path(path).read_text()))
