"""Episode replay with n-step windows recomputed under the caller's discount."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..core import ConfigError


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    done: bool
    step: int  # 1-based, in [1, T-1]


def episode_transitions(observations, actions, rewards) -> list:
    obs = np.asarray(observations, dtype=np.float64)
    n = obs.shape[0] - 1
    return [
        Transition(obs[t], np.asarray(actions[t]), float(rewards[t]), obs[t + 1], t == n - 1, t + 1)
        for t in range(n)
    ]


class Batch(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray  # discounted n-step reward sum
    next_obs: np.ndarray  # observation the target bootstraps from
    discount: np.ndarray  # gamma**m, zero when the window reached the terminal step


class ReplayBuffer:
    """FIFO store of whole fixed-length episodes.

    Capacity is counted in transitions and rounded down to whole episodes
    (at least one). Rewards are stored raw; discounting happens at sample
    time with whatever ``gamma`` the caller passes.
    """

    def __init__(self, capacity: int, horizon: int, obs_dim: int, act_dim: int):
        if horizon < 2:
            raise ConfigError("episodes need at least two observations")
        self.horizon = horizon
        self.steps = horizon - 1
        self.max_episodes = max(1, capacity // self.steps)
        self.obs = np.zeros((self.max_episodes, horizon, obs_dim))
        self.act = np.zeros((self.max_episodes, self.steps, act_dim))
        self.rew = np.zeros((self.max_episodes, self.steps))
        self.ids = np.full(self.max_episodes, -1, dtype=np.int64)
        self.n_episodes = 0
        self._next = 0
        self._inserted = 0

    def __len__(self) -> int:
        return self.n_episodes * self.steps

    @property
    def capacity(self) -> int:
        return self.max_episodes * self.steps

    def add_episode(self, observations, actions, rewards) -> int:
        """Store one episode; returns its insertion id (0, 1, 2, ...)."""
        observations = np.asarray(observations, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        rewards = np.asarray(rewards, dtype=np.float64)
        if observations.shape != self.obs.shape[1:] or actions.shape != self.act.shape[1:] \
                or rewards.shape != (self.steps,):
            raise ConfigError("episode shapes do not match the buffer layout")
        slot = self._next
        self.obs[slot] = observations
        self.act[slot] = actions
        self.rew[slot] = rewards
        self.ids[slot] = self._inserted
        self._inserted += 1
        self._next = (slot + 1) % self.max_episodes
        self.n_episodes = min(self.n_episodes + 1, self.max_episodes)
        return int(self.ids[slot])

    def episode_ids(self) -> set:
        return {int(i) for i in self.ids[: self.n_episodes]}

    def sample(self, batch_size: int, n_step: int, gamma: float, rng: np.random.Generator) -> Batch:
        ep = rng.integers(0, self.n_episodes, size=batch_size)
        t = rng.integers(0, self.steps, size=batch_size)
        return self.window(ep, t, n_step, gamma)

    def window(self, ep, t, n_step: int, gamma: float) -> Batch:
        """n-step windows starting at transition ``t`` (0-based) of slot ``ep``, truncated at the terminal step."""
        ep = np.asarray(ep)
        t = np.asarray(t)
        m = np.minimum(n_step, self.steps - t)
        offsets = np.arange(n_step)
        idx = np.minimum(t[:, None] + offsets, self.steps - 1)
        weights = np.where(offsets < m[:, None], gamma ** offsets, 0.0)
        reward = np.sum(self.rew[ep[:, None], idx] * weights, axis=1)
        end = t + m
        discount = np.where(end == self.steps, 0.0, gamma ** m)
        return Batch(self.obs[ep, t], self.act[ep, t], reward, self.obs[ep, end], discount)
