"""Point-mass tasks whose later stages only make sense after an earlier one succeeds.

``CarryEnv``: reach an object, grasp it, carry it to a goal.
``TwoStageSwitchEnv``: press a switch, then go to a door.

Both share the same damped point-mass kinematics on ``[-1, 1]^2`` and a
3-channel action ``(ax, ay, grip)`` in ``[-1, 1]^3``. Observations are raw
state vectors that end with the normalized time ``t / T``. Success is
reported only through :class:`EvalInfo`; the training loop sees the
environment through :class:`ObservationOnly`, which drops it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, DemoSet, Trajectory


class UsageError(RuntimeError):
    """Environment called out of order (e.g. stepping a finished episode)."""


@dataclass(frozen=True)
class EvalInfo:
    """Evaluation-only metadata returned by :meth:`step`."""

    success: bool
    held: bool


@dataclass(frozen=True)
class Physics:
    max_speed: float = 0.08
    carry_speed: float = 0.05
    damping: float = 0.5
    grasp_radius: float = 0.06
    grasp_speed: float = 0.03
    goal_radius: float = 0.1
    grip_threshold: float = 0.5
    release_threshold: float = -0.5


def _clip_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.hypot(v[0], v[1]))
    return v * (limit / n) if n > limit else v


class PointMassTask:
    """Shared kinematics: ``v <- damping * v + (1 - damping) * max_speed * a``, speed-limited."""

    act_dim = 3
    obs_dim = 10

    def __init__(self, horizon: int = 64, jitter: float = 0.01, physics: Physics = Physics()):
        if horizon < 2:
            raise ConfigError("horizon must be at least 2")
        if jitter < 0:
            raise ConfigError("jitter must be non-negative")
        self.horizon = horizon
        self.jitter = float(jitter)
        self.physics = physics
        self.t = None
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)

    @property
    def done(self) -> bool:
        return self.t is not None and self.t >= self.horizon - 1

    def _move(self, action, speed_limit: float) -> None:
        ph = self.physics
        a = np.clip(np.asarray(action[:2], dtype=np.float64), -1.0, 1.0)
        self.vel = _clip_norm(ph.damping * self.vel + (1.0 - ph.damping) * ph.max_speed * a, speed_limit)
        self.pos = np.clip(self.pos + self.vel, -1.0, 1.0)

    def _begin_step(self, action) -> np.ndarray:
        if self.t is None:
            raise UsageError("call reset() before step()")
        if self.done:
            raise UsageError("episode finished; call reset()")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.act_dim,):
            raise ConfigError(f"action must have shape ({self.act_dim},), got {action.shape}")
        self.t += 1
        return np.clip(action, -1.0, 1.0)

    def _jittered(self, point, rng) -> np.ndarray:
        point = np.asarray(point, dtype=np.float64)
        if self.jitter == 0.0:
            return point.copy()
        return np.clip(point + rng.normal(0.0, self.jitter, size=2), -0.95, 0.95)

    def _vel_obs(self) -> np.ndarray:
        return self.vel / self.physics.max_speed

    def _time(self) -> float:
        return self.t / self.horizon


@dataclass(frozen=True)
class CarryLayout:
    agent: tuple = (-0.6, -0.6)
    obj: tuple = (0.3, -0.6)
    goal: tuple = (0.3, 0.6)


class CarryEnv(PointMassTask):
    """Grasp-then-carry.

    The grasp closes when the agent is within ``grasp_radius`` of the object,
    moving slower than ``grasp_speed``, with ``grip > grip_threshold``. While
    held the object follows the agent and the speed limit drops to
    ``carry_speed``; the object is dropped as soon as ``grip`` falls below
    ``release_threshold``. The object never moves unless held.

    Observation: agent position, agent velocity (in units of ``max_speed``), object position, goal
    position, held flag, ``t / T``.
    """

    def __init__(self, horizon: int = 64, jitter: float = 0.01, physics: Physics = Physics(),
                 layout: CarryLayout = CarryLayout()):
        super().__init__(horizon, jitter, physics)
        self.layout = layout
        self.goal = np.asarray(layout.goal, dtype=np.float64)
        self.obj = np.zeros(2)
        self.held = False
        self.ever_held = False

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.pos = self._jittered(self.layout.agent, rng)
        self.obj = self._jittered(self.layout.obj, rng)
        self.vel = np.zeros(2)
        self.held = False
        self.ever_held = False
        self.t = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.concatenate([self.pos, self._vel_obs(), self.obj, self.goal, [float(self.held), self._time()]])

    def success(self) -> bool:
        return bool(np.hypot(*(self.obj - self.goal)) < self.physics.goal_radius)

    def step(self, action):
        action = self._begin_step(action)
        ph = self.physics
        grip = action[2]
        if self.held and grip < ph.release_threshold:
            self.held = False
        self._move(action, ph.carry_speed if self.held else ph.max_speed)
        if self.held:
            self.obj = self.pos.copy()
        elif (grip > ph.grip_threshold and np.hypot(*(self.pos - self.obj)) < ph.grasp_radius
              and np.hypot(*self.vel) < ph.grasp_speed):
            self.held = True
            self.ever_held = True
            self.obj = self.pos.copy()
        done = self.done
        info = EvalInfo(success=done and self.success(), held=self.held)
        return self.observe(), done, info

    @staticmethod
    def expert_action(obs: np.ndarray, physics: Physics = Physics()) -> np.ndarray:
        pos, vel, obj, goal, held = obs[0:2], obs[2:4] * physics.max_speed, obs[4:6], obs[6:8], obs[8] > 0.5
        if held:
            return np.append(_steer(pos, vel, goal, physics, physics.carry_speed), 1.0)
        near = np.hypot(*(pos - obj)) < 0.5 * physics.grasp_radius
        slow = np.hypot(*vel) < 0.5 * physics.grasp_speed
        grip = 1.0 if near and slow else -1.0
        return np.append(_steer(pos, vel, obj, physics, physics.max_speed), grip)


@dataclass(frozen=True)
class SwitchLayout:
    agent: tuple = (-0.6, 0.0)
    switch: tuple = (0.0, -0.6)
    door: tuple = (0.6, 0.3)


class TwoStageSwitchEnv(PointMassTask):
    """Press a switch (``grip > grip_threshold`` within ``grasp_radius``), then reach the door.

    Success requires ending within ``goal_radius`` of the door with the
    switch on. Observation: agent position, agent velocity (in units of ``max_speed``), switch position,
    door position, switch state, ``t / T``.
    """

    def __init__(self, horizon: int = 64, jitter: float = 0.01, physics: Physics = Physics(),
                 layout: SwitchLayout = SwitchLayout()):
        super().__init__(horizon, jitter, physics)
        self.layout = layout
        self.door = np.asarray(layout.door, dtype=np.float64)
        self.switch = np.zeros(2)
        self.switch_on = False

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.pos = self._jittered(self.layout.agent, rng)
        self.switch = self._jittered(self.layout.switch, rng)
        self.vel = np.zeros(2)
        self.switch_on = False
        self.t = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.concatenate([self.pos, self._vel_obs(), self.switch, self.door, [float(self.switch_on), self._time()]])

    def success(self) -> bool:
        return self.switch_on and bool(np.hypot(*(self.pos - self.door)) < self.physics.goal_radius)

    def step(self, action):
        action = self._begin_step(action)
        ph = self.physics
        self._move(action, ph.max_speed)
        if action[2] > ph.grip_threshold and np.hypot(*(self.pos - self.switch)) < ph.grasp_radius:
            self.switch_on = True
        done = self.done
        info = EvalInfo(success=done and self.success(), held=self.switch_on)
        return self.observe(), done, info

    @staticmethod
    def expert_action(obs: np.ndarray, physics: Physics = Physics()) -> np.ndarray:
        pos, vel, switch, door, on = obs[0:2], obs[2:4] * physics.max_speed, obs[4:6], obs[6:8], obs[8] > 0.5
        target = door if on else switch
        near = np.hypot(*(pos - switch)) < 0.5 * physics.grasp_radius
        return np.append(_steer(pos, vel, target, physics, physics.max_speed), 1.0 if near else -1.0)


def _steer(pos, vel, target, physics: Physics, speed: float) -> np.ndarray:
    """Action whose velocity command heads for ``target`` and brakes on arrival."""
    offset = target - pos
    dist = float(np.hypot(*offset))
    desired = offset * (min(speed, 0.5 * dist) / dist) if dist > 1e-12 else np.zeros(2)
    # invert v' = d v + (1 - d) s a for the command that reaches `desired` in one step
    a = (desired - physics.damping * vel) / ((1.0 - physics.damping) * physics.max_speed)
    return np.clip(a, -1.0, 1.0)


ENVS = {"carry": CarryEnv, "switch": TwoStageSwitchEnv}


def make_env(kind: str, horizon: int = 64, jitter: float = 0.01) -> PointMassTask:
    try:
        cls = ENVS[kind]
    except KeyError:
        raise ConfigError(f"unknown environment {kind!r}; expected one of {sorted(ENVS)}") from None
    return cls(horizon=horizon, jitter=jitter)


class ObservationOnly:
    """Training-side view of an environment: observations and episode end only."""

    __slots__ = ("_env",)

    def __init__(self, env: PointMassTask):
        self._env = env

    @property
    def obs_dim(self) -> int:
        return self._env.obs_dim

    @property
    def act_dim(self) -> int:
        return self._env.act_dim

    @property
    def horizon(self) -> int:
        return self._env.horizon

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return self._env.reset(rng)

    def step(self, action):
        obs, done, _ = self._env.step(action)
        return obs, done


@dataclass
class Rollout:
    observations: np.ndarray
    actions: np.ndarray
    infos: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return bool(self.infos[-1].success)

    @property
    def ever_held(self) -> bool:
        return any(i.held for i in self.infos)


def rollout(env: PointMassTask, policy, rng: np.random.Generator) -> Rollout:
    """Run ``policy(obs) -> action`` for one full episode on the raw environment."""
    obs = [env.reset(rng)]
    acts, infos = [], []
    done = False
    while not done:
        a = np.asarray(policy(obs[-1]), dtype=np.float64)
        o, done, info = env.step(a)
        obs.append(o)
        acts.append(a)
        infos.append(info)
    return Rollout(np.array(obs), np.array(acts), infos)


class GenerationError(RuntimeError):
    """The scripted expert failed to solve its task."""


def scripted_expert(kind: str, rng: np.random.Generator, jitter: float = 0.01, horizon: int = 64) -> Trajectory:
    """One successful observation-only demonstration from the hand-written controller."""
    env = make_env(kind, horizon, jitter)
    ro = rollout(env, lambda o: env.expert_action(o, env.physics), rng)
    if not ro.success:
        raise GenerationError(f"scripted {kind} expert failed within T = {horizon}")
    return Trajectory(ro.observations)


def generate_demos(kind: str, n: int, rng: np.random.Generator, jitter: float = 0.01, horizon: int = 64) -> DemoSet:
    return DemoSet(tuple(scripted_expert(kind, rng, jitter, horizon) for _ in range(n)))
