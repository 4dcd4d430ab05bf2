"""Shared types, observation costs, experiment configuration and seeded randomness."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or mismatched shapes between inputs."""


class DomainError(ValueError):
    """Input outside the domain of an operation (e.g. zero vector under cosine)."""


COST_KINDS = ("euclidean", "squared_euclidean", "cosine")
SCHEDULE_MODES = ("ads", "fixed", "exponential")
OT_SOLVERS = ("sinkhorn", "exact")
ENV_KINDS = ("carry", "switch")


# ---------------------------------------------------------------------------
# Trajectories and demonstrations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A fixed-length sequence of observation vectors.

    ``observations`` has shape ``(T, d)``. ``actions`` has shape ``(T - 1, a)``
    for agent rollouts and is ``None`` for demonstrations.
    """

    observations: np.ndarray
    actions: Optional[np.ndarray] = None

    def __post_init__(self):
        obs = np.array(self.observations, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[0] < 1:
            raise ConfigError(f"observations must be a non-empty (T, d) array, got shape {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise DomainError("observations contain non-finite entries")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)
        if self.actions is not None:
            act = np.array(self.actions, dtype=np.float64)
            if act.ndim != 2 or act.shape[0] != obs.shape[0] - 1:
                raise ConfigError(
                    f"actions must have shape (T-1, a) = ({obs.shape[0] - 1}, a), got {act.shape}"
                )
            act.setflags(write=False)
            object.__setattr__(self, "actions", act)

    @property
    def horizon(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    def prefix(self, n: int) -> np.ndarray:
        return self.observations[:n]


@dataclass(frozen=True, eq=False)
class DemoSet:
    """N observation-only expert trajectories sharing horizon and dimension."""

    trajectories: tuple

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if len(trajs) < 1:
            raise ConfigError("a DemoSet needs at least one trajectory")
        T, d = trajs[0].horizon, trajs[0].obs_dim
        for i, tr in enumerate(trajs):
            if tr.actions is not None:
                raise ConfigError(f"demonstration {i} carries actions; demos are observation-only")
            if tr.horizon != T or tr.obs_dim != d:
                raise ConfigError(
                    f"demonstration {i} has shape ({tr.horizon}, {tr.obs_dim}), expected ({T}, {d})"
                )
        object.__setattr__(self, "trajectories", trajs)

    @property
    def horizon(self) -> int:
        return self.trajectories[0].horizon

    @property
    def obs_dim(self) -> int:
        return self.trajectories[0].obs_dim

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i) -> Trajectory:
        return self.trajectories[i]

    def stacked(self) -> np.ndarray:
        """All observations as one ``(N, T, d)`` array."""
        return np.stack([tr.observations for tr in self.trajectories])


def save_demos(path, demos: DemoSet) -> None:
    doc = {
        "horizon": demos.horizon,
        "obs_dim": demos.obs_dim,
        "trajectories": [tr.observations.tolist() for tr in demos],
    }
    # json writes floats with repr(), which round-trips exactly.
    Path(path).write_text(json.dumps(doc) + "\n")


def load_demos(path) -> DemoSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not a valid demo document ({exc})") from exc
    missing = {"horizon", "obs_dim", "trajectories"} - set(doc)
    if missing:
        raise ConfigError(f"{path}: demo document lacks fields {sorted(missing)}")
    demos = DemoSet(tuple(Trajectory(np.asarray(t, dtype=np.float64)) for t in doc["trajectories"]))
    if demos.horizon != doc["horizon"] or demos.obs_dim != doc["obs_dim"]:
        raise ConfigError(
            f"{path}: declared shape ({doc['horizon']}, {doc['obs_dim']}) does not match "
            f"trajectories ({demos.horizon}, {demos.obs_dim})"
        )
    return demos


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostFunctionSpec:
    """Ground cost between two observations.

    ``scale`` divides every cost; it is the only normalization constant.
    Cosine cost is ``1 - cos(a, b)``.
    """

    kind: str = "euclidean"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ConfigError(f"unknown cost kind {self.kind!r}; expected one of {COST_KINDS}")
        if not self.scale > 0:
            raise ConfigError("cost scale must be positive")


def cost(spec: CostFunctionSpec, a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError(f"cost needs two vectors of equal dimension, got {a.shape} and {b.shape}")
    if spec.kind == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise DomainError("cosine cost is undefined for a zero vector")
        value = max(0.0, 1.0 - float(a @ b) / (na * nb))
    else:
        diff = a - b
        sq = float(diff @ diff)
        value = sq if spec.kind == "squared_euclidean" else float(np.sqrt(sq))
    return value / spec.scale


def pairwise_cost(spec: CostFunctionSpec, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Matrix of ``cost(xs[i], ys[j])``; both inputs are ``(n, d)`` / ``(m, d)`` arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[1] != ys.shape[1]:
        raise ConfigError(f"pairwise_cost shape mismatch: {xs.shape} vs {ys.shape}")
    if spec.kind == "cosine":
        nx = np.linalg.norm(xs, axis=1)
        ny = np.linalg.norm(ys, axis=1)
        if np.any(nx == 0.0) or np.any(ny == 0.0):
            raise DomainError("cosine cost is undefined for a zero vector")
        sim = (xs / nx[:, None]) @ (ys / ny[:, None]).T
        out = np.maximum(1.0 - sim, 0.0)
    else:
        diff = xs[:, None, :] - ys[None, :, :]
        out = np.einsum("ijk,ijk->ij", diff, diff)
        if spec.kind == "euclidean":
            out = np.sqrt(out)
    if spec.scale != 1.0:
        out = out / spec.scale
    return out


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 stream; one owner per stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def spawn_rngs(seed: int, n: int) -> list:
    """``n`` independent deterministic streams derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Every tunable of a training run.

    Defaults are desk scale. ``paper_preset`` returns the values of the
    original hyperparameter table where they differ.
    """

    seed: int = 0
    # task
    env: str = "carry"
    horizon: int = 64
    n_demos: int = 10
    demo_jitter: float = 0.01
    env_jitter: float = 0.01
    cost: str = "euclidean"
    cost_scale: float = 1.0
    demo_file: str = ""
    # discount scheduling
    schedule: str = "ads"
    progress_lambda: float = 0.9
    alpha: float = 0.2
    gamma0: float = 0.2
    fixed_gamma: float = 0.99
    exp_gamma_start: float = 0.9
    exp_gamma_end: float = 0.99
    exp_frames: int = 75_000
    # optimal transport
    ot_solver: str = "sinkhorn"
    sinkhorn_eps: float = 0.01
    sinkhorn_max_iters: int = 500
    sinkhorn_tol: float = 1e-6
    reward_scale: Optional[float] = None
    # agent
    replay_capacity: int = 50_000
    batch_size: int = 128
    n_step: int = 3
    learning_rate: float = 1e-4
    soft_update_rate: float = 0.005
    hidden_dim: int = 64
    exploration_noise: float = 0.4
    policy_noise: float = 0.1
    noise_clip: float = 0.3
    policy_delay: int = 1
    updates_per_step: int = 1
    warmup_frames: int = 4_096
    # budget and evaluation
    total_frames: int = 150_000
    eval_every_episodes: int = 10
    eval_episodes: int = 20
    record_wall_clock: bool = False
    record_rewards: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def effective_reward_scale(self) -> float:
        return float(self.horizon) if self.reward_scale is None else float(self.reward_scale)

    @property
    def cost_spec(self) -> CostFunctionSpec:
        return CostFunctionSpec(self.cost, self.cost_scale)

    def validate(self) -> None:
        def check(ok, msg):
            if not ok:
                raise ConfigError(msg)

        check(self.env in ENV_KINDS, f"env must be one of {ENV_KINDS}")
        check(self.cost in COST_KINDS, f"cost must be one of {COST_KINDS}")
        check(self.schedule in SCHEDULE_MODES, f"schedule must be one of {SCHEDULE_MODES}")
        check(self.ot_solver in OT_SOLVERS, f"ot_solver must be one of {OT_SOLVERS}")
        check(0.0 <= self.progress_lambda <= 1.0, "progress_lambda must lie in [0, 1]")
        check(0.0 < self.alpha < 1.0, "alpha must lie in (0, 1)")
        for name in ("gamma0", "fixed_gamma", "exp_gamma_start", "exp_gamma_end"):
            check(0.0 < getattr(self, name) < 1.0, f"{name} must lie in (0, 1)")
        for name in (
            "horizon", "n_demos", "exp_frames", "sinkhorn_max_iters", "replay_capacity",
            "batch_size", "n_step", "hidden_dim", "policy_delay", "updates_per_step",
            "total_frames", "eval_every_episodes", "eval_episodes",
        ):
            check(getattr(self, name) > 0, f"{name} must be positive")
        check(self.horizon >= 2, "horizon must be at least 2")
        for name in ("sinkhorn_eps", "sinkhorn_tol", "learning_rate", "soft_update_rate", "cost_scale"):
            check(getattr(self, name) > 0, f"{name} must be positive")
        check(self.soft_update_rate <= 1.0, "soft_update_rate must be at most 1")
        for name in ("demo_jitter", "env_jitter", "exploration_noise", "policy_noise", "noise_clip"):
            check(getattr(self, name) >= 0, f"{name} must be non-negative")
        check(self.warmup_frames >= 0, "warmup_frames must be non-negative")
        check(self.reward_scale is None or self.reward_scale > 0, "reward_scale must be positive")
        check(self.replay_capacity >= self.horizon - 1, "replay_capacity must hold one episode")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- key = value text format -------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        values.update(overrides)
        return cls.from_strings(values)

    @classmethod
    def from_strings(cls, values: dict) -> "ExperimentConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        parsed = {k: parse_value(hints[k], v, k) for k, v in values.items()}
        return cls(**parsed)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def paper_preset(**changes) -> ExperimentConfig:
    """Hyperparameter-table values (hidden 1024, batch 512, buffer 150000)."""
    base = dict(replay_capacity=150_000, batch_size=512, hidden_dim=1024, n_demos=10)
    base.update(changes)
    return ExperimentConfig(**base)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(hint, raw, key: str = "?"):
    """Parse a string (or pass through an already typed value) per the field's type hint."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    optional = typing.get_origin(hint) is typing.Union and type(None) in typing.get_args(hint)
    if optional:
        if text.lower() in ("none", "null", ""):
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text.replace("_", ""))
        if hint is float:
            return float(text)
        if hint is str:
            return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {hint.__name__}") from None
    raise ConfigError(f"{key}: unsupported field type {hint}")


def config_fields() -> Sequence[dataclasses.Field]:
    return fields(ExperimentConfig)
