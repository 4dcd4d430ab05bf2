"""Progress recognition by nearest-neighbour LIS alignment, and the progress-to-discount map."""

from __future__ import annotations

import itertools

import numpy as np

from . import kernels
from .core import ConfigError, CostFunctionSpec, DemoSet, Trajectory, pairwise_cost


def _prefix_obs(x) -> np.ndarray:
    obs = x.observations if isinstance(x, Trajectory) else np.asarray(x, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise ConfigError("alignment needs a non-empty (n, d) prefix")
    return obs


def nn_indices(prefix, other_prefix, spec: CostFunctionSpec = CostFunctionSpec()) -> np.ndarray:
    """1-based index of each frame's nearest neighbour among the other prefix's frames.

    Ties go to the smallest index.
    """
    a, b = _prefix_obs(prefix), _prefix_obs(other_prefix)
    if a.shape != b.shape:
        raise ConfigError(f"prefixes must share shape, got {a.shape} and {b.shape}")
    C = pairwise_cost(spec, a, b)
    return kernels.prefix_nn_indices(C, a.shape[0]) + 1


def lis_length(p) -> int:
    """Length of the longest strictly increasing subsequence, O(n log n)."""
    p = np.asarray(p, dtype=np.int64)
    if p.size == 0:
        raise ConfigError("LIS of an empty sequence is undefined here")
    return int(kernels.lis_length(p))


def alignment(prefix, other_prefix, spec: CostFunctionSpec = CostFunctionSpec()) -> int:
    return lis_length(nn_indices(prefix, other_prefix, spec))


def build_expert_baseline(demos: DemoSet, spec: CostFunctionSpec = CostFunctionSpec()) -> np.ndarray:
    """``B[k]``: weakest alignment between two distinct demos on their first ``k + 1`` frames.

    With a single demo there is no pair, so the self-alignment bound ``k + 1`` is used.
    """
    if len(demos) == 0:
        raise ConfigError("expert baseline needs at least one demonstration")
    T = demos.horizon
    if len(demos) == 1:
        return np.arange(1, T + 1, dtype=np.int64)
    base = np.full(T, np.iinfo(np.int64).max, dtype=np.int64)
    for i, j in itertools.permutations(range(len(demos)), 2):
        C = pairwise_cost(spec, demos[i].observations, demos[j].observations)
        for k in range(T):
            base[k] = min(base[k], kernels.prefix_alignment(C, k + 1))
    return base


def map_discount(k: int, alpha: float = 0.2, gamma0: float = 0.2) -> float:
    """Discount such that every reward after step ``k`` weighs at most ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if k < 0:
        raise ConfigError("progress index must be non-negative")
    if k == 0:
        return float(gamma0)
    return float(alpha ** (1.0 / k))


class ProgressRecognizer:
    """Tracks how many leading demonstration steps the agent can follow.

    ``k`` only ever increases. Each call to :meth:`update` keeps advancing
    while the advance test holds, so one good trajectory can move ``k`` by
    several steps.
    """

    def __init__(self, demos: DemoSet, spec: CostFunctionSpec = CostFunctionSpec(), lam: float = 0.9):
        if not 0.0 <= lam <= 1.0:
            raise ConfigError("lambda must lie in [0, 1]")
        self.demos = demos
        self.spec = spec
        self.lam = float(lam)
        self.horizon = demos.horizon
        self.baseline = build_expert_baseline(demos, spec)
        self.baseline.setflags(write=False)
        self.k = 0

    def passes(self, costs: np.ndarray, k: int) -> bool:
        """Advance test at progress ``k`` given agent-vs-demo cost matrices."""
        n = k + 1
        best = max(kernels.prefix_alignment(C, n) for C in costs)
        return best >= self.lam * self.baseline[k]

    def update_from_costs(self, costs: np.ndarray) -> int:
        costs = np.ascontiguousarray(costs, dtype=np.float64)
        while self.k < self.horizon and self.passes(costs, self.k):
            self.k += 1
        return self.k

    def update(self, traj) -> int:
        obs = traj.observations if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
        if obs.shape != (self.horizon, self.demos.obs_dim):
            raise ConfigError(
                f"trajectory shape {obs.shape} does not match demos ({self.horizon}, {self.demos.obs_dim})"
            )
        costs = np.stack([pairwise_cost(self.spec, obs, d.observations) for d in self.demos])
        return self.update_from_costs(costs)

    def discount(self, alpha: float, gamma0: float) -> float:
        return map_discount(self.k, alpha, gamma0)
