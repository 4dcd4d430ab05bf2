"""Optimal-transport distances between trajectories and the per-step proxy rewards derived from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .core import ConfigError, CostFunctionSpec, DemoSet, Trajectory, pairwise_cost

EXACT_MAX_T = 16


class OTSolution(NamedTuple):
    plan: np.ndarray
    distance: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class SolverParams:
    """``eps`` is relative: the entropic regularizer is ``eps * mean(C)``."""

    solver: str = "sinkhorn"
    eps: float = 0.01
    max_iters: int = 500
    tol: float = 1e-6

    @classmethod
    def from_config(cls, cfg) -> "SolverParams":
        return cls(cfg.ot_solver, cfg.sinkhorn_eps, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol)


@dataclass(frozen=True)
class RewardLabel:
    rewards: np.ndarray
    demo_index: int
    distances: np.ndarray
    plan: np.ndarray
    converged: bool


def _as_obs(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.observations
    return np.asarray(x, dtype=np.float64)


def cost_matrix(traj, traj_e, spec: CostFunctionSpec = CostFunctionSpec()) -> np.ndarray:
    a, b = _as_obs(traj), _as_obs(traj_e)
    if a.shape != b.shape:
        raise ConfigError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    return pairwise_cost(spec, a, b)


def _check_square(C) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
        raise ConfigError(f"cost matrix must be square and non-empty, got {C.shape}")
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise ConfigError("cost matrix entries must be finite and non-negative")
    return C


def solve_exact(C) -> OTSolution:
    """Exact uniform-marginal OT via the assignment problem.

    With uniform marginals the transport polytope is a scaled Birkhoff
    polytope, so an optimal plan is a permutation matrix divided by ``T``.
    """
    C = _check_square(C)
    n = C.shape[0]
    if n > EXACT_MAX_T:
        raise ConfigError(f"exact solver is an oracle for T <= {EXACT_MAX_T}, got T = {n}")
    rows, cols = linear_sum_assignment(C)
    plan = np.zeros_like(C)
    plan[rows, cols] = 1.0 / n
    return OTSolution(plan, float(C[rows, cols].sum() / n), True, 0)


def solve_sinkhorn(C, eps: float, max_iters: int = 500, tol: float = 1e-6) -> OTSolution:
    """Entropic OT with absolute regularizer ``eps``.

    The returned plan is rounded onto the transport polytope, so its
    marginals hold to machine precision even when ``converged`` is False.
    """
    C = _check_square(C)
    if not eps > 0 or not tol > 0:
        raise ConfigError("eps and tol must be positive")
    n = C.shape[0]
    if C.max() == 0.0:
        plan = np.full((n, n), 1.0 / (n * n))
        return OTSolution(plan, 0.0, True, 0)
    f, g, _, iters, converged, eps_used = kernels.sinkhorn_potentials(C, float(eps), int(max_iters), float(tol))
    plan = kernels.round_to_marginals(kernels.plan_from_potentials(C, f, g, eps_used))
    if not np.all(np.isfinite(plan)):
        raise FloatingPointError("Sinkhorn produced a non-finite transport plan")
    return OTSolution(plan, float(np.sum(C * plan)), bool(converged), int(iters))


def solve(C, params: SolverParams = SolverParams()) -> OTSolution:
    if params.solver == "exact":
        return solve_exact(C)
    if params.solver != "sinkhorn":
        raise ConfigError(f"unknown OT solver {params.solver!r}")
    C = _check_square(C)
    scale = float(C.mean())
    if scale == 0.0:
        n = C.shape[0]
        return OTSolution(np.full((n, n), 1.0 / (n * n)), 0.0, True, 0)
    return solve_sinkhorn(C, params.eps * scale, params.max_iters, params.tol)


def wasserstein(traj, traj_e, spec: CostFunctionSpec = CostFunctionSpec(),
                params: SolverParams = SolverParams()) -> float:
    return solve(cost_matrix(traj, traj_e, spec), params).distance


def demo_cost_matrices(traj, demos: DemoSet, spec: CostFunctionSpec) -> np.ndarray:
    """``(N, T, T)`` stack of agent-vs-demo cost matrices."""
    obs = _as_obs(traj)
    if obs.shape != (demos.horizon, demos.obs_dim):
        raise ConfigError(
            f"trajectory shape {obs.shape} does not match demos ({demos.horizon}, {demos.obs_dim})"
        )
    return np.stack([pairwise_cost(spec, obs, d.observations) for d in demos])


def label_from_costs(costs: np.ndarray, params: SolverParams, reward_scale: float) -> RewardLabel:
    if len(costs) == 0:
        raise ConfigError("cannot label rewards without demonstrations")
    solutions = [solve(C, params) for C in costs]
    distances = np.array([s.distance for s in solutions])
    best = int(np.argmin(distances))  # first minimum: lowest demo index wins ties
    plan = solutions[best].plan
    per_step = np.sum(costs[best] * plan, axis=1)
    rewards = -reward_scale * per_step[:-1]
    return RewardLabel(rewards, best, distances, plan, solutions[best].converged)


def label_rewards(traj, demos: DemoSet, spec: CostFunctionSpec = CostFunctionSpec(),
                  params: SolverParams = SolverParams(), reward_scale: float | None = None) -> RewardLabel:
    """Proxy rewards for steps ``1..T-1`` against the closest demonstration.

    ``reward_scale`` defaults to ``T``, which makes each reward the plan-weighted
    average cost of its frame; ``reward_scale=1`` gives the unscaled sum.
    """
    if len(demos) == 0:
        raise ConfigError("cannot label rewards without demonstrations")
    scale = float(demos.horizon) if reward_scale is None else float(reward_scale)
    return label_from_costs(demo_cost_matrices(traj, demos, spec), params, scale)
