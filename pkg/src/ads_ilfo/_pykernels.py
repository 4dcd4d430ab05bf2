"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` step for step and are used when the compiled
extension is unavailable (or ``ADS_ILFO_PURE_PYTHON=1``).
"""

import numpy as np

# Scalings are folded into the potentials once they leave this range.
_ABSORB = 1e50
# Intermediate epsilon stages stop at this marginal error or after this many iterations.
_STAGE_TOL = 1e-3
_STAGE_ITERS = 10
_EPS_DECAY = 0.25


def lis_length(seq) -> int:
    """Length of the longest strictly increasing subsequence (patience sorting)."""
    tails = []
    for x in seq:
        lo, hi = 0, len(tails)
        while lo < hi:
            mid = (lo + hi) // 2
            if tails[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        if lo == len(tails):
            tails.append(x)
        else:
            tails[lo] = x
    return len(tails)


def prefix_nn_indices(C: np.ndarray, n: int) -> np.ndarray:
    """Row-wise argmin over the top-left ``n x n`` block, 0-based, ties to the lowest column."""
    return np.argmin(C[:n, :n], axis=1)


def prefix_alignment(C: np.ndarray, n: int) -> int:
    return lis_length(prefix_nn_indices(C, n).tolist())


def _kernel(C, f, g, eps):
    return np.exp((f[:, None] + g[None, :] - C) / eps)


def sinkhorn_potentials(C: np.ndarray, eps: float, max_iters: int, tol: float):
    """Log-stabilized Sinkhorn with epsilon scaling for uniform marginals.

    Returns ``(f, g, err, iters, converged, eps_used)``; the plan is
    ``exp((f_i + g_j - C_ij) / eps_used)`` and ``err`` is its max row-marginal
    violation (columns are exact after the final half-step). ``eps_used`` only
    differs from ``eps`` when the budget ran out during epsilon scaling.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    n = C.shape[0]
    a = 1.0 / n
    f = np.zeros(n)
    g = np.zeros(n)
    cur = max(float(C.max()), eps)
    iters = 0
    best = (np.inf, f.copy(), g.copy())
    while True:
        last = cur <= eps
        if last:
            cur = eps
        K = _kernel(C, f, g, cur)
        u = np.ones(n)
        v = np.ones(n)
        stage = 0
        while iters < max_iters:
            u = a / (K @ v)
            v = a / (K.T @ u)
            iters += 1
            stage += 1
            err = float(np.max(np.abs(u * (K @ v) - a)))
            if last and err < best[0]:
                best = (err, f + cur * np.log(u), g + cur * np.log(v))
            if last and err < tol:
                break
            if not last and (err < _STAGE_TOL or stage >= _STAGE_ITERS):
                break
            if (u.max() > _ABSORB or v.max() > _ABSORB or u.min() < 1.0 / _ABSORB
                    or v.min() < 1.0 / _ABSORB):
                f = f + cur * np.log(u)
                g = g + cur * np.log(v)
                K = _kernel(C, f, g, cur)
                u[:] = 1.0
                v[:] = 1.0
        f = f + cur * np.log(u)
        g = g + cur * np.log(v)
        if last or iters >= max_iters:
            break
        cur = max(cur * _EPS_DECAY, eps)
    if not last or best[0] == np.inf:
        # budget ran out before the target epsilon; report the current iterate
        err = float(np.max(np.abs(_kernel(C, f, g, cur).sum(axis=1) - a)))
        return f, g, err, iters, False, cur
    err, f, g = best
    return f, g, err, iters, err < tol, eps


def plan_from_potentials(C, f, g, eps):
    return _kernel(np.asarray(C, dtype=np.float64), f, g, eps)


def round_to_marginals(P: np.ndarray) -> np.ndarray:
    """Project a near-feasible plan onto the uniform-marginal transport polytope.

    Rows are scaled down to at most ``1/n``, then columns, then the missing
    mass is restored by a rank-one correction. The result has exact marginals
    up to floating-point rounding.
    """
    n = P.shape[0]
    a = 1.0 / n
    with np.errstate(divide="ignore"):
        P = P * np.minimum(a / P.sum(axis=1), 1.0)[:, None]
        P = P * np.minimum(a / P.sum(axis=0), 1.0)[None, :]
    # clamp rounding noise so the correction never goes negative
    err_r = np.maximum(a - P.sum(axis=1), 0.0)
    err_c = np.maximum(a - P.sum(axis=0), 0.0)
    mass = err_r.sum()
    if mass > 0:
        P = P + np.outer(err_r, err_c) / mass
    return P
