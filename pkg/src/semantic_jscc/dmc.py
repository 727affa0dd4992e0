"""Sphere-packing and expurgated error exponents of discrete memoryless channels.

Both exponents are computed through Gallager's parametric forms

    E_sp(R) = sup_{rho >= 0} max_P  E0(rho, P) - rho R
    E_ex(R) = sup_{rho >= 1} max_P  Ex(rho, P) - rho R

which equal the Csiszar-Korner divergence forms by convex duality.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .prob import (
    as_channel,
    bhattacharyya_matrix,
    dmc_capacity,
    project_simplex,
)

RHO_MAX_SP = 100.0
RHO_MAX_EX = 1e4


@dataclass(frozen=True)
class ChannelExponentResult:
    rate: float
    value: float
    achieving_input: np.ndarray
    achieving_param: float


def gallager_e0(w, p, rho):
    """E0(rho, P) = -ln sum_z (sum_y P(y) w(z|y)^{1/(1+rho)})^{1+rho}."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    inner = p @ w ** (1.0 / (1.0 + rho))
    return max(0.0, -math.log(float(np.sum(inner ** (1.0 + rho)))))


def expurgated_ex(w, p, rho):
    """Ex(rho, P) = -rho ln sum_{y,y'} P(y) P(y') exp(-d_W(y,y') / rho)."""
    if rho < 1:
        raise ValueError("rho must be >= 1")
    p = np.asarray(p, dtype=float)
    b = np.exp(-bhattacharyya_matrix(w) / rho)
    return max(0.0, -rho * math.log(float(p @ b @ p)))


def _minimize_on_simplex(fun, grad, starts):
    """Best local minimum of a smooth function over the simplex."""
    n = starts[0].size
    cons = ({"type": "eq", "fun": lambda x: x.sum() - 1.0,
             "jac": lambda x: np.ones_like(x)},)
    best_x, best_f = None, math.inf
    for x0 in starts:
        if n == 1:
            x = np.ones(1)
        else:
            res = optimize.minimize(fun, x0, jac=grad, method="SLSQP",
                                    bounds=[(0.0, 1.0)] * n, constraints=cons,
                                    options={"ftol": 1e-15, "maxiter": 500})
            x = project_simplex(res.x)
        f = fun(x)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def _starts(n):
    return [np.full(n, 1.0 / n)] + list(np.eye(n))


def max_e0(w, rho):
    """max_P E0(rho, P); the objective inside the log is convex in P."""
    w = np.asarray(w, dtype=float)
    a = w ** (1.0 / (1.0 + rho))

    def fun(p):
        return float(np.sum(np.maximum(p @ a, 0.0) ** (1.0 + rho)))

    def grad(p):
        return (1.0 + rho) * a @ (np.maximum(p @ a, 0.0) ** rho)

    p, f = _minimize_on_simplex(fun, grad, _starts(w.shape[0]))
    return max(0.0, -math.log(f)), p


def max_ex(w, rho, dist=None):
    """max_P Ex(rho, P) by multi-start local search (the quadratic form can be
    indefinite for rho > 1)."""
    d = bhattacharyya_matrix(w) if dist is None else dist
    b = np.exp(-d / rho)
    n = b.shape[0]
    starts = _starts(n)
    if n > 2:
        starts += [(np.eye(n)[i] + np.eye(n)[j]) / 2
                   for i in range(n) for j in range(i + 1, n)]
    p, f = _minimize_on_simplex(lambda p: float(p @ b @ p),
                                lambda p: 2.0 * b @ p, starts)
    return max(0.0, -rho * math.log(f)), p


def _sup_over_rho(profile, lo, hi, n_grid=60):
    """Maximize a 1-D profile on [lo, hi]: log-spaced scan, then golden refine.

    Returns (rho, value, hit_upper) where ``hit_upper`` flags that the best
    scanned point was the right end with the profile still rising.
    """
    grid = np.unique(np.r_[lo, lo + np.geomspace(1e-3, hi - lo, n_grid - 1)])
    vals = np.array([profile(x) for x in grid])
    i = int(np.argmax(vals))
    if i == grid.size - 1:
        return grid[-1], vals[-1], vals[-1] > vals[-2] + 1e-12
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda x: -profile(x), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-10})
    if -res.fun > vals[i]:
        return float(res.x), float(-res.fun), False
    return float(grid[i]), float(vals[i]), False


def sphere_packing_dmc(w, r, tol=1e-9):
    """Sphere-packing exponent E_sp(r, W) in nats per channel use.

    Returns value ``math.inf`` when the profile is still increasing at the
    largest rho searched (rates at or below the zero-error-type threshold).
    """
    if not r > 0:
        raise ValueError("rate must be > 0")
    w = as_channel(w)
    cap, p_cap = dmc_capacity(w, tol=min(tol, 1e-10), return_input=True)
    if r >= cap - tol:
        return ChannelExponentResult(r, 0.0, p_cap, 0.0)
    cache = {}

    def profile(rho):
        if rho not in cache:
            cache[rho] = max_e0(w, rho)
        return cache[rho][0] - rho * r

    rho, val, hit = _sup_over_rho(profile, 0.0, RHO_MAX_SP)
    if hit:
        return ChannelExponentResult(r, math.inf, max_e0(w, rho)[1], rho)
    return ChannelExponentResult(r, max(0.0, val), max_e0(w, rho)[1], rho)


def expurgated_dmc(w, r, tol=1e-9):
    """Expurgated exponent E_ex(r, W), clamped at zero.

    The sup over rho >= 1 is zero above the rate where the Ex(1, P) slope
    condition fails; that rate sits at or below capacity.
    """
    if not r > 0:
        raise ValueError("rate must be > 0")
    w = as_channel(w)
    d = bhattacharyya_matrix(w)
    n = w.shape[0]
    cache = {}

    def profile(rho):
        if rho not in cache:
            cache[rho] = max_ex(w, rho, d)
        return cache[rho][0] - rho * r

    rho, val, hit = _sup_over_rho(profile, 1.0, RHO_MAX_EX)
    if hit:
        return ChannelExponentResult(r, math.inf, max_ex(w, rho, d)[1], rho)
    if val <= tol:
        return ChannelExponentResult(r, 0.0, np.full(n, 1.0 / n), 1.0)
    return ChannelExponentResult(r, val, max_ex(w, rho, d)[1], rho)
