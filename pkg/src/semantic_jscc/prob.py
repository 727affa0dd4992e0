"""Finite-alphabet probability primitives.

Distributions, channels and distortion tables are plain numpy arrays. The
``as_*`` helpers validate them once at the API boundary and hand back
read-only float64 copies, so downstream code can trust the invariants.

All information quantities are in nats. ``math.inf`` is the extended-real
value used for divergences and exponents that blow up.
"""

import math
import warnings

import numpy as np

SUM_TOL = 1e-12
BITS_PER_NAT = 1.0 / math.log(2.0)

BA_MAX_ITER = 10_000
CONIC_GAP_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    ``gap`` carries the last certified optimality gap.
    """

    def __init__(self, message, gap=math.nan):
        super().__init__(f"{message} (last gap {gap:.3e})")
        self.gap = gap


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def as_distribution(p, name="distribution"):
    """Validate a probability vector and return it as a read-only array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > SUM_TOL * max(1, p.size):
        raise ValueError(f"{name} sums to {p.sum():.15g}, not 1")
    return _frozen(p)


def as_channel(w, name="channel"):
    """Validate a row-stochastic matrix (row = conditional law given input)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or 0 in w.shape:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    for i, row in enumerate(w):
        as_distribution(row, name=f"{name} row {i}")
    return _frozen(w)


def as_joint(p, name="joint distribution"):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2:
        raise ValueError(f"{name} must be 2-D")
    as_distribution(p.ravel(), name=name)
    return _frozen(p)


def as_distortion(d, name="distortion table"):
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or 0 in d.shape:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    return _frozen(d)


def _xlogy_ratio(p, q):
    """Elementwise p*ln(p/q) with 0 ln 0 = 0 and +inf where p>0, q=0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    p, q = np.broadcast_arrays(p, q)
    pos = p > 0
    bad = pos & (q <= 0)
    ok = pos & ~bad
    out[ok] = p[ok] * np.log(p[ok] / q[ok])
    out[bad] = np.inf
    return out


def entropy(p):
    """Shannon entropy in nats."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def binary_entropy(x):
    return entropy([x, 1.0 - x])


def kl_divergence(p, q):
    """Relative entropy D(p||q) in nats; ``inf`` if p is not << q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"alphabet mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(_xlogy_ratio(p, q)))


def conditional_kl(v, w, p):
    """D(v||w|p) = sum_y p(y) D(v(.|y) || w(.|y))."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    if v.shape != w.shape or p.shape != (v.shape[0],):
        raise ValueError(f"shape mismatch: v{v.shape} w{w.shape} p{p.shape}")
    rows = _xlogy_ratio(v, w).sum(axis=1)
    # inputs with zero weight contribute nothing even when their row is inf
    mask = p > 0
    return float(np.sum(p[mask] * rows[mask]))


def mutual_information(p, ch):
    """I(X;Y) for input law ``p`` and channel matrix ``ch``."""
    p = np.asarray(p, dtype=float)
    ch = np.asarray(ch, dtype=float)
    if p.shape != (ch.shape[0],):
        raise ValueError(f"input law of size {p.size} vs channel {ch.shape}")
    out = p @ ch
    joint = p[:, None] * ch
    return max(0.0, float(np.sum(_xlogy_ratio(joint, p[:, None] * out[None, :]))))


def bhattacharyya(w, y, y2):
    """Bhattacharyya distance -ln sum_z sqrt(w(z|y) w(z|y2))."""
    w = np.asarray(w, dtype=float)
    s = float(np.sum(np.sqrt(w[y] * w[y2])))
    if s <= 0.0:
        return math.inf
    return max(0.0, -math.log(s))


def bhattacharyya_matrix(w):
    """All pairwise Bhattacharyya distances, shape (|Y|, |Y|)."""
    w = np.asarray(w, dtype=float)
    s = np.sqrt(w) @ np.sqrt(w).T
    with np.errstate(divide="ignore"):
        d = -np.log(s)
    d = np.where(s > 0, np.maximum(d, 0.0), np.inf)
    np.fill_diagonal(d, 0.0)
    return d


def dmc_capacity(w, tol=1e-10, return_input=False):
    """Capacity of a DMC by Blahut-Arimoto.

    Stops when the duality gap ``max_y D(w_y||q) - I(p;w)`` drops below
    ``tol``; this brackets the true capacity from both sides.

    Returns the capacity in nats, and the optimizing input law when
    ``return_input`` is set.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = as_channel(w)
    n_in = w.shape[0]
    p = np.full(n_in, 1.0 / n_in)
    gap = math.inf
    for _ in range(BA_MAX_ITER):
        q = p @ w
        div = _xlogy_ratio(w, q[None, :]).sum(axis=1)
        lower = float(p @ div)
        upper = float(div.max())
        gap = upper - lower
        if gap < tol:
            break
        p = p * np.exp(div - upper)
        p /= p.sum()
    else:
        # nearly useless channels make the iteration sublinear; solve the
        # concave program max H(pW) - sum_x p_x H(w_x) directly instead
        p = _kkt_polish(w, _capacity_conic(w))
        q = p @ w
        div = _xlogy_ratio(w, q[None, :]).sum(axis=1)
        lower, gap = float(p @ div), float(div.max() - p @ div)
        if gap > max(tol, CONIC_GAP_TOL):
            raise ConvergenceError("Blahut-Arimoto capacity did not converge", gap)
    cap = max(0.0, lower)
    return (cap, p) if return_input else cap


def _capacity_conic(w):
    import cvxpy as cp

    p = cp.Variable(w.shape[0], nonneg=True)
    h_rows = -_xlogy_ratio(w, np.ones_like(w)).sum(axis=1)
    prob = cp.Problem(cp.Maximize(cp.sum(cp.entr(w.T @ p)) - h_rows @ p), [cp.sum(p) == 1])
    with warnings.catch_warnings():
        # "inaccurate" is expected at these tolerances; the KKT polish follows
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-13, tol_gap_rel=1e-13, tol_feas=1e-12)
    p = np.maximum(np.asarray(p.value, dtype=float), 0.0)
    return p / p.sum()


def _kkt_polish(w, p, iters=30):
    """Newton steps on D(w_x || pW) = C over the support of ``p``."""
    def gap_of(p):
        div = _xlogy_ratio(w, (p @ w)[None, :]).sum(axis=1)
        return div.max() - p @ div

    best, best_gap = p, gap_of(p)
    s = np.flatnonzero(p > 1e-12)
    x = p[s].copy()
    for _ in range(iters):
        full = np.zeros_like(p)
        full[s] = x
        q = full @ w
        div = _xlogy_ratio(w[s], q[None, :]).sum(axis=1)
        # unknowns (p_S, C); rows D_x - C = 0 and sum p_S = 1
        jac = np.zeros((s.size + 1, s.size + 1))
        jac[:s.size, :s.size] = -(w[s] / np.where(q > 0, q, 1.0)) @ w[s].T
        jac[:s.size, -1] = -1.0
        jac[-1, :s.size] = 1.0
        c = full @ _xlogy_ratio(w, q[None, :]).sum(axis=1)
        res = np.append(div - c, x.sum() - 1.0)
        try:
            step = np.linalg.solve(jac, -res)[:s.size]
        except np.linalg.LinAlgError:
            break
        x = x + step
        if np.any(x <= 0):
            break
        cand = np.zeros_like(p)
        cand[s] = x / x.sum()
        g = gap_of(cand)
        if g < best_gap:
            best, best_gap = cand, g
    return best


def project_simplex(c):
    """Euclidean projection of ``c`` onto the probability simplex."""
    c = np.asarray(c, dtype=float)
    u = np.sort(c)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, c.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(c - css[rho] / (rho + 1), 0.0)


def simplex_grid(n, steps):
    """All points of the n-simplex with coordinates in multiples of 1/steps."""
    if n == 1:
        return np.ones((1, 1))
    pts = []

    def rec(prefix, left, depth):
        if depth == n - 1:
            pts.append(prefix + [left])
            return
        for k in range(left + 1):
            rec(prefix + [k], left - k, depth + 1)

    rec([], steps, 0)
    return np.array(pts, dtype=float) / steps
