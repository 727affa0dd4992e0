"""Excess-distortion exponents of semantic sources.

The exponent at rate threshold ``r`` is the cheapest way, in relative
entropy, for nature to produce a source whose semantic rate-distortion
function exceeds ``r``:

    E(r) = min { D(Q || P_X) + D(U || P_S|X | Q) : R(Q, U, D_s, D_x) >= r }.

A source whose distortion budgets cannot be met at all has R = +inf, so
the minimization also ranges over such "infeasible" sources.
"""

import functools
import math
import threading
from dataclasses import dataclass

import clarabel
import numpy as np
from scipy import optimize, sparse

from .prob import conditional_kl, kl_divergence
from .ratedist import (
    DistortionPair,
    InfeasibleDistortionError,
    UnsupportedStructureError,
    semantic_budget,
    semantic_rd_discrete,
    semantic_rd_gaussian,
)


@dataclass(frozen=True)
class SourceExponentQuery:
    rate_threshold: float
    distortions: DistortionPair

    def __post_init__(self):
        if not self.rate_threshold >= 0:
            raise ValueError("rate threshold must be >= 0")


# --------------------------------------------------------------------------
# Gaussian divergences
# --------------------------------------------------------------------------

def _pd_logdet(m, name):
    m = np.atleast_2d(np.asarray(m))
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None
    return float(np.linalg.slogdet(m)[1])


def gaussian_kl(a, sigma, alt_form=False):
    """D(N(0, a) || N(0, sigma)) = 0.5 [tr(sigma^-1 a) - n + ln det sigma / det a].

    ``alt_form`` drops the 0.5 on the trace and dimension terms, a variant
    kept only for audit output.
    """
    a = np.atleast_2d(np.asarray(a))
    sigma = np.atleast_2d(np.asarray(sigma))
    ld_a = _pd_logdet(a, "covariance")
    ld_s = _pd_logdet(sigma, "reference covariance")
    tr = float(np.real(np.trace(np.linalg.solve(sigma, a))))
    n = a.shape[0]
    if alt_form:
        return 0.5 * (ld_s - ld_a) + tr - n
    return 0.5 * (tr - n + ld_s - ld_a)


def gaussian_kl_marginal(spec, a_mat, alt_form=False):
    """Relative entropy of the observed marginal N(0, A) to N(0, sigma_x)."""
    return gaussian_kl(a_mat, spec.sigma_x, alt_form)


def gaussian_kl_conditional(spec, b_mat, q_cov=None, alt_form=False):
    """Conditional relative entropy of S | X ~ N(hx, B) to N(hx, sigma_n).

    The means agree for every x, so the average over ``x ~ N(0, q_cov)``
    does not depend on ``q_cov``; the argument is accepted for symmetry
    with the marginal term.
    """
    return gaussian_kl(b_mat, spec.sigma_n, alt_form)


# --------------------------------------------------------------------------
# Gaussian source exponent (isotropic)
# --------------------------------------------------------------------------

@dataclass
class GaussianExponentWitness:
    """(Delta, A, B) attaining the Gaussian exponent.

    ``semantic_infeasible`` marks the branch where B alone pushes the
    semantic noise floor past D_s; Delta is then the error covariance of the
    observed-only code and the rate constraint holds with room to spare.
    """

    delta: np.ndarray
    a_mat: np.ndarray
    b_mat: np.ndarray
    semantic_infeasible: bool = False


@dataclass
class GaussianExponentResult:
    value: float
    witness: GaussianExponentWitness
    alt_form_value: float


def _iso_kl(dim, var, ref):
    x = var / ref
    return 0.5 * dim * (x - 1.0 - math.log(x))


def source_exponent_gaussian(spec, query, tol=1e-10):
    """Source excess-distortion exponent of an isotropic Gaussian source.

    Requires ``sigma_x = vx I``, ``sigma_n = vn I`` and ``h^H h = c I``; the
    search over (Delta, A, B) then reduces to scalars a (observed variance),
    b (semantic noise variance) and delta.

    Returns
    -------
    GaussianExponentResult
        ``value`` in nats, witness matrices, and the same witness scored by
        the alternative (audit) divergence formula.
    """
    iso = spec.isotropic_params()
    if iso is None:
        raise UnsupportedStructureError(
            "Gaussian source exponent needs isotropic sigma_x, sigma_n and h^H h")
    vx, vn, c = iso
    q, l = spec.q_dim, spec.l_dim
    d = query.distortions
    r = query.rate_threshold
    semantic_budget(spec, d)  # raises on infeasible budgets
    ds, dx = d.d_s_max, d.d_x_max
    iq, il = np.eye(q), np.eye(l)

    def delta_of(b):
        # per-coordinate error variance budget for a source with noise b
        vals = [dx / q]
        if math.isfinite(ds) and c > 0:
            vals.append((ds - l * b) / (c * q))
        return min(vals)

    def witness(a, b, dl, infeasible=False):
        w = GaussianExponentWitness(dl * iq, a * iq, b * il, infeasible)
        alt = _alt_form_value(spec, w, r)
        return w, alt

    rd = semantic_rd_gaussian(spec, d).value
    if r <= rd + tol:
        dl = min(vx, delta_of(vn))
        w, alt = witness(vx, vn, dl)
        return GaussianExponentResult(0.0, w, alt)

    scale = math.exp(2.0 * r / q)

    def cost(b):
        a = max(vx, scale * delta_of(b))
        return _iso_kl(q, a, vx) + _iso_kl(l, b, vn), a

    best_b, best = None, math.inf
    b_cap = ds / l if math.isfinite(ds) else math.inf
    if c > 0 and math.isfinite(ds):
        b0 = (ds - c * dx) / l
        if b0 > 0:
            b = min(vn, b0)
            best_b, best = b, cost(b)[0]
        lo = max(b0, 0.0)
        res = optimize.minimize_scalar(lambda b: cost(b)[0],
                                       bounds=(lo, b_cap * (1 - 1e-15)),
                                       method="bounded",
                                       options={"xatol": 1e-13 * max(b_cap, 1.0)})
        if res.fun < best:
            best_b, best = float(res.x), float(res.fun)
    else:
        best_b, best = vn, cost(vn)[0]

    # semantic budget already exhausted by the noise alone
    if math.isfinite(b_cap):
        b_inf = max(vn, b_cap)
        v_inf = _iso_kl(l, b_inf, vn)
        if v_inf < best:
            dl = min(vx, dx / q)
            w, alt = witness(vx, b_inf, dl, infeasible=True)
            return GaussianExponentResult(v_inf, w, alt)

    a = cost(best_b)[1]
    w, alt = witness(a, best_b, delta_of(best_b))
    return GaussianExponentResult(best, w, alt)


def _alt_form_value(spec, w, r):
    """Score a witness with the alternative formula (no 0.5 on traces)."""
    sx, sn, h = spec.sigma_x, spec.sigma_n, spec.h
    q, l = spec.q_dim, spec.l_dim
    try:
        ld = (np.linalg.slogdet(sx)[1] + np.linalg.slogdet(sn)[1]
              - np.linalg.slogdet(w.delta)[1] - 2 * r - np.linalg.slogdet(w.b_mat)[1])
    except np.linalg.LinAlgError:
        return math.nan
    sn_inv_b = np.linalg.solve(sn, w.b_mat)
    tr = (np.trace(np.linalg.solve(sx, w.a_mat)) + np.trace(sn_inv_b)
          + np.trace((sn_inv_b - np.eye(l)) @ h @ sx @ h.conj().T))
    return float(0.5 * ld + np.real(tr) - l - q)


# --------------------------------------------------------------------------
# discrete source exponent
# --------------------------------------------------------------------------

@dataclass
class DiscreteExponentResult:
    """Exponent value with the minimizing source (Q_X, U_S|X)."""

    value: float
    q_x: np.ndarray
    u_s_given_x: np.ndarray
    branch: str = "rate"

    def recompute(self, src):
        return (kl_divergence(self.q_x, src.p_x)
                + conditional_kl(self.u_s_given_x, src.p_s_given_x, self.q_x))


@functools.lru_cache(maxsize=16)
def _infeasibility_branch(src, d):
    """Cheapest (Q, U) making some budget unattainable, by convex programs.

    Returns (value, Q, U) or (inf, None, None). Both events are convex in
    the joint law J = Q x U: the semantic floor sum_x min_s_hat (J d_S)(x,
    s_hat) is concave in J, the observed floor is linear in Q.
    """
    import cvxpy as cp

    p_joint = src.p_x[:, None] * src.p_s_given_x
    sup = p_joint > 0
    n_x, n_s = p_joint.shape
    best = (math.inf, None, None)
    events = []
    if math.isfinite(d.d_s_max):
        events.append("semantic")
    if math.isfinite(d.d_x_max):
        events.append("observed")
    for ev in events:
        j = cp.Variable((n_x, n_s), nonneg=True)
        cons = [cp.sum(j) == 1, j[~sup] == 0] if (~sup).any() else [cp.sum(j) == 1]
        if ev == "semantic":
            t = cp.Variable(n_x)
            cons += [t[x] <= j[x, :] @ src.d_s[:, k]
                     for x in range(n_x) for k in range(src.d_s.shape[1])]
            cons.append(cp.sum(t) >= d.d_s_max)
        else:
            cons.append(cp.sum(j, axis=1) @ src.d_x.min(axis=1) >= d.d_x_max)
        obj = cp.sum(cp.rel_entr(j[sup], p_joint[sup]))
        prob = cp.Problem(cp.Minimize(obj), cons)
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.SolverError:
            prob.solve(solver=cp.SCS, eps=1e-10)
        if prob.status not in ("optimal", "optimal_inaccurate"):
            continue
        jv = np.maximum(np.asarray(j.value), 0.0)
        jv /= jv.sum()
        qx = jv.sum(axis=1)
        u = np.where(qx[:, None] > 0, jv / np.where(qx > 0, qx, 1)[:, None],
                     src.p_s_given_x)
        val = kl_divergence(qx, src.p_x) + conditional_kl(u, src.p_s_given_x, qx)
        if val < best[0]:
            best = (val, qx, u)
    return best


SHORTFALL_PRICE = 1e4
SHORTFALL_TOL = 1e-9


class _CertificateProgram:
    """Exponent problem with the rate-distortion multipliers held fixed.

    R(Q, U) >= r holds iff for some lam >= 0 and v
        sum_x Q(x) v(x) - lam . D >= r,
        sum_x Q(x) exp(v(x) - lam . d_U(x, y)) <= 1   for every output y.
    With J = Q x U and t = Q v, the second family is a perspective of exp in
    (t, J, Q), so for fixed lam the whole problem is an exponential-cone
    program. The outer search over lam (one or two scalars) is done by the
    caller.

    The rate inequality carries a slack with a large linear price. For r near
    the largest reachable rate the set of workable lam is a thin sliver, and
    the priced shortfall gives the outer search a slope to follow toward it;
    only solutions with zero shortfall are accepted as witnesses.

    The conic data is affine in (lam_s, lam_x, r), so it is assembled once
    and handed to Clarabel directly on every solve.
    """

    def __init__(self, src, d):
        self.src = src
        self.d = d
        self.sup = sup = src.p_s_given_x > 0
        n_x, n_s = sup.shape
        n_sh, n_xh = src.d_s.shape[1], src.d_x.shape[1]
        n_y = n_sh * n_xh
        p_joint = src.p_x[:, None] * src.p_s_given_x
        self.has_s = math.isfinite(d.d_s_max)
        self.has_x = math.isfinite(d.d_x_max)

        # variable layout: J (support cells), t, u, tau (one per cell), slack
        cells = [tuple(c) for c in np.argwhere(sup)]
        self.cells = cells
        n_j = len(cells)
        jx = {c: k for k, c in enumerate(cells)}
        o_t = n_j
        o_u = o_t + n_x
        o_tau = o_u + n_x * n_y
        o_sl = o_tau + n_j
        n_var = o_sl + 1
        self.n_j, self.o_tau, self.o_sl = n_j, o_tau, o_sl

        zero, nonneg, expc = [], [], []

        def row(a0=None, a_s=None, a_x=None, b=0.0):
            return (a0 or {}, a_s or {}, a_x or {}, b)

        zero.append(row({k: 1.0 for k in range(n_j)}, b=1.0))
        if not self.has_s:
            # U tied to P_S|X: J(x, s) - P(s|x) Q(x) = 0
            for (x, s) in cells:
                a = {}
                for (x2, s2) in cells:
                    if x2 == x:
                        a[jx[(x2, s2)]] = a.get(jx[(x2, s2)], 0.0) - src.p_s_given_x[x, s]
                a[jx[(x, s)]] = a.get(jx[(x, s)], 0.0) + 1.0
                zero.append(row(a))
        # rate: -sum t - slack <= -r - lam . D  (b filled per solve)
        a_rate = {o_t + x: -1.0 for x in range(n_x)}
        a_rate[o_sl] = -1.0
        nonneg.append(row(a_rate))
        self.rate_row = len(zero)
        for y in range(n_y):
            nonneg.append(row({o_u + x * n_y + y: 1.0 for x in range(n_x)}, b=1.0))
        for k in range(n_var):
            if o_t <= k < o_u or o_tau <= k < o_sl:
                continue
            nonneg.append(row({k: -1.0}))
        # certificate cones (arg, Q_x, u_xy); s = b - A v, so A = -coefficients
        for x in range(n_x):
            q_row = {jx[c]: -1.0 for c in cells if c[0] == x}
            for y in range(n_y):
                sh, xh = divmod(y, n_xh)
                a_s = {jx[c]: src.d_s[c[1], sh] for c in cells if c[0] == x}
                a_x = {jx[c]: src.d_x[x, xh] for c in cells if c[0] == x}
                expc.append(row({o_t + x: -1.0}, a_s if self.has_s else None,
                                a_x if self.has_x else None))
                expc.append(row(dict(q_row)))
                expc.append(row({o_u + x * n_y + y: -1.0}))
        # relative entropy epigraphs (-tau, J, p)
        for k, (x, s) in enumerate(cells):
            expc.append(row({o_tau + k: 1.0}))
            expc.append(row({k: -1.0}))
            expc.append(row(b=float(p_joint[x, s])))

        all_rows = zero + nonneg + expc
        self.rate_row = len(zero)
        mats = []
        for part in range(3):
            r_i, c_i, v_i = [], [], []
            for i, rw in enumerate(all_rows):
                for c, v in rw[part].items():
                    r_i.append(i)
                    c_i.append(c)
                    v_i.append(v)
            mats.append(sparse.csc_matrix((v_i, (r_i, c_i)), shape=(len(all_rows), n_var)))
        # one shared sparsity pattern so each solve only rescales data arrays
        pattern = (abs(mats[0]) + abs(mats[1]) + abs(mats[2])).tocsc()
        pattern.sort_indices()
        self.a_indices, self.a_indptr = pattern.indices, pattern.indptr
        self.a_shape = pattern.shape
        self.a_data = []
        for m in mats:
            m = m.tolil()
            self.a_data.append(np.array([m[i, j] for j in range(n_var)
                                         for i in pattern.indices[pattern.indptr[j]:pattern.indptr[j + 1]]]))
        self.b0 = np.array([rw[3] for rw in all_rows])
        self.q = np.zeros(n_var)
        self.q[o_tau:o_sl] = 1.0
        self.q[o_sl] = SHORTFALL_PRICE
        self.p_mat = sparse.csc_matrix((n_var, n_var))
        self.cones = ([clarabel.ZeroConeT(len(zero)), clarabel.NonnegativeConeT(len(nonneg))]
                      + [clarabel.ExponentialConeT()] * (len(expc) // 3))
        self.settings = clarabel.DefaultSettings()
        self.settings.verbose = False
        self.shape = (n_x, n_s)

    def value(self, lam, r):
        """(priced objective, divergence, shortfall, J) at multipliers ``lam``."""
        ls = lam[0] if self.has_s else 0.0
        lx = lam[1] if self.has_x else 0.0
        data = self.a_data[0] + ls * self.a_data[1] + lx * self.a_data[2]
        a = sparse.csc_matrix((data, self.a_indices, self.a_indptr), shape=self.a_shape)
        b = self.b0.copy()
        b[self.rate_row] = -r - (ls * self.d.d_s_max if self.has_s else 0.0) \
            - (lx * self.d.d_x_max if self.has_x else 0.0)
        sol = clarabel.DefaultSolver(self.p_mat, self.q, a, b, self.cones,
                                     self.settings).solve()
        if str(sol.status) not in ("Solved", "AlmostSolved"):
            return math.inf, math.inf, math.inf, None
        x = np.asarray(sol.x)
        joint = np.zeros(self.shape)
        for k, c in enumerate(self.cells):
            joint[c] = max(x[k], 0.0)
        div = float(np.sum(x[self.o_tau:self.o_sl]))
        short = max(0.0, float(x[self.o_sl]))
        return div + SHORTFALL_PRICE * short, div, short, joint


_PROGRAMS = threading.local()


def _certificate_program(src, d):
    """Per-thread cache: a compiled cvxpy problem is not safe to share."""
    cache = getattr(_PROGRAMS, "cache", None)
    if cache is None:
        cache = _PROGRAMS.cache = {}
    key = (id(src), d)
    if key not in cache or cache[key].src is not src:
        if len(cache) >= 16:
            cache.pop(next(iter(cache)))
        cache[key] = _CertificateProgram(src, d)
    return cache[key]


def _lam_search(f, dims, lo=-4.0, hi=4.0, n=17, n_refine=2):
    """Minimize f over lam in R_+^dims: log grid, then local refinement from
    the best few grid cells (the landscape has several valleys).

    Works in log10(lam); the multiplier of a relaxed budget stays at 0.
    """
    axis = np.linspace(lo, hi, n)
    if dims == 0:
        return f()
    if dims == 1:
        vals = np.array([f(10.0 ** a) for a in axis])
        order = [i for i in np.argsort(vals) if math.isfinite(vals[i])][:n_refine]
        best = min((vals[i] for i in order), default=math.inf)
        for i in order:
            a, b = axis[max(i - 1, 0)], axis[min(i + 1, n - 1)]
            res = optimize.minimize_scalar(lambda z: f(10.0 ** z), bounds=(a, b),
                                           method="bounded", options={"xatol": 1e-9})
            best = min(best, float(res.fun))
        return best
    # faces first: a budget that does not bind has multiplier exactly 0
    best = min(_lam_search(lambda x: f(x, 0.0), 1, lo, hi, n, n_refine),
               _lam_search(lambda x: f(0.0, x), 1, lo, hi, n, n_refine))
    axis = np.linspace(lo, hi, (n + 1) // 2)
    g = np.array([[f(10.0 ** a, 10.0 ** b) for b in axis] for a in axis])
    flat = [k for k in np.argsort(g, axis=None) if math.isfinite(g.flat[k])][:n_refine]
    best = min([best] + [g.flat[k] for k in flat])
    for k in flat:
        i, j = np.unravel_index(k, g.shape)
        res = optimize.minimize(lambda z: f(10.0 ** z[0], 10.0 ** z[1]),
                                [axis[i], axis[j]], method="Nelder-Mead",
                                options={"xatol": 1e-5, "fatol": 1e-12,
                                         "initial_simplex": [[axis[i], axis[j]],
                                                             [axis[i] + 0.5, axis[j]],
                                                             [axis[i], axis[j] + 0.5]],
                                         "maxiter": 150})
        best = min(best, float(res.fun))
    return best


def _clean(qx, u, sup, p_sx):
    qx = np.maximum(qx, 0.0)
    qx = qx / qx.sum()
    u = np.where(sup, np.maximum(u, 0.0), 0.0)
    rs = u.sum(axis=1, keepdims=True)
    u = np.where(rs > 0, u / np.where(rs > 0, rs, 1.0), p_sx)
    return qx, u


def _rate_of(src, qx, u, d):
    try:
        return semantic_rd_discrete(src.with_(p_x=qx, p_s_given_x=u), d).value
    except InfeasibleDistortionError:
        return math.inf


def source_exponent_discrete(src, query, tol=1e-9):
    """Semantic source excess-distortion exponent of a discrete source (nats).

    Parameters
    ----------
    src : DiscreteSemanticSource
    query : SourceExponentQuery
    tol : float
        Rates within ``tol`` of R(P_X, P_S|X) count as already achieved.

    Returns
    -------
    DiscreteExponentResult
        ``value`` is ``math.inf`` when no source law reaches the rate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = query.distortions
    r = query.rate_threshold
    r0 = semantic_rd_discrete(src, d).value
    if r <= r0 + tol:
        return DiscreteExponentResult(0.0, np.array(src.p_x),
                                      np.array(src.p_s_given_x), "zero")
    inf_val, inf_q, inf_u = _infeasibility_branch(src, d)
    prog = _certificate_program(src, d)
    dims = int(prog.has_s) + int(prog.has_x)
    best = [math.inf, None]

    def f(*lam):
        val, div, short, joint = prog.value(_expand(lam, prog.has_s, prog.has_x), r)
        if short <= SHORTFALL_TOL * max(1.0, r) and div < best[0]:
            best[:] = [div, joint]
        return val

    _lam_search(f, dims)
    if best[1] is not None and best[0] < inf_val:
        joint = best[1]
        qx = joint.sum(axis=1)
        u = np.where(qx[:, None] > 0, joint / np.where(qx > 0, qx, 1.0)[:, None],
                     src.p_s_given_x)
        qx, u = _clean(qx, u, prog.sup, src.p_s_given_x)
        value = (kl_divergence(qx, src.p_x)
                 + conditional_kl(u, src.p_s_given_x, qx))
        return DiscreteExponentResult(value, qx, u, "rate")
    if inf_q is not None:
        return DiscreteExponentResult(inf_val, inf_q, inf_u, "infeasible")
    return DiscreteExponentResult(math.inf, np.array(src.p_x),
                                  np.array(src.p_s_given_x), "unreachable")


def _expand(lam, has_s, has_x):
    it = iter(lam)
    return (next(it) if has_s else 0.0, next(it) if has_x else 0.0)
