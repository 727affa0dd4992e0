"""Rate-distortion functions with a semantic and an observed fidelity constraint.

The discrete solver works on the joint reconstruction alphabet
``(s_hat, x_hat)``. The semantic distortion is lifted to the observed
alphabet, ``d_hat(x, s_hat) = E[d_S(S, s_hat) | X = x]``, and the
two-constraint problem is solved through its Lagrange dual: for fixed
multipliers the inner minimization is a single Blahut-Arimoto run on the
combined distortion, and the concave dual is maximized by nested root
finding on its gradient (expected distortion minus budget).

The Gaussian solver handles quadratic distortion for ``S = h X + N``.
"""

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .prob import (
    BA_MAX_ITER,
    ConvergenceError,
    as_channel,
    as_distortion,
    as_distribution,
    mutual_information,
)

INFEASIBILITY_MARGIN = 1e-12


class InfeasibleDistortionError(ValueError):
    """A distortion budget lies below what any code can achieve."""

    def __init__(self, constraint, budget, floor):
        super().__init__(
            f"{constraint} distortion budget {budget:.6g} is below the "
            f"achievable floor {floor:.6g}"
        )
        self.constraint = constraint
        self.budget = budget
        self.floor = floor


class UnsupportedStructureError(NotImplementedError):
    pass


@dataclass(frozen=True)
class DistortionPair:
    """Semantic and observed distortion budgets; ``math.inf`` relaxes one."""

    d_s_max: float
    d_x_max: float

    def __post_init__(self):
        for name in ("d_s_max", "d_x_max"):
            v = float(getattr(self, name))
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0 (inf allowed), got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True, eq=False)
class DiscreteSemanticSource:
    """Observed source ``X ~ p_x`` with hidden state ``S ~ p_s_given_x(.|X)``.

    ``d_s`` is indexed (s, s_hat) and ``d_x`` is indexed (x, x_hat).
    """

    p_x: np.ndarray
    p_s_given_x: np.ndarray
    d_s: np.ndarray
    d_x: np.ndarray

    def __post_init__(self):
        p_x = as_distribution(self.p_x, "p_x")
        p_sx = as_channel(self.p_s_given_x, "p_s_given_x")
        d_s = as_distortion(self.d_s, "d_s")
        d_x = as_distortion(self.d_x, "d_x")
        if p_sx.shape[0] != p_x.size:
            raise ValueError("p_s_given_x rows must match |X|")
        if d_s.shape[0] != p_sx.shape[1]:
            raise ValueError("d_s rows must match |S|")
        if d_x.shape[0] != p_x.size:
            raise ValueError("d_x rows must match |X|")
        object.__setattr__(self, "p_x", p_x)
        object.__setattr__(self, "p_s_given_x", p_sx)
        object.__setattr__(self, "d_s", d_s)
        object.__setattr__(self, "d_x", d_x)

    @property
    def sizes(self):
        """(|X|, |S|, |S_hat|, |X_hat|)."""
        return (self.p_x.size, self.p_s_given_x.shape[1],
                self.d_s.shape[1], self.d_x.shape[1])

    def with_(self, **changes):
        kw = dict(p_x=self.p_x, p_s_given_x=self.p_s_given_x,
                  d_s=self.d_s, d_x=self.d_x)
        kw.update(changes)
        return DiscreteSemanticSource(**kw)


def lift_semantic_distortion(src, p_s_given_x=None):
    """Table d_hat(x, s_hat) = sum_s P(s|x) d_S(s, s_hat).

    ``p_s_given_x`` overrides the source's own conditional law, which is how
    the source exponent evaluates alternative conditionals.
    """
    u = src.p_s_given_x if p_s_given_x is None else np.asarray(p_s_given_x, float)
    return u @ src.d_s


def joint_distortions(src, p_s_given_x=None):
    """Semantic and observed distortion on the joint alphabet.

    Column ``i * |X_hat| + j`` stands for the pair (s_hat=i, x_hat=j).
    """
    d_hat = lift_semantic_distortion(src, p_s_given_x)
    n_sh, n_xh = d_hat.shape[1], src.d_x.shape[1]
    ds = np.repeat(d_hat, n_xh, axis=1)
    dx = np.tile(src.d_x, (1, n_sh))
    return ds, dx


@dataclass
class RDResult:
    """Rate (nats) plus the achieving test channel on the joint alphabet."""

    value: float
    test_channel: np.ndarray
    multipliers: tuple
    distortions: tuple
    dual_value: float = math.nan
    active: tuple = field(default_factory=tuple)
    primal_value: float = math.nan

    @property
    def gap(self):
        """Rate of the returned channel minus the certified dual bound."""
        return self.primal_value - self.dual_value


class _InnerBA:
    """Blahut-Arimoto for ``min_q I + E[d]`` with warm starts.

    Works with row-shifted distortions so that ``exp(-d)`` never underflows
    across a whole row.
    """

    def __init__(self, p, tol=1e-13):
        self.p = p
        self.tol = tol
        self.r = None

    def _ba(self, a, r, iters):
        p = self.p
        for _ in range(iters):
            c = (p / (a @ r)) @ a
            if math.log(c.max()) < self.tol:
                break
            r = r * c
            r /= r.sum()
        return r

    def _active_set_newton(self, a, r):
        """Newton steps on the support of ``r`` for ``min -sum p ln(a r)``.

        Blahut-Arimoto crawls when the optimum sits on a face of the simplex;
        here coordinates are dropped when a step would make them negative
        and re-admitted when their KKT multiplier says so.
        """
        p = self.p
        r = r.copy()
        r[r < 1e-12 * r.max()] = 0.0
        r /= r.sum()
        f = lambda v: -float(p @ np.log(a @ v))
        for _ in range(200):
            sup = np.nonzero(r > 0)[0]
            z = a @ r
            c = (p / z) @ a
            if math.log(c.max()) < self.tol:
                break
            out = np.setdiff1d(np.arange(r.size), sup)
            a_s = a[:, sup]
            g = -c[sup]
            h = a_s.T @ ((p / z**2)[:, None] * a_s)
            n = sup.size
            kkt = np.zeros((n + 1, n + 1))
            kkt[:n, :n] = h
            kkt[:n, n] = kkt[n, :n] = 1.0
            sol = np.linalg.lstsq(kkt, np.r_[-g, 0.0], rcond=None)[0]
            step = sol[:n]
            dec = -float(g @ step)
            if dec < 1e-15 and out.size:
                # stationary on this face: admit the most violated coordinate
                j = out[np.argmax(c[out])]
                if c[j] <= 1.0:
                    break
                r = (1 - 1e-3) * r
                r[j] = 1e-3
                continue
            neg = step < 0
            ratio = np.full(n, np.inf)
            ratio[neg] = -r[sup][neg] / step[neg]
            alpha = min(1.0, ratio.min())
            f0 = f(r)
            t = alpha
            while t > 1e-12:
                trial = r.copy()
                trial[sup] += t * step
                if t == alpha and alpha < 1.0:
                    trial[sup[np.argmin(ratio)]] = 0.0
                trial[trial < 1e-14] = 0.0
                trial /= trial.sum()
                if np.all(a @ trial > 0) and f(trial) <= f0 - 1e-4 * t * dec:
                    break
                t *= 0.5
            else:
                # no decrease along the face: drop the smallest coordinate
                if n == 1:
                    break
                trial = r.copy()
                trial[sup[np.argmin(r[sup])]] = 0.0
                trial /= trial.sum()
                if f(trial) > f0 + 1e-15:
                    break
            r = trial
        return r

    def solve(self, d, r0=None):
        p = self.p
        dmin = d.min(axis=1)
        a = np.exp(-(d - dmin[:, None]))
        m = d.shape[1]
        if r0 is not None:
            r = 0.999999 * r0 + 1e-6 / m
        elif self.r is None or self.r.size != m:
            r = np.full(m, 1.0 / m)
        else:
            r = 0.999 * self.r + 0.001 / m
        r = self._ba(a, r, 300)
        z = a @ r
        gap = math.log(((p / z) @ a).max())
        if gap >= self.tol:
            r = self._active_set_newton(a, r)
            r = self._ba(a, r, BA_MAX_ITER)
            z = a @ r
            gap = math.log(((p / z) @ a).max())
            # rounding can pin the certificate a little above tol
            if gap > 1e-7:
                raise ConvergenceError("inner Blahut-Arimoto stalled", gap)
        self.r = r
        q = r[None, :] * a / z[:, None]
        upper = float(-(p @ np.log(z)) + p @ dmin)
        return upper - 0.5 * gap, q


def _solve_discrete_rd(p, tables, budgets, tol=1e-10):
    """Minimize I(p, q) subject to E[tables[k]] <= budgets[k].

    Infinite budgets must be filtered out by the caller. Returns an RDResult
    on the joint alphabet given by the table columns.
    """
    k = len(tables)
    m = tables[0].shape[1] if k else 1
    floors = [float(p @ t.min(axis=1)) for t in tables]

    # zero rate: a single output symbol (or mixture) meeting every budget
    col_means = np.array([p @ t for t in tables]) if k else np.zeros((0, m))
    ok = np.all(col_means <= np.asarray(budgets)[:, None] + 1e-15, axis=0) if k else np.ones(m, bool)
    if np.any(ok):
        j = int(np.argmax(ok))
        q = np.zeros((p.size, m))
        q[:, j] = 1.0
        return RDResult(0.0, q, (0.0,) * k, tuple(col_means[:, j]), 0.0, (), 0.0)

    lams, q_cone = _primal_multipliers(p, tables, budgets)
    # complementary slackness: solver noise on slack constraints is dropped
    for i, (t, b) in enumerate(zip(tables, budgets)):
        slack = b - float(np.sum(p[:, None] * q_cone * t))
        if slack > 1e-7 * max(1.0, b) and lams[i] < 1e-5:
            lams[i] = 0.0
    inner = _InnerBA(p, tol=tol)
    d_comb = sum(l * t for l, t in zip(lams, tables))
    phi, q = inner.solve(d_comb, r0=p @ q_cone)
    dual = phi - sum(l * b for l, b in zip(lams, budgets))
    # the dual value is the rate; a feasible channel certifies it from above
    cands = [_restore_feasibility(p, c, tables, budgets, floors) for c in (q, q_cone)]
    rates = [mutual_information(p, c) for c in cands]
    best = int(np.argmin(rates))
    q, rate = cands[best], rates[best]
    dist = tuple(float(np.sum(p[:, None] * q * t)) for t in tables)
    active = tuple(i for i, l in enumerate(lams) if l > 0)
    return RDResult(max(dual, 0.0), q, tuple(lams), dist, max(dual, 0.0),
                    active, rate)


_PROGRAMS = threading.local()


def _rd_program(n, m, k):
    """Compiled cone program for given alphabet sizes, reused across calls.

    Cached per thread because solving writes into the parameter objects.
    """
    import cvxpy as cp

    cache = getattr(_PROGRAMS, "cache", None)
    if cache is None:
        cache = _PROGRAMS.cache = {}
    key = (n, m, k)
    if key not in cache:
        p_par = cp.Parameter(n, nonneg=True)
        t_pars = [cp.Parameter((n, m), nonneg=True) for _ in range(k)]
        b_pars = [cp.Parameter(nonneg=True) for _ in range(k)]
        joint = cp.Variable((n, m), nonneg=True)
        out = cp.sum(joint, axis=0)
        indep = cp.reshape(p_par, (n, 1), order="C") @ cp.reshape(out, (1, m), order="C")
        dcons = [cp.sum(cp.multiply(joint, t)) <= b for t, b in zip(t_pars, b_pars)]
        prob = cp.Problem(cp.Minimize(cp.sum(cp.rel_entr(joint, indep))),
                          [cp.sum(joint, axis=1) == p_par] + dcons)
        cache[key] = (prob, joint, p_par, t_pars, b_pars, dcons)
    return cache[key]


def _primal_multipliers(p, tables, budgets):
    """Lagrange multipliers of ``min I(p, q)`` s.t. ``E[t_k] <= b_k``.

    The primal is a small relative-entropy cone program. Only its dual
    variables are kept: plugging them into the Lagrangian gives a certified
    lower bound, and the inner minimization supplies the channel.
    """
    import cvxpy as cp

    keep = p > 0
    pk = p[keep]
    n, m = pk.size, tables[0].shape[1]
    prob, joint, p_par, t_pars, b_pars, dcons = _rd_program(n, m, len(tables))
    p_par.value = pk
    for tp, bp, t, b in zip(t_pars, b_pars, tables, budgets):
        tp.value = np.asarray(t[keep])
        bp.value = float(b)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-9)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise ConvergenceError(f"rate-distortion program ended with status {prob.status}")
    q = np.full((p.size, m), 1.0 / m)
    q[keep] = np.maximum(np.asarray(joint.value), 0.0) / pk[:, None]
    q /= q.sum(axis=1, keepdims=True)
    return [max(0.0, float(c.dual_value)) for c in dcons], q


def _restore_feasibility(p, q, tables, budgets, floors):
    """Mix ``q`` toward a minimum-distortion channel until every budget holds."""
    excess = []
    for t, b, f in zip(tables, budgets, floors):
        e = float(np.sum(p[:, None] * q * t))
        if e > b:
            excess.append((e - b) / max(e - f, 1e-300))
    if not excess:
        return q
    theta = min(1.0, max(excess) * (1 + 1e-9) + 1e-15)
    # a channel sitting on a joint argmin of all tables exists because the
    # semantic and observed parts of the joint alphabet decouple
    total = sum(tables)
    qmin = np.zeros_like(q)
    for x in range(q.shape[0]):
        cand = np.ones(q.shape[1], bool)
        for t in tables:
            cand &= t[x] <= t[x].min() + 1e-15
        j = int(np.argmax(cand)) if cand.any() else int(np.argmin(total[x]))
        qmin[x, j] = 1.0
    return (1 - theta) * q + theta * qmin


def semantic_rd_discrete(src, d, tol=1e-10):
    """Semantic rate-distortion function R(P_X, P_S|X, D_s, D_x) in nats.

    Parameters
    ----------
    src : DiscreteSemanticSource
    d : DistortionPair
        Infinite budgets drop the matching constraint.
    tol : float
        Target accuracy of the returned rate.

    Returns
    -------
    RDResult
        ``test_channel[x, i * |X_hat| + j]`` is P(s_hat=i, x_hat=j | x).

    Raises
    ------
    InfeasibleDistortionError
        When a budget is below the smallest achievable expected distortion.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _rd_from_tables(src.p_x, *joint_distortions(src), d, tol)


def _rd_from_tables(p, ds, dx, d, tol=1e-10):
    p = np.asarray(p, dtype=float)
    tables, budgets = [], []
    for name, t, b in (("semantic", ds, d.d_s_max), ("observed", dx, d.d_x_max)):
        floor = float(p @ t.min(axis=1))
        if b < floor - INFEASIBILITY_MARGIN:
            raise InfeasibleDistortionError(name, b, floor)
        if math.isfinite(b):
            tables.append(t)
            budgets.append(b)
    if not tables:
        m = ds.shape[1]
        q = np.zeros((p.size, m))
        q[:, 0] = 1.0
        return RDResult(0.0, q, (), (), 0.0, (), 0.0)
    res = _solve_discrete_rd(p, tables, budgets, tol)
    # report multipliers in (semantic, observed) order with zeros for relaxed
    lam = iter(res.multipliers)
    res.multipliers = tuple(next(lam) if math.isfinite(b) else 0.0
                            for b in (d.d_s_max, d.d_x_max))
    return res


def rate_distortion(p, dist, budget, tol=1e-10):
    """Classic single-constraint R(D) of a finite source, in nats."""
    p = np.asarray(p, dtype=float)
    dist = np.asarray(dist, dtype=float)
    return _rd_from_tables(p, dist, np.zeros_like(dist),
                           DistortionPair(budget, math.inf), tol).value


# --------------------------------------------------------------------------
# Gaussian sources
# --------------------------------------------------------------------------

HERMITIAN_TOL = 1e-10


def _hermitian(a, name):
    a = np.atleast_2d(np.asarray(a))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError(f"{name} is not Hermitian")
    return a


@dataclass(frozen=True, eq=False)
class GaussianSourceSpec:
    """``X ~ N(0, sigma_x)`` in C^q and ``S = h X + N`` with ``N ~ N(0, sigma_n)``."""

    sigma_x: np.ndarray
    h: np.ndarray
    sigma_n: np.ndarray

    def __post_init__(self):
        sx = _hermitian(self.sigma_x, "sigma_x")
        sn = _hermitian(self.sigma_n, "sigma_n")
        h = np.atleast_2d(np.asarray(self.h))
        if h.shape != (sn.shape[0], sx.shape[0]):
            raise ValueError(f"h must be {sn.shape[0]}x{sx.shape[0]}, got {h.shape}")
        if np.linalg.eigvalsh(sx).min() < -HERMITIAN_TOL:
            raise ValueError("sigma_x must be positive semidefinite")
        if np.linalg.eigvalsh(sn).min() <= 0:
            raise ValueError("sigma_n must be positive definite")
        for name, v in (("sigma_x", sx), ("h", h), ("sigma_n", sn)):
            v = np.array(v)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def isotropic(cls, q, l, var_x, var_n, h_gain=1.0):
        """Isotropic source with ``h = h_gain * [I | 0]`` style embedding."""
        h = np.zeros((l, q))
        k = min(l, q)
        h[:k, :k] = np.eye(k) * h_gain
        return cls(var_x * np.eye(q), h, var_n * np.eye(l))

    @property
    def q_dim(self):
        return self.sigma_x.shape[0]

    @property
    def l_dim(self):
        return self.sigma_n.shape[0]

    @property
    def gram(self):
        """h^H h, the q x q matrix weighting semantic distortion."""
        return self.h.conj().T @ self.h

    def isotropic_params(self, tol=1e-10):
        """(var_x, var_n, c) if sigma_x, sigma_n and h^H h are scalar
        multiples of identities, else None."""
        sx, sn, g = self.sigma_x, self.sigma_n, self.gram
        vx = float(np.real(np.trace(sx))) / self.q_dim
        vn = float(np.real(np.trace(sn))) / self.l_dim
        c = float(np.real(np.trace(g))) / self.q_dim
        iq, il = np.eye(self.q_dim), np.eye(self.l_dim)
        if (np.abs(sx - vx * iq).max() < tol and np.abs(sn - vn * il).max() < tol
                and np.abs(g - c * iq).max() < tol):
            return vx, vn, c
        return None

    def commutes(self, tol=1e-9):
        g, sx = self.gram, self.sigma_x
        return np.abs(g @ sx - sx @ g).max() <= tol * max(1.0, np.abs(sx).max())


@dataclass
class GaussianRDResult:
    """Rate plus the achieving error covariance ``delta`` (with A = sigma_x,
    B = sigma_n at the true source)."""

    value: float
    delta: np.ndarray
    a_mat: np.ndarray
    b_mat: np.ndarray


def semantic_budget(spec, d):
    """Budget left for ``tr(h Delta h^H)`` once the noise floor is paid."""
    floor = float(np.real(np.trace(spec.sigma_n)))
    if not d.d_s_max > floor + INFEASIBILITY_MARGIN:
        raise InfeasibleDistortionError("semantic", d.d_s_max, floor)
    if not d.d_x_max > 0:
        raise InfeasibleDistortionError("observed", d.d_x_max, 0.0)
    return d.d_s_max - floor


def _waterfill(var, gains, ds_budget, dx_budget):
    """Maximize sum ln(delta_i) with delta_i <= var_i, sum g_i delta_i <= Ds,
    sum delta_i <= Dx. Returns the optimal delta vector.

    KKT gives ``delta_i = min(var_i, 1 / (2 (mu_s g_i + mu_x)))``.
    """
    var = np.asarray(var, float)
    gains = np.asarray(gains, float)

    def delta(mu_s, mu_x):
        w = 2.0 * (mu_s * gains + mu_x)
        with np.errstate(divide="ignore"):
            return np.minimum(var, np.where(w > 0, 1.0 / w, np.inf))

    def best_mu_x(mu_s):
        if not math.isfinite(dx_budget):
            return 0.0
        f = lambda mx: delta(mu_s, mx).sum() - dx_budget
        if f(0.0) <= 0:
            return 0.0
        hi = 1.0
        while f(hi) > 0:
            hi *= 4
        return optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-15)

    if math.isfinite(ds_budget):
        g = lambda ms: gains @ delta(ms, best_mu_x(ms)) - ds_budget
        if g(0.0) <= 0:
            mu_s = 0.0
        else:
            hi = 1.0
            while g(hi) > 0:
                hi *= 4
            mu_s = optimize.brentq(g, 0.0, hi, xtol=1e-300, rtol=1e-15)
    else:
        mu_s = 0.0
    return delta(mu_s, best_mu_x(mu_s))


def semantic_rd_gaussian(spec, d):
    """Semantic rate-distortion function of a Gaussian vector source (nats).

    Minimizes ``0.5 ln det(sigma_x) / det(Delta)`` over error covariances
    ``0 < Delta <= sigma_x`` with ``tr(h Delta h^H) <= D_s - tr(sigma_n)``
    and ``tr(Delta) <= D_x``.

    When ``sigma_x`` and ``h^H h`` commute the problem decouples in their
    joint eigenbasis and is solved by two-multiplier reverse water-filling.
    The general case goes to a log-det convex program.
    """
    ds_budget = semantic_budget(spec, d)
    if spec.commutes():
        sx, g = spec.sigma_x, spec.gram
        # joint eigenbasis: diagonalize a generic combination
        mix = sx + math.pi * g
        _, u = np.linalg.eigh(mix)
        var = np.real(np.diag(u.conj().T @ sx @ u))
        gains = np.real(np.diag(u.conj().T @ g @ u))
        pos = var > 0
        dl = np.zeros_like(var)
        dl[pos] = _waterfill(var[pos], gains[pos], ds_budget, d.d_x_max)
        value = 0.5 * float(np.sum(np.log(var[pos] / dl[pos])))
        delta = (u * dl) @ u.conj().T
    else:
        delta = _logdet_program(spec, ds_budget, d.d_x_max)
        ev = np.linalg.eigvalsh(delta)
        value = 0.5 * float(np.linalg.slogdet(spec.sigma_x)[1] - np.sum(np.log(ev)))
    return GaussianRDResult(max(value, 0.0), delta, np.array(spec.sigma_x),
                            np.array(spec.sigma_n))


def _logdet_program(spec, ds_budget, dx_budget):
    import cvxpy as cp

    if np.iscomplexobj(spec.sigma_x) or np.iscomplexobj(spec.h):
        raise UnsupportedStructureError("non-commuting complex sources")
    q = spec.q_dim
    delta = cp.Variable((q, q), symmetric=True)
    cons = [spec.sigma_x - delta >> 0,
            cp.trace(spec.gram @ delta) <= ds_budget]
    if math.isfinite(dx_budget):
        cons.append(cp.trace(delta) <= dx_budget)
    prob = cp.Problem(cp.Maximize(cp.log_det(delta)), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-9)
    if prob.status not in ("optimal", "optimal_inaccurate") or delta.value is None:
        raise ConvergenceError(f"log-det program ended with status {prob.status}")
    return np.array(delta.value)
