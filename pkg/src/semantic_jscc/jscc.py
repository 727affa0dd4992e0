"""Joint source-channel excess-distortion exponents.

For a code rate R in nats per channel use and t source symbols per channel
use, the JSCC exponent is bounded by

    min_{R in [t R(D), C]}  t E_src(R / t) + E_ch(R)

with E_ch the sphere-packing exponent (upper bound) or the expurgated
exponent (lower bound). Both summands are convex in R, so a grid search
refined around the grid minimum finds the global minimum.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .dmc import expurgated_dmc, sphere_packing_dmc
from .mimo import MimoChannelSpec, channel_exponent_mimo, ergodic_capacity
from .prob import as_channel, dmc_capacity, kl_divergence
from .ratedist import (
    DiscreteSemanticSource,
    GaussianSourceSpec,
    InfeasibleDistortionError,
    rate_distortion,
    semantic_rd_discrete,
    semantic_rd_gaussian,
)
from .source import (
    SourceExponentQuery,
    source_exponent_discrete,
    source_exponent_gaussian,
)

DEFAULT_GRID = 64
CONVEXITY_TOL = -1e-6
DEFAULT_SAMPLES = 100_000


@dataclass(frozen=True, eq=False)
class JsccProblem:
    """Source, channel, distortion budgets and transmission rate t = k / n.

    A discrete source pairs with a channel matrix, a Gaussian source with a
    MimoChannelSpec.
    """

    source: object
    channel: object
    distortions: object
    trans_rate: float

    def __post_init__(self):
        if not self.trans_rate > 0:
            raise ValueError("transmission rate t must be > 0")
        if isinstance(self.source, DiscreteSemanticSource):
            if isinstance(self.channel, MimoChannelSpec):
                raise TypeError("a discrete source needs a DMC channel matrix")
            object.__setattr__(self, "channel", as_channel(self.channel))
        elif isinstance(self.source, GaussianSourceSpec):
            if not isinstance(self.channel, MimoChannelSpec):
                raise TypeError("a Gaussian source needs a MimoChannelSpec channel")
        else:
            raise TypeError(f"unsupported source type {type(self.source).__name__}")

    @property
    def is_discrete(self):
        return isinstance(self.source, DiscreteSemanticSource)

    def with_(self, **changes):
        kw = dict(source=self.source, channel=self.channel,
                  distortions=self.distortions, trans_rate=self.trans_rate)
        kw.update(changes)
        return JsccProblem(**kw)


@dataclass(frozen=True)
class FeasibleInterval:
    """[R_lo, R_hi] in nats per channel use; ``empty`` when t R(D) > C."""

    lo: float
    hi: float
    std_error: float = 0.0

    @property
    def empty(self):
        return self.lo > self.hi


@dataclass(frozen=True)
class ExponentCurve:
    points: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        rates = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("curve rates must be strictly increasing")

    @property
    def rates(self):
        return np.array([p[0] for p in self.points])

    @property
    def values(self):
        return np.array([p[1] for p in self.points])


@dataclass(frozen=True)
class JsccExponentReport:
    interval: FeasibleInterval
    curve: ExponentCurve
    r_star: float
    e_star: float
    rho_star: float = math.nan
    delta_star: float = math.nan
    bound_kind: str = "achievable"
    converse: bool = False
    std_error: float = 0.0
    smoothed: tuple = None  # (R, E) after median smoothing, Monte Carlo only


def _source_rate(prob):
    if prob.is_discrete:
        return semantic_rd_discrete(prob.source, prob.distortions).value
    return semantic_rd_gaussian(prob.source, prob.distortions).value


def feasible_interval(prob, n_samples=DEFAULT_SAMPLES, seed=0):
    """Code rates between t R(D_s, D_x) and the channel capacity.

    The MIMO upper end is the Monte Carlo ergodic capacity.
    """
    lo = prob.trans_rate * _source_rate(prob)
    if prob.is_discrete:
        return FeasibleInterval(lo, dmc_capacity(prob.channel))
    cap = ergodic_capacity(prob.channel, n_samples, seed)
    return FeasibleInterval(lo, cap.value, cap.std_error)


def _rate_grid(lo, hi, n):
    """n rates on [lo, hi], denser toward lo where the source term is steep."""
    if n < 2 or hi <= lo:
        return np.array([lo])
    u = np.r_[0.0, np.geomspace(1e-3, 1.0, n - 1)]
    return np.unique(lo + (hi - lo) * u)


def _median3(v):
    v = np.asarray(v, dtype=float)
    out = v.copy()
    for i in range(1, v.size - 1):
        out[i] = np.median(v[i - 1:i + 2])
    return out


def _minimize(obj, rates, smooth=False):
    """Grid argmin of obj refined between the neighbouring grid points.

    Returns (curve values, R*, E*, smoothed (R, E) or None).
    """
    vals = np.array([obj(r) for r in rates])
    smoothed = None
    guide = vals
    if smooth and vals.size >= 3:
        guide = _median3(vals)
        k = int(np.argmin(guide))
        smoothed = (float(rates[k]), float(guide[k]))
    i = int(np.argmin(guide))
    r_best, e_best = float(rates[i]), float(vals[i])
    if rates.size > 1 and math.isfinite(vals[i]):
        a, b = rates[max(i - 1, 0)], rates[min(i + 1, rates.size - 1)]
        # golden-section steps with parabolic acceleration (Brent)
        res = optimize.minimize_scalar(obj, bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-7 * max(1.0, b)})
        if res.fun < e_best:
            r_best, e_best = float(res.x), float(res.fun)
    return vals, r_best, e_best, smoothed


def _problem_hash(prob, *extra):
    h = hashlib.sha256()
    for part in (prob.source, prob.distortions, prob.trans_rate) + extra:
        h.update(repr(part).encode())
    if prob.is_discrete:
        h.update(np.asarray(prob.channel).tobytes())
    else:
        h.update(repr(prob.channel).encode())
    return h.hexdigest()[:16]


def _empty_report(interval, kind, meta):
    return JsccExponentReport(interval, ExponentCurve((), meta), math.nan, 0.0,
                              bound_kind=kind, converse=True)


class _SourceTerm:
    """R -> t E_src(R / t), memoized (shared by both bounds)."""

    def __init__(self, prob):
        self.prob = prob
        self.cache = {}

    def __call__(self, rate):
        if rate not in self.cache:
            p, t = self.prob, self.prob.trans_rate
            query = SourceExponentQuery(max(rate, 0.0) / t, p.distortions)
            if p.is_discrete:
                e = source_exponent_discrete(p.source, query).value
            else:
                e = source_exponent_gaussian(p.source, query).value
            self.cache[rate] = t * e
        return self.cache[rate]


def jscc_bounds_dmc(prob, grid=DEFAULT_GRID, tol=1e-9):
    """Upper (sphere-packing) and lower (expurgated) JSCC exponent reports.

    The bounds share one source-term evaluation per rate.
    """
    if not prob.is_discrete:
        raise TypeError("jscc_bounds_dmc needs a discrete source and a DMC")
    interval = feasible_interval(prob)
    meta = {"problem": _problem_hash(prob), "method": "closed", "seed": None}
    if interval.empty:
        return _empty_report(interval, "upper", meta), _empty_report(interval, "lower", meta)
    src_term = _SourceTerm(prob)
    floor = max(interval.lo, 1e-9 * interval.hi)
    return tuple(_dmc_report(prob, interval, src_term, kind, grid, floor, meta)
                 for kind in ("upper", "lower"))


def _dmc_report(prob, interval, src_term, kind, grid, floor, meta):
    w = prob.channel
    chan = sphere_packing_dmc if kind == "upper" else expurgated_dmc

    def obj(rate):
        rate = min(max(rate, floor), interval.hi)
        return src_term(rate) + chan(w, rate).value

    rates = _rate_grid(floor, interval.hi, grid)
    vals, r_star, e_star, _ = _minimize(obj, rates)
    curve = ExponentCurve(tuple(zip(rates.tolist(), vals.tolist())), meta)
    rho = chan(w, r_star).achieving_param
    return JsccExponentReport(interval, curve, r_star, e_star, rho, math.nan, kind)


# ---------------------------------------------------------------------------
# single-constraint reference path


def marton_exponent(p_x, d_x, d_x_max, r, n_scan=201):
    """min D(Q || P) over binary Q with R(Q, D) >= r (observed fidelity only).

    Independent of the semantic machinery: the boundary {R(Q, D) = r} is
    located by scanning Q and refining sign changes with brentq; the
    divergence is convex in Q so the nearest boundary point on each side of
    P is the minimizer there.
    """
    p_x = np.asarray(p_x, dtype=float)
    if p_x.size != 2:
        raise NotImplementedError("reference path covers binary observed alphabets")

    def rate(q):
        try:
            return rate_distortion([1.0 - q, q], d_x, d_x_max)
        except InfeasibleDistortionError:
            return math.inf

    p1 = p_x[1]
    if rate(p1) >= r:
        return 0.0
    best = math.inf
    for lo_end, hi_end in ((p1, 0.0), (p1, 1.0)):
        qs = np.linspace(lo_end, hi_end, n_scan // 2)
        prev_q = qs[0]
        for q in qs[1:]:
            cur = rate(q) - r
            if cur >= 0:
                if math.isinf(cur):
                    root = q
                else:
                    root = optimize.brentq(lambda z: rate(z) - r, min(prev_q, q),
                                           max(prev_q, q), xtol=1e-14)
                best = min(best, kl_divergence([1.0 - root, root], p_x))
                break
            prev_q = q
    return best


def csiszar_bounds_dmc(p_x, d_x, d_x_max, channel, trans_rate, grid=DEFAULT_GRID):
    """JSCC exponent bounds for a single (observed) fidelity criterion.

    Returns (upper E*, lower E*) computed on the same rate grid as
    ``jscc_bounds_dmc`` so the two can be compared point for point.
    """
    w = as_channel(channel)
    t = trans_rate
    lo = t * rate_distortion(p_x, d_x, d_x_max)
    hi = dmc_capacity(w)
    if lo > hi:
        return 0.0, 0.0
    floor = max(lo, 1e-9 * hi)
    cache = {}

    def src(rate):
        if rate not in cache:
            cache[rate] = t * marton_exponent(p_x, d_x, d_x_max, max(rate, 0.0) / t)
        return cache[rate]

    out = []
    for chan in (sphere_packing_dmc, expurgated_dmc):
        def obj(rate, chan=chan):
            rate = min(max(rate, floor), hi)
            return src(rate) + chan(w, rate).value
        out.append(_minimize(obj, _rate_grid(floor, hi, grid))[2])
    return tuple(out)


# ---------------------------------------------------------------------------
# Gaussian source over MIMO


def jscc_exponent_mimo(prob, grid=DEFAULT_GRID, method="closed",
                       n_samples=DEFAULT_SAMPLES, seed=0):
    """Achievable JSCC exponent of a Gaussian source over a MIMO channel."""
    if prob.is_discrete:
        raise TypeError("jscc_exponent_mimo needs a Gaussian source and a MIMO channel")
    interval = feasible_interval(prob, n_samples, seed)
    meta = {"problem": _problem_hash(prob, method, n_samples),
            "method": method, "seed": seed}
    if interval.empty:
        return _empty_report(interval, "achievable", meta)
    src_term = _SourceTerm(prob)
    spec = prob.channel

    def chan(rate):
        return channel_exponent_mimo(spec, rate, method=method,
                                     n_samples=n_samples, seed=seed)

    def obj(rate):
        rate = min(max(rate, interval.lo), interval.hi)
        return src_term(rate) + chan(rate).value

    rates = _rate_grid(interval.lo, interval.hi, grid)
    vals, r_star, e_star, smoothed = _minimize(obj, rates, smooth=(method == "mc"))
    res = chan(r_star)
    curve = ExponentCurve(tuple(zip(rates.tolist(), vals.tolist())), meta)
    return JsccExponentReport(interval, curve, r_star, e_star, res.achieving_param,
                              res.delta, "achievable", False, res.std_error, smoothed)


@dataclass(frozen=True)
class OptimalRate:
    value: float
    raw: float
    clamped: bool


def _iso_source(prob):
    iso = prob.source.isotropic_params()
    if iso is None:
        raise ValueError("optimal code rate formula needs an isotropic Gaussian source")
    return iso


def optimal_code_rate(prob, rho_star, n_samples=DEFAULT_SAMPLES, seed=0, interval=None):
    """Closed-form optimal code rate 2t ln[(t rho* + 2) / (2m)],

    m = min{ vx (D_s - vn) / (vx tr(h^T h) + vn), D_x / vx }, clamped into
    the feasible interval.
    """
    vx, vn, c = _iso_source(prob)
    d = prob.distortions
    t = prob.trans_rate
    tr_hh = c * prob.source.q_dim
    m = min(vx * (d.d_s_max - vn) / (vx * tr_hh + vn), d.d_x_max / vx)
    if not m > 0:
        raise InfeasibleDistortionError("semantic", d.d_s_max, vn)
    raw = 2.0 * t * math.log((t * rho_star + 2.0) / (2.0 * m))
    return _clamp(raw, prob, n_samples, seed, interval)


def _clamp(raw, prob, n_samples, seed, interval):
    iv = interval or feasible_interval(prob, n_samples, seed)
    val = min(max(raw, iv.lo), iv.hi)
    return OptimalRate(val, raw, val != raw)


def optimal_code_rate_stationary(prob, rho_star, n_samples=DEFAULT_SAMPLES, seed=0,
                                 interval=None):
    """Optimal code rate from the first-order condition of the JSCC sum.

    The channel term has slope -rho* at the optimum and the source term
    t E(R / t) has slope a(R / t) / vx - 1, where a is the observed variance
    of the minimizing source; R* solves a(R* / t) = vx (1 + rho*).
    """
    vx, _, _ = _iso_source(prob)
    t = prob.trans_rate
    iv = interval or feasible_interval(prob, n_samples, seed)
    target = vx * (1.0 + rho_star)

    def gap(rate):
        q = SourceExponentQuery(rate / t, prob.distortions)
        return source_exponent_gaussian(prob.source, q).witness.a_mat[0, 0].real - target

    lo, hi = iv.lo, max(iv.hi, iv.lo)
    if gap(hi) <= 0:
        return _clamp(hi, prob, n_samples, seed, iv)
    if gap(lo) >= 0:
        return _clamp(lo, prob, n_samples, seed, iv)
    raw = optimize.brentq(gap, lo, hi, xtol=1e-12)
    return _clamp(raw, prob, n_samples, seed, iv)


def convexity_report(curve, tol=CONVEXITY_TOL):
    """Interior second differences below ``tol`` as (index, rate, value).

    Uses divided differences so nonuniform grids are handled.
    """
    r, v = curve.rates, curve.values
    if r.size < 3:
        raise ValueError("need at least 3 points")
    out = []
    for i in range(1, r.size - 1):
        h1, h2 = r[i] - r[i - 1], r[i + 1] - r[i]
        if not (np.isfinite(v[i - 1]) and np.isfinite(v[i]) and np.isfinite(v[i + 1])):
            continue
        # scaled so a uniform grid gives v[i-1] - 2 v[i] + v[i+1]
        sd = 2.0 * (h1 * v[i + 1] - (h1 + h2) * v[i] + h2 * v[i - 1]) / (h1 + h2)
        sd *= 0.5 * (h1 + h2) / max(h1, h2)
        if sd < tol:
            out.append((i, float(r[i]), float(sd)))
    return out
