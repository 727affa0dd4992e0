"""Expurgated error exponent of block-fading MIMO channels.

The channel is Z = H Y + W with Y an n_T x N_c input block whose columns are
iid CN(0, Q), W white with per-entry energy N_w, and H held fixed for N_c
symbols. For each H the Gaussian integrals over the codeword pair collapse to

    E_{Y,Y~}[...] = exp(-2 delta P) / [det(I - delta Q) det(I - delta Q + 2 Q G)]

per column, with G = H^H H / (4 N_w rho). The exponent is then

    E_ex(Q, rho, delta, N_c) = -(1/N_c) ln E_H { E_{Y,Y~}[...]^{N_c rho} }.

For iid Rayleigh fading and Q = (P/n_T) I the expectation over H is a
Wishart determinant moment with a Hankel-matrix closed form.

All Monte Carlo draws come from counter-based Philox streams keyed by
(seed, stream, block), with a fixed block size, so an estimate depends only
on (spec, params, n_samples, seed) and never on how the work is split.
"""

import dataclasses
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .dmc import ChannelExponentResult
from .special import hyp2f0, laguerre_moments

BLOCK_SIZE = 4096
DELTA_EPS = 1e-6
RHO_MIN = 1e-4
COND_LIMIT = 1e12

FADING_KINDS = ("iid-rayleigh", "exp-correlated")

_STREAM_CHANNEL = 0
_STREAM_INPUT = 1


class MimoDomainError(ValueError):
    """Parameters outside the region where the exponent integrals converge."""


class CapabilityError(NotImplementedError):
    """The requested evaluation method does not cover this channel."""


@dataclass(frozen=True)
class MimoChannelSpec:
    """Block-fading MIMO channel with Gaussian codebook.

    ``input_cov`` of None means the isotropic choice (P / n_T) I. Matrices are
    stored as nested tuples so specs hash by value.
    """

    n_t: int
    n_r: int
    power: float
    noise: float = 1.0
    n_c: int = 1
    n_b: int = 1
    input_cov: tuple = None
    fading: str = "iid-rayleigh"
    alpha_t: float = 0.0
    alpha_r: float = 0.0

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1 or self.n_c < 1 or self.n_b < 1:
            raise ValueError("antenna counts and block lengths must be >= 1")
        if not self.power >= 0 or not self.noise > 0:
            raise ValueError("need power >= 0 and noise > 0")
        if self.fading not in FADING_KINDS:
            raise ValueError(f"fading must be one of {FADING_KINDS}")
        for a in (self.alpha_t, self.alpha_r):
            if not 0.0 <= a < 1.0:
                raise ValueError(f"correlation coefficient {a} outside [0, 1)")
        if self.input_cov is not None:
            q = np.array(self.input_cov, dtype=complex)
            object.__setattr__(self, "input_cov", _as_tuple(q))
            if q.shape != (self.n_t, self.n_t):
                raise ValueError("input_cov must be n_T x n_T")
            if not np.allclose(q, q.conj().T, atol=1e-12):
                raise ValueError("input_cov must be Hermitian")
            if np.linalg.eigvalsh(q).min() <= 0:
                raise ValueError("input_cov must be positive definite")
            if np.trace(q).real > self.power + 1e-12:
                raise ValueError("tr(input_cov) exceeds the power budget")

    @property
    def snr(self):
        return self.power / self.noise

    @property
    def q_matrix(self):
        if self.input_cov is None:
            return np.eye(self.n_t) * (self.power / self.n_t)
        return np.array(self.input_cov, dtype=complex)

    @property
    def isotropic(self):
        if self.input_cov is None:
            return True
        q = self.q_matrix
        return np.allclose(q, np.eye(self.n_t) * q[0, 0].real, atol=1e-12)

    @property
    def iid(self):
        return self.fading == "iid-rayleigh" or (self.alpha_t == 0 and self.alpha_r == 0)

    def with_(self, **changes):
        return dataclasses.replace(self, **changes)


def _as_tuple(q):
    if np.allclose(q.imag, 0.0):
        q = q.real
    return tuple(tuple(complex(v) if isinstance(v, complex) else float(v) for v in row)
                 for row in q.tolist())


@dataclass(frozen=True)
class ExpurgatedParams:
    rho: float
    delta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not self.delta >= 0.0:
            raise ValueError("delta must be >= 0")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int


@dataclass(frozen=True)
class MimoExponentResult(ChannelExponentResult):
    """Channel exponent with the optimizing delta and a Monte Carlo error
    (zero for closed-form evaluations)."""

    delta: float = 0.0
    std_error: float = 0.0


# ---------------------------------------------------------------------------
# sampling


def _block_rng(seed, stream, block):
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (stream << 40) | block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def complex_normal_stream(seed, n, shape, stream=_STREAM_CHANNEL):
    """n iid standard complex Gaussian arrays of the given shape.

    The result for n is a prefix of the result for any larger n.
    """
    size = int(np.prod(shape))
    out = np.empty((n, size), dtype=complex)
    for block in range(-(-n // BLOCK_SIZE)):
        lo = block * BLOCK_SIZE
        hi = min(n, lo + BLOCK_SIZE)
        g = _block_rng(seed, stream, block).standard_normal((BLOCK_SIZE, size, 2))
        out[lo:hi] = (g[: hi - lo, :, 0] + 1j * g[: hi - lo, :, 1]) / math.sqrt(2.0)
    return out.reshape((n,) + tuple(shape))


def exp_correlation(n, alpha):
    """Exponential correlation matrix {alpha^|i-j|}."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"correlation coefficient {alpha} outside [0, 1)")
    idx = np.arange(n)
    return alpha ** np.abs(idx[:, None] - idx[None, :])


def _sqrtm_psd(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.conj().T


def _correlate(spec, hw):
    if spec.iid:
        return hw
    gr = _sqrtm_psd(exp_correlation(spec.n_r, spec.alpha_r))
    gt = _sqrtm_psd(exp_correlation(spec.n_t, spec.alpha_t))
    return gr @ hw @ gt


def sample_channel(spec, stream):
    """One n_R x n_T fading matrix drawn from a numpy Generator."""
    g = stream.standard_normal((spec.n_r, spec.n_t, 2))
    hw = (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2.0)
    return _correlate(spec, hw)


def sample_channels(spec, n_samples, seed):
    """Batch of fading matrices, shape (n, n_R, n_T), reproducible by seed."""
    hw = complex_normal_stream(seed, n_samples, (spec.n_r, spec.n_t))
    return _correlate(spec, hw)


@functools.lru_cache(maxsize=16)
def _gram_eigs_cached(n_t, n_r, fading, alpha_t, alpha_r, n_samples, seed):
    spec = MimoChannelSpec(n_t, n_r, 1.0, fading=fading, alpha_t=alpha_t, alpha_r=alpha_r)
    h = sample_channels(spec, n_samples, seed)
    eig = np.linalg.eigvalsh(np.conj(np.swapaxes(h, 1, 2)) @ h)
    eig = np.maximum(eig, 0.0)
    eig.setflags(write=False)
    return eig


def gram_eigenvalues(spec, n_samples, seed):
    """Eigenvalues of H^H H for the sampled channels, shape (n, n_T)."""
    return _gram_eigs_cached(spec.n_t, spec.n_r, spec.fading, spec.alpha_t,
                             spec.alpha_r, n_samples, seed)


def _log_mean_exp(logs):
    """ln mean exp(logs) with a delta-method standard error."""
    logs = np.asarray(logs, dtype=float)
    n = logs.size
    shift = logs.max()
    w = np.exp(logs - shift)
    m = w.mean()
    se = w.std(ddof=1) / (math.sqrt(n) * m) if n > 1 else math.inf
    return float(shift + math.log(m)), float(se)


# ---------------------------------------------------------------------------
# definition-level quantities


def bhattacharyya_matrix_kernel(h_mat, y, y2, noise):
    """w(Y, Y~) = exp{-tr(H D D^H H^H) / (4 N_w)} with D = Y - Y~."""
    h_mat = np.atleast_2d(np.asarray(h_mat, dtype=complex))
    d = np.asarray(y, dtype=complex) - np.asarray(y2, dtype=complex)
    if d.ndim == 1:
        d = d[:, None]
    hd = h_mat @ d
    return math.exp(-float(np.sum(np.abs(hd) ** 2)) / (4.0 * noise))


def _check_delta(spec, delta):
    lmax = float(np.linalg.eigvalsh(spec.q_matrix).max())
    if delta * lmax >= 1.0:
        raise MimoDomainError(
            f"delta={delta:g} makes the tilted input integral diverge "
            f"(need delta < {1.0 / lmax:g})")
    return lmax


def eex_definition_oracle(spec, p, n_outer, n_inner, seed, channels=None):
    """Nested Monte Carlo of the expurgated exponent from its definition.

    For each sampled H, the pair expectation over (Y, Y~) of
    exp{delta [tr(YY^H + Y~Y~^H) - 2 N_c P]} w(Y, Y~)^{1/rho} is averaged over
    ``n_inner`` draws, raised to rho and averaged over ``n_outer`` channels.

    Plain sampling of the pair is useless once the kernel is sharp (only
    near-coincident pairs contribute), so the pair is drawn from a Gaussian
    proposal whose precision adds half of the kernel's quadratic form to
    that of the input law; the likelihood ratio is applied exactly and keeps
    the weights bounded.

    ``channels`` (shape (n_outer, n_R, n_T)) replaces the sampled fading
    matrices, e.g. to freeze H for a degenerate check.
    """
    if not p.rho > 0:
        raise ValueError("rho must be > 0")
    if not spec.power > 0:
        raise ValueError("the definition oracle needs power > 0")
    _check_delta(spec, p.delta)
    n = spec.n_t
    q_inv = np.linalg.inv(spec.q_matrix)
    lam0 = np.kron(np.eye(2), q_inv)
    diff = np.hstack([np.eye(n), -np.eye(n)])
    h_all = sample_channels(spec, n_outer, seed) if channels is None else np.asarray(channels)
    if h_all.shape != (n_outer, spec.n_r, spec.n_t):
        raise ValueError(f"channels must have shape {(n_outer, spec.n_r, spec.n_t)}")
    inner_logs = np.empty(n_outer)
    ld0 = np.linalg.slogdet(lam0)[1]
    for i in range(n_outer):
        g = h_all[i].conj().T @ h_all[i] / (4.0 * spec.noise * p.rho)
        m = diff.T @ g @ diff  # z^H m z = (y - y~)^H G (y - y~)
        lam = lam0 + 0.5 * m
        chol = np.linalg.cholesky(lam)
        # inputs come from their own stream; each channel gets a disjoint seed
        w = complex_normal_stream(seed * 1_000_003 + i, n_inner, (2 * n, spec.n_c),
                                  stream=_STREAM_INPUT)
        z = np.linalg.solve(chol.conj().T, w)
        quad = lambda a: np.einsum("kic,ij,kjc->k", z.conj(), a, z).real
        energy = np.sum(np.abs(z) ** 2, axis=(1, 2))
        log_ratio = quad(lam - lam0) + spec.n_c * (ld0 - np.linalg.slogdet(lam)[1])
        logs = (p.delta * (energy - 2.0 * spec.power * spec.n_c)
                - quad(m) + log_ratio)
        lm, se = _log_mean_exp(logs)
        if not se < 0.5:
            raise MimoDomainError(
                f"inner expectation unstable at delta={p.delta:g} (relative SE {se:.2f})")
        inner_logs[i] = lm
    val, se = _log_mean_exp(p.rho * inner_logs)
    return McEstimate(-val / spec.n_c, se / spec.n_c, n_outer, seed)


# ---------------------------------------------------------------------------
# Monte Carlo over H


def _iso_c(spec, p, q=None):
    q = spec.power / spec.n_t if q is None else q
    return q / (2.0 * spec.noise * p.rho * (1.0 - p.delta * q))


def _eex_iso_logs(spec, p, eig):
    """Per-sample log of det(I + c H^H H)^{-N_c rho} and the matching
    per-sample derivative with respect to delta."""
    q = spec.power / spec.n_t
    c = _iso_c(spec, p, q)
    b = spec.n_c * p.rho
    logs = -b * np.sum(np.log1p(c * eig), axis=1)
    dlogs_dc = -b * np.sum(eig / (1.0 + c * eig), axis=1)
    dc_ddelta = c * q / (1.0 - p.delta * q)
    return logs, dlogs_dc * dc_ddelta


def _tilt_terms(spec, p):
    """2 delta rho P + 2 rho n_T ln(1 - delta q) for Q = q I."""
    q = spec.power / spec.n_t
    return 2.0 * p.delta * p.rho * spec.power + 2.0 * p.rho * spec.n_t * math.log1p(-p.delta * q)


def _eex_general_logs(spec, p, h, alt_form):
    """Per-sample log of the determinant factor for a general Q."""
    n = spec.n_t
    q = spec.q_matrix
    eye = np.eye(n)
    g = np.conj(np.swapaxes(h, 1, 2)) @ h / (4.0 * spec.noise * p.rho)
    a = p.delta * eye - np.linalg.inv(q) - g
    if alt_form:
        inner = g @ np.linalg.solve(a, g) - g + p.delta * eye
        m = q @ a @ (eye - q @ inner)
    else:
        c = -a
        inner = g @ np.linalg.solve(c, g) - g + p.delta * eye
        m = q @ c @ (eye - q @ inner)
    sign, logdet = np.linalg.slogdet(m)
    if not alt_form and np.any(sign.real <= 0):
        raise MimoDomainError(
            f"nonpositive determinant at rho={p.rho:g}, delta={p.delta:g}")
    return -spec.n_c * p.rho * logdet


def eex_mc(spec, p, n_samples, seed, alt_form=False):
    """Monte Carlo expurgated exponent in nats per channel use.

    The determinant factor is evaluated through
    det(Q C (I - Q(G C^{-1} G - G + delta I))) with C = Q^{-1} + G - delta I,
    which is positive on the whole domain. ``alt_form`` evaluates the same
    expression with -C in place of C (sign dropped), for comparison only.
    """
    if not p.rho > 0:
        raise ValueError("rho must be > 0")
    _check_delta(spec, p.delta)
    if spec.isotropic and not alt_form and spec.input_cov is None:
        logs, _ = _eex_iso_logs(spec, p, gram_eigenvalues(spec, n_samples, seed))
        lm, se = _log_mean_exp(logs)
        val = _tilt_terms(spec, p) - lm / spec.n_c
        return McEstimate(val, se / spec.n_c, n_samples, seed)
    h = sample_channels(spec, n_samples, seed)
    logs = _eex_general_logs(spec, p, h, alt_form)
    lm, se = _log_mean_exp(logs)
    val = 2.0 * p.delta * p.rho * spec.power - lm / spec.n_c
    return McEstimate(float(val), se / spec.n_c, n_samples, seed)


def _eex_mc_iso_with_grad(spec, p, eig):
    logs, dlogs = _eex_iso_logs(spec, p, eig)
    shift = logs.max()
    w = np.exp(logs - shift)
    m = w.mean()
    q = spec.power / spec.n_t
    d_tilt = 2.0 * p.rho * spec.power - 2.0 * p.rho * spec.n_t * q / (1.0 - p.delta * q)
    val = _tilt_terms(spec, p) - (shift + math.log(m)) / spec.n_c
    grad = d_tilt - float(np.dot(w, dlogs) / w.sum()) / spec.n_c
    se = w.std(ddof=1) / (math.sqrt(w.size) * m) / spec.n_c
    return val, grad, se


# ---------------------------------------------------------------------------
# closed form


def _require_closed(spec):
    if not spec.iid or not spec.isotropic:
        raise CapabilityError(
            "closed form needs iid Rayleigh fading and isotropic input "
            "covariance; use method='mc'")


def _closed_args(spec, p, alt_form):
    if not p.rho > 0:
        raise ValueError("rho must be > 0")
    if alt_form:
        q, noise = spec.snr, 1.0
    else:
        q, noise = spec.power / spec.n_t, spec.noise
    if p.delta * q >= 1.0:
        raise MimoDomainError(f"delta={p.delta:g} outside the closed-form domain")
    c = q / (2.0 * noise * p.rho * (1.0 - p.delta * q))
    return q, c, spec.n_c * p.rho


def _hankel_orders(spec):
    n_min, n_max = min(spec.n_t, spec.n_r), max(spec.n_t, spec.n_r)
    i = np.arange(1, n_min + 1)
    return n_min, n_max, (n_max - n_min + i[:, None] + i[None, :] - 1)


def _log_kappa(n_min, n_max):
    i = np.arange(1, n_min + 1)
    return float(np.sum(special.gammaln(n_max - i + 1) + special.gammaln(i)))


def k_matrix(spec, p, alt_form=False):
    """Hankel matrix K(rho, delta) of Laguerre moments, n_min x n_min.

    Entry (i, j) is (m + i + j - 2)! 2F0(m + i + j - 1, N_c rho; -c) with
    m = |n_T - n_R|.
    """
    _require_closed(spec)
    _, c, b = _closed_args(spec, p, alt_form)
    n_min, n_max, orders = _hankel_orders(spec)
    uniq = np.arange(1, orders.max() + 1)
    k, _, _ = laguerre_moments(uniq, b, c)
    return k[orders - 1]


def k_matrix_reference(spec, p, alt_form=False):
    """Same matrix built from direct hyp2f0 calls (slow, for checking)."""
    _require_closed(spec)
    _, c, b = _closed_args(spec, p, alt_form)
    _, _, orders = _hankel_orders(spec)
    return np.vectorize(lambda a: math.gamma(a) * hyp2f0(a, b, -c))(orders)


def _logdet_k(k):
    cond = np.linalg.cond(k)
    if not cond < COND_LIMIT:
        raise np.linalg.LinAlgError(f"Hankel matrix is numerically singular (cond {cond:.2e})")
    sign, logdet = np.linalg.slogdet(k)
    if sign <= 0:
        raise np.linalg.LinAlgError("Hankel matrix lost positive definiteness")
    return logdet


def eex_closed(spec, p, alt_form=False):
    """Closed-form expurgated exponent for iid Rayleigh fading, Q = (P/n_T) I.

    With q = P / n_T and c = q / (2 N_w rho (1 - delta q)),

        E = 2 delta rho P + 2 rho n_T ln(1 - delta q)
            - (1/N_c) ln(det K / Kappa),

    Kappa = prod_i (n_max - i)! (i - 1)!. ``alt_form`` uses q = SNR and a
    minus sign on the logarithmic tilt term instead; it is kept for
    comparison and does not match the Monte Carlo estimate.
    """
    _require_closed(spec)
    q, c, b = _closed_args(spec, p, alt_form)
    n_min, n_max, _ = _hankel_orders(spec)
    logdet = _logdet_k(k_matrix(spec, p, alt_form))
    tilt = 2.0 * p.delta * p.rho * (spec.snr if alt_form else spec.power)
    sign = -1.0 if alt_form else 1.0
    tilt += sign * 2.0 * p.rho * spec.n_t * math.log1p(-p.delta * q)
    return tilt - (logdet - _log_kappa(n_min, n_max)) / spec.n_c


def eex_derivatives(spec, p):
    """(dE/d delta, dE/d rho) of the closed form via tr(K^{-1} dK)."""
    _require_closed(spec)
    q, c, b = _closed_args(spec, p, False)
    _, _, orders = _hankel_orders(spec)
    uniq = np.arange(1, orders.max() + 1)
    k, dk_dc, dk_db = (v[orders - 1] for v in laguerre_moments(uniq, b, c))
    _logdet_k(k)
    dc_ddelta = c * q / (1.0 - p.delta * q)
    dc_drho = -c / p.rho
    kinv = np.linalg.inv(k)
    tr_c = float(np.trace(kinv @ dk_dc))
    tr_b = float(np.trace(kinv @ dk_db))
    n_t, n_c, pw = spec.n_t, spec.n_c, spec.power
    d_delta = (2.0 * p.rho * pw - 2.0 * p.rho * n_t * q / (1.0 - p.delta * q)
               - tr_c * dc_ddelta / n_c)
    d_rho = (2.0 * p.delta * pw + 2.0 * n_t * math.log1p(-p.delta * q)
             - (tr_c * dc_drho + tr_b * n_c) / n_c)
    return d_delta, d_rho


# ---------------------------------------------------------------------------
# optimization over (rho, delta)


class ExponentProfile:
    """rho -> max_delta E_ex(rho, delta), memoized.

    For isotropic inputs both methods maximize over delta by root finding
    on the analytic delta-derivative; Monte Carlo reuses one set of channel
    draws for every (rho, delta), so the estimate is a smooth function of
    both and the search is deterministic.
    """

    def __init__(self, spec, method="closed", n_samples=100_000, seed=0):
        if method not in ("closed", "mc"):
            raise ValueError("method must be 'closed' or 'mc'")
        if method == "closed":
            _require_closed(spec)
        self.spec, self.method = spec, method
        self.n_samples, self.seed = n_samples, seed
        lmax = float(np.linalg.eigvalsh(spec.q_matrix).max()) if spec.power > 0 else 0.0
        self.delta_max = (1.0 - DELTA_EPS) / lmax if lmax > 0 else 0.0
        self._cache = {}
        self._eig = None
        if method == "mc" and spec.input_cov is None:
            self._eig = gram_eigenvalues(spec, n_samples, seed)

    def _value_grad(self, rho, delta):
        """Exponent, delta-derivative and standard error at (rho, delta)."""
        p = ExpurgatedParams(rho, delta)
        if self.method == "closed":
            return eex_closed(self.spec, p), eex_derivatives(self.spec, p)[0], 0.0
        if self._eig is not None:
            return _eex_mc_iso_with_grad(self.spec, p, self._eig)
        est = eex_mc(self.spec, p, self.n_samples, self.seed)
        return est.value, math.nan, est.std_error

    def __call__(self, rho):
        """(value, delta*, std_error) maximizing over delta."""
        rho = float(rho)
        if rho in self._cache:
            return self._cache[rho]
        if self.spec.power == 0:
            out = (0.0, 0.0, 0.0)
        else:
            out = self._maximize_delta(rho)
        self._cache[rho] = out
        return out

    def _maximize_delta(self, rho):
        v0, g0, se0 = self._value_grad(rho, 0.0)
        hi = self.delta_max
        if math.isnan(g0):
            res = optimize.minimize_scalar(lambda d: -self._value_grad(rho, d)[0],
                                           bounds=(0.0, hi), method="bounded",
                                           options={"xatol": 1e-10 * hi})
            v, _, se = self._value_grad(rho, float(res.x))
            return (v, float(res.x), se) if v > v0 else (v0, 0.0, se0)
        if g0 <= 0:
            return v0, 0.0, se0
        _, g_hi, _ = self._value_grad(rho, hi)
        if g_hi >= 0:
            v, _, se = self._value_grad(rho, hi)
            return v, hi, se
        d = optimize.brentq(lambda x: self._value_grad(rho, x)[1], 0.0, hi,
                            xtol=1e-14, rtol=1e-12)
        v, _, se = self._value_grad(rho, d)
        return (v, d, se) if v >= v0 else (v0, 0.0, se0)

    def rho_grid(self, n=41):
        return np.linspace(RHO_MIN, 1.0, n)

    def exponent(self, r, n_grid=41):
        """max_rho [profile(rho) - rho r] as (value, rho, delta, se)."""
        grid = self.rho_grid(n_grid)
        vals = np.array([self(x)[0] - x * r for x in grid])
        i = int(np.argmax(vals))
        best = (vals[i], grid[i])
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if hi > lo:
            res = optimize.minimize_scalar(lambda x: -(self(x)[0] - x * r),
                                           bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-9})
            if -res.fun > best[0]:
                best = (-res.fun, float(res.x))
        val, rho = best
        if val <= 0:
            return 0.0, 0.0, 0.0, 0.0
        _, delta, se = self(rho)
        return float(val), float(rho), float(delta), float(se)


@functools.lru_cache(maxsize=32)
def exponent_profile(spec, method="closed", n_samples=100_000, seed=0):
    return ExponentProfile(spec, method, n_samples, seed)


def channel_exponent_mimo(spec, r, method="closed", tol=1e-9, n_samples=100_000, seed=0):
    """Expurgated MIMO exponent E(r) = max_rho [max_delta E_ex - rho r].

    Parameters
    ----------
    spec : MimoChannelSpec
    r : float
        Code rate in nats per channel use, >= 0.
    method : {"closed", "mc"}
        ``closed`` needs iid fading and isotropic input covariance and raises
        CapabilityError otherwise.
    tol : float
        Exponents below ``tol`` are reported as 0.
    n_samples, seed : int
        Monte Carlo size and seed, used by ``mc`` and by the capacity clamp.

    Notes
    -----
    With Gaussian inputs and rho < 1 the bracket E_ex - rho r stays positive
    at every rate (E_ex / rho grows like ln(1 / rho)), so rates at or above
    the ergodic capacity are clamped to exponent 0 explicitly.
    """
    if r < 0:
        raise ValueError("rate must be >= 0")
    if r >= ergodic_capacity(spec, n_samples, seed).value:
        return MimoExponentResult(r, 0.0, spec.q_matrix, 0.0)
    prof = exponent_profile(spec, method, n_samples, seed)
    val, rho, delta, se = prof.exponent(r)
    if val <= tol:
        val, rho, delta = 0.0, 0.0, 0.0
    return MimoExponentResult(r, val, spec.q_matrix, rho, delta, se)


def ergodic_capacity(spec, n_samples, seed):
    """E_H ln det(I + H Q H^H / N_w) by Monte Carlo, nats per channel use."""
    if spec.power == 0:
        return McEstimate(0.0, 0.0, n_samples, seed)
    if spec.input_cov is None:
        eig = gram_eigenvalues(spec, n_samples, seed)
        vals = np.sum(np.log1p(spec.snr / spec.n_t * eig), axis=1)
    else:
        h = sample_channels(spec, n_samples, seed)
        m = np.eye(spec.n_r) + h @ spec.q_matrix @ np.conj(np.swapaxes(h, 1, 2)) / spec.noise
        vals = np.linalg.slogdet(m)[1]
    return McEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples)),
                      n_samples, seed)


def random_coding_e0(spec, rho, eig):
    """-(1/N_c) ln E det(I + SNR/(n_T(1+rho)) H^H H)^{-N_c rho} and its SE."""
    b = spec.n_c * rho
    logs = -b * np.sum(np.log1p(spec.snr / (spec.n_t * (1.0 + rho)) * eig), axis=1)
    lm, se = _log_mean_exp(logs)
    return -lm / spec.n_c, se / spec.n_c


def random_coding_mimo(spec, r, n_samples, seed):
    """Gallager random-coding exponent with Gaussian inputs (Monte Carlo)."""
    if r < 0:
        raise ValueError("rate must be >= 0")
    eig = gram_eigenvalues(spec, n_samples, seed)

    def neg(rho):
        return -(random_coding_e0(spec, rho, eig)[0] - rho * r)

    grid = np.linspace(0.0, 1.0, 41)
    vals = np.array([-neg(x) for x in grid])
    i = int(np.argmax(vals))
    rho, val = grid[i], vals[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    if -res.fun > val:
        rho, val = float(res.x), float(-res.fun)
    if val <= 0:
        return MimoExponentResult(r, 0.0, spec.q_matrix, 0.0)
    se = random_coding_e0(spec, rho, eig)[1]
    return MimoExponentResult(r, float(val), spec.q_matrix, float(rho), 0.0, float(se))
