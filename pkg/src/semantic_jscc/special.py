"""Hypergeometric 2F0 on the negative axis and the Laguerre-type moments
behind Wishart determinant expectations.

For a > 0, b >= 0 and x = -c <= 0,

    2F0(a, b; -c) = Gamma(a)^{-1} int_0^inf t^{a-1} e^{-t} (1 + c t)^{-b} dt,

which is z^a U(a, a - b + 1, z) at z = 1/c after the substitution t -> t/c.
The moment k(a, b, c) = Gamma(a) 2F0(a, b; -c) is what enters the Hankel
matrix, so it is exposed directly together with its partial derivatives.
"""

import math

import numpy as np
from scipy import integrate, special

# trapezoid nodes in u = ln t; the integrand decays like e^{a u} on the left
# and doubly exponentially on the right, so a uniform grid converges fast
_U_LO, _U_HI, _U_STEP = -60.0, 5.0, 0.02
_U = np.arange(_U_LO, _U_HI + _U_STEP / 2, _U_STEP)
_T = np.exp(_U)


def hyp2f0(a, b, x):
    """2F0(a, b; x) for x <= 0 by adaptive quadrature of its integral form.

    ``b == 0`` or ``a == 0`` gives 1 exactly.
    """
    if x > 0:
        raise ValueError("2F0 is only supported for x <= 0")
    if a < 0 or b < 0:
        raise ValueError("need a >= 0 and b >= 0")
    if a == 0 or b == 0 or x == 0:
        return 1.0
    c = -x

    def f(t):
        return math.exp((a - 1.0) * math.log(t) - t - b * math.log1p(c * t)
                        - special.gammaln(a)) if t > 0 else (1.0 if a == 1 else 0.0)

    # split where the (1 + c t) factor turns over, then the exponential tail
    knee = min(1.0 / c, 1.0)
    parts = [(0.0, knee), (knee, max(a, 1.0) + 1.0), (max(a, 1.0) + 1.0, np.inf)]
    total = 0.0
    for lo, hi in parts:
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)
        total += val
    return total


def hyp2f0_series(a, b, x, terms=4):
    """Truncated asymptotic series sum_k (a)_k (b)_k x^k / k!."""
    out, term = 0.0, 1.0
    for k in range(terms):
        out += term
        term *= (a + k) * (b + k) * x / (k + 1)
    return out


def laguerre_moments(a, b, c):
    """k(a, b, c) = int t^{a-1} e^{-t} (1 + c t)^{-b} dt and its partials.

    Parameters
    ----------
    a : array_like
        Exponents, each >= 1.
    b, c : float
        Nonnegative scalars.

    Returns
    -------
    k, dk_dc, dk_db : ndarray
        Arrays with the shape of ``a``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(a < 1) or b < 0 or c < 0:
        raise ValueError("need a >= 1, b >= 0, c >= 0")
    log1p = np.log1p(c * _T)
    base = np.exp(np.outer(a, _U) - _T - b * log1p)  # includes the dt = t du
    k = integrate.trapezoid(base, dx=_U_STEP, axis=1)
    dk_dc = -b * integrate.trapezoid(base * (_T / (1.0 + c * _T)), dx=_U_STEP, axis=1)
    dk_db = -integrate.trapezoid(base * log1p, dx=_U_STEP, axis=1)
    return k, dk_dc, dk_db
