"""Self-check suite run by ``semantic-jscc validate``.

Each check compares a library value with an independently computed
reference. Monte Carlo comparisons use tolerances scaled by the reported
standard error, so they hold for any seed. The full acceptance suite lives
in the test tree; this is the quick release gate.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special as sps

from . import special
from .dmc import sphere_packing_dmc
from .mimo import (ExpurgatedParams, MimoChannelSpec, eex_closed, eex_derivatives,
                   eex_mc, ergodic_capacity)
from .prob import binary_entropy, dmc_capacity, kl_divergence
from .ratedist import (DiscreteSemanticSource, DistortionPair, GaussianSourceSpec,
                       lift_semantic_distortion, rate_distortion, semantic_rd_discrete,
                       semantic_rd_gaussian)


@dataclass(frozen=True)
class Check:
    name: str
    expected: float
    got: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.got)) and abs(self.got - self.expected) <= self.tolerance


def _hyp2f0_series():
    a, b, x = 1.5, 2.0, -0.002
    return Check("2F0 vs asymptotic series (x=-0.002)",
                 special.hyp2f0_series(a, b, x, terms=6), special.hyp2f0(a, b, x), 1e-9)


def _hyp2f0_e1():
    x = 0.1
    ref = math.exp(1 / x) * sps.exp1(1 / x) / x
    return Check("2F0(1,1;-x) = e^{1/x} E1(1/x) / x", ref, special.hyp2f0(1, 1, -x), 1e-10)


def _laguerre():
    a, b, c = 3.0, 1.7, 0.4
    ref, _ = integrate.quad(lambda t: t ** (a - 1) * math.exp(-t) * (1 + c * t) ** -b,
                            0, np.inf, epsabs=1e-14)
    return Check("Laguerre moment vs quadrature", ref,
                 float(special.laguerre_moments([a], b, c)[0][0]), 1e-9)


def _bsc_capacity():
    p = 0.11
    w = np.array([[1 - p, p], [p, 1 - p]])
    return Check("BSC capacity ln2 - h(p)", math.log(2) - binary_entropy(p),
                 dmc_capacity(w), 1e-8)


def _bsc_sphere_packing():
    p, r = 0.1, 0.3
    w = np.array([[1 - p, p], [p, 1 - p]])
    # E_sp(R) = D(g || p) with h(g) = ln2 - R, g in (p, 1/2)
    g = optimize.brentq(lambda g: binary_entropy(g) - (math.log(2) - r), p, 0.5, xtol=1e-14)
    ref = kl_divergence([g, 1 - g], [p, 1 - p])
    return Check("BSC sphere packing vs divergence form", ref,
                 sphere_packing_dmc(w, r).value, 1e-6)


def _hamming_rd():
    p, d = 0.3, 0.1
    ref = binary_entropy(p) - binary_entropy(d)
    got = rate_distortion([1 - p, p], np.array([[0.0, 1.0], [1.0, 0.0]]), d)
    return Check("binary Hamming R(D) = h(p) - h(D)", ref, got, 1e-6)


def _lifted_degeneracy():
    src = DiscreteSemanticSource(
        [0.35, 0.65], [[0.8, 0.2], [0.25, 0.75]],
        [[0.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]])
    d_s = 0.3
    ref = rate_distortion(src.p_x, lift_semantic_distortion(src), d_s)
    got = semantic_rd_discrete(src, DistortionPair(d_s, math.inf)).value
    return Check("semantic RD with D_x=inf vs lifted RD", ref, got, 1e-6)


def _gaussian_rd():
    spec = GaussianSourceSpec.isotropic(1, 1, 4.0, 1.0, math.sqrt(0.5))
    # only the observation constraint binds: R = 1/2 ln(vx / D_x)
    got = semantic_rd_gaussian(spec, DistortionPair(math.inf, 1.0)).value
    return Check("Gaussian RD 1/2 ln(vx/D_x)", 0.5 * math.log(4.0), got, 1e-6)


def _siso_capacity(seed):
    snr = 10.0
    spec = MimoChannelSpec(1, 1, power=snr)
    est = ergodic_capacity(spec, 100_000, seed)
    ref = math.exp(1 / snr) * sps.exp1(1 / snr)
    return Check("SISO ergodic capacity e^{1/snr} E1(1/snr)", ref, est.value,
                 4 * est.std_error)


def _closed_vs_mc(seed):
    spec = MimoChannelSpec(2, 2, power=15.0)
    p = ExpurgatedParams(0.5, 0.4 / 15.0)
    est = eex_mc(spec, p, 100_000, seed)
    return Check("MIMO expurgated closed form vs MC (2x2)", eex_closed(spec, p),
                 est.value, 4 * est.std_error)


def _derivatives():
    spec = MimoChannelSpec(3, 3, power=15.0)
    rho, delta, h = 0.6, 0.01, 1e-5
    d_delta, d_rho = eex_derivatives(spec, ExpurgatedParams(rho, delta))
    fd = (eex_closed(spec, ExpurgatedParams(rho, delta + h))
          - eex_closed(spec, ExpurgatedParams(rho, delta - h))) / (2 * h)
    return Check("dE/d delta vs central difference", fd, d_delta, 1e-4 * abs(fd))


def _derivative_rho():
    spec = MimoChannelSpec(3, 3, power=15.0)
    rho, delta, h = 0.6, 0.01, 1e-5
    _, d_rho = eex_derivatives(spec, ExpurgatedParams(rho, delta))
    fd = (eex_closed(spec, ExpurgatedParams(rho + h, delta))
          - eex_closed(spec, ExpurgatedParams(rho - h, delta))) / (2 * h)
    return Check("dE/d rho vs central difference", fd, d_rho, 1e-4 * abs(fd))


def run_validation(seed=0):
    """Run every check and return the list of ``Check`` results."""
    checks = [_hyp2f0_series, _hyp2f0_e1, _laguerre, _bsc_capacity, _bsc_sphere_packing,
              _hamming_rd, _lifted_degeneracy, _gaussian_rd, _derivatives, _derivative_rho]
    out = [f() for f in checks]
    out += [_siso_capacity(seed), _closed_vs_mc(seed)]
    return out


def format_table(checks):
    rows = [("check", "expected", "got", "tolerance", "status")]
    rows += [(c.name, f"{c.expected:.10g}", f"{c.got:.10g}", f"{c.tolerance:.3g}",
              "pass" if c.passed else "FAIL") for c in checks]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
                     for r in rows)
