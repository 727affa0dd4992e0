import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from semantic_jscc.jscc import marton_exponent
from semantic_jscc.prob import conditional_kl, kl_divergence
from semantic_jscc.ratedist import (DiscreteSemanticSource, DistortionPair, GaussianSourceSpec,
                                    InfeasibleDistortionError, semantic_rd_discrete,
                                    semantic_rd_gaussian)
from semantic_jscc.source import (SourceExponentQuery, gaussian_kl, gaussian_kl_conditional,
                                  gaussian_kl_marginal, source_exponent_discrete,
                                  source_exponent_gaussian)

from conftest import HAMMING2

HAMMING_SRC = DiscreteSemanticSource([0.3, 0.7], [[0.8, 0.2], [0.3, 0.7]], HAMMING2, HAMMING2)
HAMMING_D = DistortionPair(0.35, 0.2)


def _exponent(src, r, d):
    return source_exponent_discrete(src, SourceExponentQuery(r, d))


# -- discrete -----------------------------------------------------------------

def test_zero_below_rate_distortion(toy_source):
    d = DistortionPair(0.6, 0.1)
    r0 = semantic_rd_discrete(toy_source, d).value
    assert _exponent(toy_source, 0.5 * r0, d).value == 0.0
    assert _exponent(toy_source, r0, d).value == 0.0
    assert _exponent(toy_source, r0 + 0.02, d).value > 0.0


def test_witness_self_consistency(toy_source):
    res = _exponent(toy_source, 0.3, DistortionPair(0.6, 0.1))
    recomputed = (kl_divergence(res.q_x, toy_source.p_x)
                  + conditional_kl(res.u_s_given_x, toy_source.p_s_given_x, res.q_x))
    assert res.value == pytest.approx(recomputed, abs=1e-10)
    # the witness does reach the rate threshold
    moved = toy_source.with_(p_x=res.q_x, p_s_given_x=res.u_s_given_x)
    assert semantic_rd_discrete(moved, DistortionPair(0.6, 0.1)).value >= 0.3 - 1e-6


def test_nondecreasing_in_rate(toy_source):
    d = DistortionPair(0.6, 0.1)
    vals = [_exponent(toy_source, r, d).value for r in (0.15, 0.22, 0.29, 0.36)]
    assert all(a <= b + 1e-8 for a, b in zip(vals, vals[1:]))


def test_relaxing_semantic_budget_never_lowers_exponent():
    # a looser D_s lowers R(Q, U, D) for every (Q, U), shrinking the feasible set
    vals = [_exponent(HAMMING_SRC, 0.3, DistortionPair(ds, 0.2)).value
            for ds in (0.3, 0.32, 0.35, 0.4, 0.5, math.inf)]
    assert all(a <= b + 1e-7 for a, b in zip(vals, vals[1:]))
    assert vals[0] == 0.0 and vals[2] > 1e-3 and vals[-1] == math.inf


def test_inactive_semantic_budget_leaves_exponent_unchanged(toy_source):
    vals = [_exponent(toy_source, 0.36, DistortionPair(ds, 0.1)).value
            for ds in (0.5, 0.6, math.inf)]
    assert max(vals) - min(vals) <= 1e-7


def test_no_semantic_constraint_matches_single_variable_oracle(toy_source):
    for r in (0.2, 0.3, 0.36):
        lib = _exponent(toy_source, r, DistortionPair(math.inf, 0.1)).value
        assert lib == pytest.approx(marton_exponent(toy_source.p_x, HAMMING2, 0.1, r), abs=1e-6)


def test_unreachable_rate_is_infinite(toy_source):
    # the observed floor is 0, so no law makes D_x infeasible, and R <= ln 2
    assert _exponent(toy_source, 5.0, DistortionPair(math.inf, 0.1)).value == math.inf


def test_infeasibility_branch(toy_source):
    res = _exponent(toy_source, 5.0, DistortionPair(0.6, 0.1))
    assert res.branch == "infeasible" and 0 < res.value < math.inf
    moved = toy_source.with_(p_x=res.q_x, p_s_given_x=res.u_s_given_x)
    with pytest.raises(InfeasibleDistortionError):
        semantic_rd_discrete(moved, DistortionPair(0.6 - 1e-6, 0.1))


def _grid_oracle(src, r, d, half_width=0.12, step=0.01):
    """Windowed grid over (Q_X, U_S|X) around the true source, then a local
    Nelder-Mead polish of the best feasible point with a hard rate penalty.

    For an exponent value E, Pinsker's inequality confines the minimizer to
    |Q - P| <= sqrt(E / 2) and |U_x - P_x| <= sqrt(E / (2 Q(x))), both
    inside the window for the instance used here.
    """
    p, ps = src.p_x[0], src.p_s_given_x[:, 0]
    offs = np.arange(-half_width, half_width + step / 2, step)

    def cost(z):
        q, u0, u1 = z
        if not (0 < q < 1 and 0 < u0 < 1 and 0 < u1 < 1):
            return math.inf
        qx, u = np.array([q, 1 - q]), np.array([[u0, 1 - u0], [u1, 1 - u1]])
        try:
            rate = semantic_rd_discrete(src.with_(p_x=qx, p_s_given_x=u), d).value
        except InfeasibleDistortionError:
            rate = math.inf
        if rate < r:
            return math.inf
        return kl_divergence(qx, src.p_x) + conditional_kl(u, src.p_s_given_x, qx)

    best, arg = math.inf, None
    for dq in offs:
        for d0 in offs:
            for d1 in offs:
                z = (p + dq, ps[0] + d0, ps[1] + d1)
                c = cost(z)
                if c < best:
                    best, arg = c, z
    res = optimize.minimize(cost, arg, method="Nelder-Mead",
                            options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": 600})
    return min(best, res.fun), best


@pytest.mark.slow
def test_hamming_instance_against_grid_oracle():
    r = 0.3
    lib = _exponent(HAMMING_SRC, r, HAMMING_D)
    polished, grid_min = _grid_oracle(HAMMING_SRC, r, HAMMING_D)
    assert math.sqrt(polished / 2) < 0.12 and math.sqrt(polished / (2 * 0.3)) < 0.12
    assert lib.value <= grid_min + 1e-9
    assert lib.value == pytest.approx(polished, abs=1e-5)


# -- Gaussian divergences -----------------------------------------------------

def test_gaussian_kl_scalar_formula():
    spec = GaussianSourceSpec.isotropic(1, 1, 4.0, 1.0)
    assert gaussian_kl_marginal(spec, np.array([[2.0]])) == pytest.approx(
        0.5 * (0.5 - 1 + math.log(2)))
    assert gaussian_kl_marginal(spec, spec.sigma_x) == pytest.approx(0.0, abs=1e-14)
    assert gaussian_kl_conditional(spec, np.array([[3.0]])) == pytest.approx(
        0.5 * (3 - 1 - math.log(3)))


def test_gaussian_kl_rejects_indefinite():
    with pytest.raises(ValueError):
        gaussian_kl(np.diag([1.0, -1.0]), np.eye(2))


def test_gaussian_kl_monte_carlo_two_dim():
    rng = np.random.default_rng(7)
    sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
    a = np.array([[1.0, -0.2], [-0.2, 1.5]])
    x = rng.multivariate_normal(np.zeros(2), a, size=200_000)

    def logpdf(x, s):
        sol = np.linalg.solve(s, x.T).T
        return -0.5 * np.sum(x * sol, axis=1) - 0.5 * np.linalg.slogdet(2 * np.pi * s)[1]

    diff = logpdf(x, a) - logpdf(x, sigma)
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    assert abs(gaussian_kl(a, sigma) - diff.mean()) <= 3 * se
    assert abs(gaussian_kl(a, sigma, alt_form=True) - gaussian_kl(a, sigma)) > 3 * se


# -- Gaussian exponent --------------------------------------------------------

def _iso(vx=4.0, vn=1.0, q=2, gain=1.0):
    return GaussianSourceSpec.isotropic(q, q, vx, vn, gain)


def test_gaussian_exponent_scalar_grid_oracle():
    spec, d = _iso(), DistortionPair(3.0, 1.0)
    r = semantic_rd_gaussian(spec, d).value + 0.2
    res = source_exponent_gaussian(spec, SourceExponentQuery(r, d))

    def kl(x):
        return x - 1 - math.log(x)

    # q = l = 2, h = I: A = delta e^{r} I, tr B = D_s - 2 delta
    grid = np.arange(1e-4, 0.5 + 1e-12, 1e-4)
    oracle = min(kl(dl * math.exp(r) / 4) + kl((3 - 2 * dl) / 2) for dl in grid)
    assert res.value == pytest.approx(oracle, abs=1e-6)


@given(st.floats(0.05, 1.5))
@settings(max_examples=15)
def test_gaussian_witness_invariants(excess):
    spec, d = _iso(), DistortionPair(3.0, 1.0)
    r = semantic_rd_gaussian(spec, d).value + excess
    w = source_exponent_gaussian(spec, SourceExponentQuery(r, d)).witness
    dl = w.delta
    assert np.all(np.linalg.eigvalsh(dl) > 0)
    assert np.all(np.linalg.eigvalsh(spec.sigma_x - dl) >= -1e-10)
    assert np.trace(dl) <= d.d_x_max * (1 + 1e-9)
    det_ratio = np.linalg.det(w.a_mat) / (np.linalg.det(dl) * math.exp(2 * r))
    assert det_ratio == pytest.approx(1.0, rel=1e-8)
    if not w.semantic_infeasible:
        tr_b = np.trace(w.b_mat).real
        ref = d.d_s_max - np.trace(spec.h @ dl @ spec.h.conj().T).real
        assert tr_b == pytest.approx(ref, rel=1e-8)


def test_gaussian_exponent_zero_at_and_below_rd(baseline_gaussian):
    d = DistortionPair(2.0, 1.0)
    r0 = semantic_rd_gaussian(baseline_gaussian, d).value
    for r in (0.5 * r0, r0):
        assert source_exponent_gaussian(baseline_gaussian,
                                        SourceExponentQuery(r, d)).value == pytest.approx(0, abs=1e-10)


def test_gaussian_exponent_nondecreasing(baseline_gaussian):
    d = DistortionPair(2.0, 1.0)
    vals = [source_exponent_gaussian(baseline_gaussian, SourceExponentQuery(r, d)).value
            for r in np.linspace(0.7, 3.0, 12)]
    assert all(a <= b + 1e-10 for a, b in zip(vals, vals[1:]))
