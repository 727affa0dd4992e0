import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semantic_jscc.prob import binary_entropy
from semantic_jscc.ratedist import (
    DiscreteSemanticSource, DistortionPair, GaussianSourceSpec, InfeasibleDistortionError,
    lift_semantic_distortion, rate_distortion, semantic_rd_discrete, semantic_rd_gaussian)

from conftest import HAMMING2


@given(st.floats(0.05, 0.5), st.floats(0.0, 0.6))
@settings(max_examples=25)
def test_binary_hamming(p, d):
    ref = max(0.0, binary_entropy(p) - binary_entropy(min(d, p)))
    assert rate_distortion([1 - p, p], HAMMING2, d) == pytest.approx(ref, abs=1e-6)


def test_rate_distortion_infeasible_budget():
    dist = np.array([[0.5, 1.0], [1.0, 0.5]])
    with pytest.raises(InfeasibleDistortionError):
        rate_distortion([0.5, 0.5], dist, 0.4)


def test_semantic_rd_result_is_certified(toy_source):
    res = semantic_rd_discrete(toy_source, DistortionPair(0.6, 0.1))
    assert res.gap <= 1e-6
    assert res.dual_value <= res.value + 1e-9


@given(st.floats(0.45, 0.9), st.floats(0.02, 0.4))
@settings(max_examples=12)
def test_semantic_rd_monotone_in_both_budgets(toy_source, ds, dx):
    base = semantic_rd_discrete(toy_source, DistortionPair(ds, dx)).value
    assert semantic_rd_discrete(toy_source, DistortionPair(ds + 0.05, dx)).value <= base + 1e-7
    assert semantic_rd_discrete(toy_source, DistortionPair(ds, dx + 0.05)).value <= base + 1e-7


def test_dropping_a_constraint_reduces_to_single_rd(toy_source):
    d = DistortionPair(math.inf, 0.1)
    ref = rate_distortion(toy_source.p_x, HAMMING2, 0.1)
    assert semantic_rd_discrete(toy_source, d).value == pytest.approx(ref, abs=1e-6)
    d = DistortionPair(0.5, math.inf)
    ref = rate_distortion(toy_source.p_x, lift_semantic_distortion(toy_source), 0.5)
    assert semantic_rd_discrete(toy_source, d).value == pytest.approx(ref, abs=1e-6)


def test_semantic_floor_is_infeasible(toy_source):
    floor = float(np.sum(toy_source.p_x * lift_semantic_distortion(toy_source).min(axis=1)))
    with pytest.raises(InfeasibleDistortionError):
        semantic_rd_discrete(toy_source, DistortionPair(floor - 1e-3, 1.0))


def test_source_validation():
    with pytest.raises(ValueError):
        DiscreteSemanticSource([0.5, 0.5], [[0.5, 0.6], [0.5, 0.5]], HAMMING2, HAMMING2)
    with pytest.raises(ValueError):
        DistortionPair(-1.0, 1.0)


# -- Gaussian -----------------------------------------------------------------

def test_gaussian_observed_constraint_only(baseline_gaussian):
    val = semantic_rd_gaussian(baseline_gaussian, DistortionPair(math.inf, 1.0)).value
    assert val == pytest.approx(0.5 * math.log(4.0), abs=1e-9)


def test_gaussian_semantic_constraint_only(baseline_gaussian):
    # scalar: tr(h delta h) <= D_s - vn with h^2 = 0.5 gives delta = 2 (D_s - 1)
    val = semantic_rd_gaussian(baseline_gaussian, DistortionPair(1.5, math.inf)).value
    assert val == pytest.approx(0.5 * math.log(4.0 / 1.0), abs=1e-9)


def test_gaussian_water_filling():
    spec = GaussianSourceSpec(np.diag([4.0, 1.0, 0.25]), np.zeros((1, 3)), np.eye(1))
    val = semantic_rd_gaussian(spec, DistortionPair(math.inf, 1.5)).value
    # level 0.625 on the two largest variances, 0.25 component left uncoded
    assert val == pytest.approx(0.5 * math.log(4 / 0.625) + 0.5 * math.log(1 / 0.625),
                                abs=1e-6)


def test_gaussian_non_commuting_uses_conic_path():
    sx = np.array([[2.0, 0.6], [0.6, 1.0]])
    h = np.array([[1.0, 0.0], [0.0, 0.3]])
    spec = GaussianSourceSpec(sx, h, 0.5 * np.eye(2))
    assert not spec.commutes()
    res = semantic_rd_gaussian(spec, DistortionPair(1.6, 1.2))
    dl = res.delta
    assert np.trace(h @ dl @ h.T) <= 0.6 + 1e-6 and np.trace(dl) <= 1.2 + 1e-6
    assert res.value == pytest.approx(0.5 * (np.linalg.slogdet(sx)[1]
                                             - np.linalg.slogdet(dl)[1]), abs=1e-6)


def test_gaussian_semantic_floor(baseline_gaussian):
    with pytest.raises(InfeasibleDistortionError):
        semantic_rd_gaussian(baseline_gaussian, DistortionPair(1.0, 1.0))
