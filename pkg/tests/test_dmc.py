import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semantic_jscc.dmc import expurgated_dmc, sphere_packing_dmc
from semantic_jscc.prob import dmc_capacity

from oracles import expurgated_primal_binary, sphere_packing_bsc


@given(st.floats(0.02, 0.45), st.floats(0.01, 0.9))
@settings(max_examples=15)
def test_sphere_packing_bsc_closed_form(flip, frac):
    w = np.array([[1 - flip, flip], [flip, 1 - flip]])
    r = frac * dmc_capacity(w)
    assert sphere_packing_dmc(w, r).value == pytest.approx(sphere_packing_bsc(flip, r),
                                                           abs=1e-6)


def test_sphere_packing_zero_above_capacity(bsc03):
    assert sphere_packing_dmc(bsc03, dmc_capacity(bsc03) + 0.01).value == 0.0


def test_sphere_packing_nonincreasing(bsc03):
    cap = dmc_capacity(bsc03)
    vals = [sphere_packing_dmc(bsc03, r).value for r in np.linspace(0.05, 1.0, 6) * cap]
    assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("r", [0.005, 0.02, 0.04])
def test_expurgated_against_primal_grid(bsc03, r):
    ref = expurgated_primal_binary(bsc03, r, steps=300)
    assert expurgated_dmc(bsc03, r).value == pytest.approx(ref, abs=2e-3)


def test_expurgated_below_sphere_packing():
    w = np.array([[0.9, 0.1], [0.2, 0.8]])
    for r in (0.01, 0.05, 0.1):
        assert expurgated_dmc(w, r).value <= sphere_packing_dmc(w, r).value + 1e-7


def test_rate_must_be_positive(bsc03):
    with pytest.raises(ValueError):
        sphere_packing_dmc(bsc03, 0.0)
    with pytest.raises(ValueError):
        expurgated_dmc(bsc03, -1.0)


def test_noiseless_channel_expurgated_infinite_or_large():
    w = np.eye(2)
    assert sphere_packing_dmc(w, 0.3).value == math.inf or \
        sphere_packing_dmc(w, 0.3).value > 10
