import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, special

from wzrs.specfun import BRANCH_POINT, f_gamma_q, f_inverse, lambert_w0


def _bisect_f_inverse(gamma, q, y):
    # oracle: invert the increasing map x -> f(x) on [e^gamma, big] by bisection
    g = lambda x: x * (math.log(x) - gamma) / q - math.log(y)
    lo, hi = math.exp(gamma), math.exp(gamma) + 1.0
    while g(hi) < 0:
        hi *= 2
    return optimize.bisect(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def test_w_known_values():
    assert lambert_w0(0.0).value == 0.0
    assert lambert_w0(math.e).value == pytest.approx(1.0, abs=1e-15)
    assert lambert_w0(1.0).value == pytest.approx(0.5671432904097838, abs=1e-15)
    assert lambert_w0(BRANCH_POINT).value == pytest.approx(-1.0, abs=1e-7)


def test_w_matches_scipy_on_log_grid():
    xs = np.concatenate([BRANCH_POINT + np.logspace(-6, -0.5, 200), np.logspace(-8, 8, 500)])
    ours = np.array([lambert_w0(float(x)).value for x in xs])
    ref = special.lambertw(xs, 0).real
    assert np.max(np.abs(ours - ref) / np.maximum(1.0, np.abs(ref))) < 1e-12


def test_w_domain():
    with pytest.raises(ValueError):
        lambert_w0(-0.5)
    with pytest.raises(ValueError):
        lambert_w0(float("nan"))


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=BRANCH_POINT + 1e-6, max_value=1e8))
def test_w_residual_property(x):
    r = lambert_w0(x)
    assert r.residual <= 1e-12 * max(1.0, abs(x))
    assert r.value >= -1.0
    assert abs(r.value * math.exp(r.value) - x) <= 1e-12 * max(1.0, abs(x))


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1e3, max_value=1e300))
def test_w_asymptotic_band(x):
    lx = math.log(x)
    assert abs(lambert_w0(x).value - (lx - math.log(lx))) <= 1.0


def test_f_examples():
    assert f_gamma_q(0.7, 2.0, math.exp(0.7)) == pytest.approx(1.0, abs=1e-15)
    assert f_gamma_q(0.0, 1.0, math.e) == pytest.approx(15.15426224147926, rel=1e-14)
    with pytest.raises(ValueError):
        f_gamma_q(1.0, 1.0, 2.0)


def test_f_log_space_and_overflow():
    x = 1e4
    assert f_gamma_q(0.0, 1.0, x, log=True) == pytest.approx(x * math.log(x))
    assert f_gamma_q(0.0, 1.0, x) == math.inf


def test_f_inverse_examples():
    assert f_inverse(0.4, 3.0, 1.0) == pytest.approx(math.exp(0.4), rel=1e-15)
    assert f_inverse(0.0, 1.0, math.exp(math.e)) == pytest.approx(math.e, rel=1e-14)
    assert f_inverse(0.3, 2.0, 50.0) == pytest.approx(_bisect_f_inverse(0.3, 2.0, 50.0), abs=1e-10)
    with pytest.raises(ValueError):
        f_inverse(0.0, 1.0, 0.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=0.1, max_value=5.0),
       st.floats(min_value=0.0, max_value=1.0))
def test_round_trips(gamma, q, u):
    x = math.exp(gamma) + u * (1e4 - math.exp(gamma))
    assert f_inverse(gamma, q, f_gamma_q(gamma, q, x, log=True), log=True) == pytest.approx(x, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.0, max_value=2.0), st.floats(min_value=0.5, max_value=3.0),
       st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=1e-3, max_value=50.0))
def test_f_monotone(gamma, q, a, d):
    x1 = math.exp(gamma) + a
    assert f_gamma_q(gamma, q, x1 + d, log=True) > f_gamma_q(gamma, q, x1, log=True)
