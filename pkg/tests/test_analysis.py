import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from wzrs.analysis import (BoundConstants, BudgetExceeded, ItoFunction, a_lambda, bound_constants,
                           check_pathwise_bound, check_x_bound, estimate_rate, path_seeds, transport_summary,
                           verify_ito_rs)
from wzrs.drivers import polygonal_approx, sample_brownian, transport_process
from wzrs.jumps import DeterministicGenerator, JumpPath, MarkovGenerator, sample_jump_path
from wzrs.lamperti import LampertiKit
from wzrs.model import constant_model, mmbm_model, sin_volatility_model
from wzrs.solvers import build_S, inverse_transform
from wzrs.specfun import f_gamma_q

Q = np.array([[-2.0, 2.0], [3.0, -3.0]])
LAMS = [2.0 ** k for k in range(4, 9)]


def test_constants_examples():
    c = BoundConstants.from_values(1.0, 1.0, 2.0)
    assert c.K1 == pytest.approx(2 * math.e, abs=1e-5)
    assert c.K3 == pytest.approx(4 * math.e, abs=1e-5)
    k1, k3 = 2 * math.e, 4 * math.e
    assert c.K2 == pytest.approx(k3 * (2 + k1) / (k3 - 1), rel=1e-14)
    assert c.K2 == pytest.approx(8.1898, abs=1e-3)
    c = BoundConstants.from_values(0.5, 1.0, 1.0)
    assert c.K1 == pytest.approx(math.exp(0.5)) and c.K3 == c.K1
    assert BoundConstants.from_values(0.25, 1.0, 3.0).K1 == pytest.approx(math.exp(0.25))
    with pytest.raises(ValueError, match="K3"):
        BoundConstants.from_values(0.0, 1.0, 1.0)


def test_constants_from_model():
    c = bound_constants(mmbm_model())
    assert (c.Mbar, c.K1) == (0.0, 1.0)
    assert c.K3 == pytest.approx(2.1 / 0.9) and c.K2 == pytest.approx(5.25)
    # undeclared M* is estimated
    assert bound_constants(sin_volatility_model()).Mbar == pytest.approx(1.5, rel=1e-3)


def _routes(model, J, b, lam, kit=None):
    kit = kit or LampertiKit(model)
    f = polygonal_approx(b, lam)
    s, sl = build_S(kit, J, b), build_S(kit, J, f, grid=b.grid)
    return f, s, sl, inverse_transform(kit, J, s), inverse_transform(kit, J, sl)


def test_identical_drivers_no_jumps():
    m = mmbm_model()
    J = JumpPath(1.0, [0.0], [0])
    b = sample_brownian(1.0, 2 ** -8, 0)
    kit = LampertiKit(m)
    f = polygonal_approx(b, 2 ** 8, resolution=1.0)
    s, sl = build_S(kit, J, b), build_S(kit, J, f, grid=b.grid)
    rep = check_pathwise_bound(s, sl, f, b, 0, bound_constants(m))
    assert rep.lhs <= 1e-12 and rep.passed


def test_mmbm_one_jump():
    m = mmbm_model()
    J = sample_jump_path(DeterministicGenerator([(0.0, 0), (0.4, 1)]), 0, 1.0, None)
    b = sample_brownian(1.0, 2 ** -12, 3, forced_times=[0.4])
    f, s, sl, _, _ = _routes(m, J, b, 2 ** 6)
    rep = check_pathwise_bound(s, sl, f, b, 1, bound_constants(m), detailed=True)
    assert rep.passed and rep.lhs > 0 and rep.rhs > rep.lhs
    assert len(rep.segments) == 2 and all(seg.passed for seg in rep.segments)


def test_wide_volatility_ratio_three_jumps():
    m = constant_model([0.5, -0.5], [0.55, 3.9], v=0.5, V=4.0, mstar=[0.0, 0.0])
    c = bound_constants(m)
    gen = DeterministicGenerator([(0.0, 0), (0.2, 1), (0.5, 0), (0.8, 1)])
    J = sample_jump_path(gen, 0, 1.0, None)
    kit = LampertiKit(m)
    for seed in range(100):
        b = sample_brownian(1.0, 2 ** -10, seed, forced_times=J.epochs[1:])
        f, s, sl, _, _ = _routes(m, J, b, 2 ** 7, kit)
        assert check_pathwise_bound(s, sl, f, b, 3, c, detailed=True).passed


def test_pathwise_rejects_uncoupled_and_foreign_paths():
    m = mmbm_model()
    kit = LampertiKit(m)
    J = JumpPath(1.0, [0.0], [0])
    b = sample_brownian(1.0, 2 ** -8, 0)
    f, s, sl, _, _ = _routes(m, J, b, 16)
    with pytest.raises(ValueError, match="uncoupled"):
        check_pathwise_bound(s, sl, transport_process(16, 1.0, 0), b, 0, bound_constants(m))
    other = sample_brownian(1.0, 2 ** -8, 1)
    with pytest.raises(ValueError):
        check_pathwise_bound(s, sl, f, other, 0, bound_constants(m))
    J2 = JumpPath(1.0, [0.0], [1])
    with pytest.raises(ValueError, match="jump"):
        check_pathwise_bound(build_S(kit, J2, b), sl, f, b, 0, bound_constants(m))


def test_x_bound_identity_transform():
    m = constant_model([0.3], [1.0], v=1.0, V=1.0 + 1e-9)
    J = JumpPath(1.0, [0.0], [0])
    b = sample_brownian(1.0, 2 ** -10, 2)
    f, s, sl, x, xl = _routes(m, J, b, 32)
    rep = check_x_bound(x, xl, s, sl, m.V)
    assert rep.lhs == pytest.approx(rep.s_dist, rel=1e-14) and rep.passed


def test_x_bound_tight_for_constant_sigma():
    m = constant_model([0.3], [2.0], v=2.0, V=2.0)
    J = JumpPath(1.0, [0.0], [0])
    b = sample_brownian(1.0, 2 ** -10, 2)
    f, s, sl, x, xl = _routes(m, J, b, 32)
    rep = check_x_bound(x, xl, s, sl, m.V, slack=0.0)
    assert abs(rep.lhs - 2.0 * rep.s_dist) <= 1e-9


def _family(f, d1, d2, d22):
    return ItoFunction(f, d1, d2, d22)


IDENTITY = _family(lambda i, t, x: x, lambda i, t, x: 0.0, lambda i, t, x: 1.0, lambda i, t, x: 0.0)
SQUARE = _family(lambda i, t, x: x * x, lambda i, t, x: 0.0, lambda i, t, x: 2 * x, lambda i, t, x: 2.0)
LINEAR_T = _family(lambda i, t, x: x + i * t, lambda i, t, x: float(i), lambda i, t, x: 1.0,
                   lambda i, t, x: 0.0)


def test_ito_identity_telescopes():
    b = sample_brownian(1.0, 2 ** -8, 4)
    J = sample_jump_path(MarkovGenerator(Q), 0, 1.0, 3)
    assert verify_ito_rs(IDENTITY, polygonal_approx(b, 16), J, step=2 ** -10) <= 1e-13
    assert verify_ito_rs(IDENTITY, transport_process(50, 1.0, 1), J, step=2 ** -10) <= 1e-13


def test_ito_square_first_order_in_step():
    b = sample_brownian(1.0, 2 ** -6, 0)
    z = polygonal_approx(b, 4)
    J = JumpPath(1.0, [0.0], [0])
    r1 = verify_ito_rs(SQUARE, z, J, step=2 ** -12)
    r2 = verify_ito_rs(SQUARE, z, J, step=2 ** -13)
    assert r1 / r2 == pytest.approx(2.0, rel=0.15)
    # the left-point residual is exactly the sum of squared increments
    assert r1 == pytest.approx(2 ** -12 * np.sum(z.slopes ** 2 * np.diff(z.breakpoints)), rel=1e-6)


def test_ito_jump_bookkeeping():
    b = sample_brownian(1.0, 2 ** -8, 1)
    J = JumpPath(1.0, [0.0, 0.5], [0, 3])
    assert verify_ito_rs(LINEAR_T, polygonal_approx(b, 8), J, step=2 ** -9) <= 1e-10
    # single regime: no jump term at all
    assert verify_ito_rs(LINEAR_T, polygonal_approx(b, 8), JumpPath(1.0, [0.0], [0]), step=2 ** -9) <= 1e-10


def test_ito_brownian_quadratic_variation():
    J = JumpPath(1.0, [0.0], [0])
    res = [verify_ito_rs(SQUARE, sample_brownian(1.0, h, 5), J) for h in (2 ** -8, 2 ** -16)]
    assert res[1] < res[0] and res[1] < 0.02


def test_ito_needs_derivatives():
    with pytest.raises(ValueError):
        ItoFunction(lambda i, t, x: x, None, lambda i, t, x: 1.0, lambda i, t, x: 0.0)


def test_synthetic_slopes():
    m = mmbm_model()
    gen = MarkovGenerator(Q)
    est = estimate_rate(m, gen, "polygonal", LAMS, 50, error_fn=lambda lam, p: lam ** -0.5)
    assert est.slope == pytest.approx(-0.5, abs=1e-12)
    est = estimate_rate(m, gen, "polygonal", LAMS, 50, error_fn=lambda lam, p: 0.3)
    assert est.slope == pytest.approx(0.0, abs=1e-12)


def test_rate_tail_table():
    est = estimate_rate(mmbm_model(), MarkovGenerator(Q), "polygonal", LAMS, 10,
                        error_fn=lambda lam, p: (p + 1) / 10.0, gamma=1.0, epsilon=0.0)
    th = est.thresholds()
    assert est.tail_counts().tolist() == [int(np.sum((np.arange(10) + 1) / 10.0 >= t)) for t in th]


def test_rate_preconditions():
    m, gen = mmbm_model(), MarkovGenerator(Q)
    with pytest.raises(ValueError):
        estimate_rate(m, gen, "polygonal", LAMS[:3], 5)
    with pytest.raises(ValueError, match="uncoupled"):
        estimate_rate(m, gen, "transport", LAMS, 5)
    with pytest.raises(BudgetExceeded):
        estimate_rate(m, gen, "polygonal", LAMS, 5, max_path_steps=1000)


def test_rate_run_is_deterministic_across_workers():
    m, gen = mmbm_model(), MarkovGenerator(Q)
    a = estimate_rate(m, gen, "polygonal", LAMS, 6, seed=9, workers=1)
    b = estimate_rate(m, gen, "polygonal", LAMS, 6, seed=9, workers=3)
    assert np.array_equal(a.x_errors, b.x_errors) and np.array_equal(a.s_errors, b.s_errors)
    assert np.all(a.x_errors <= m.V * a.s_errors * (1 + 1e-9))
    assert a.summary()["n_paths"] == 6


def test_transport_summary_runs():
    out = transport_summary(mmbm_model(), MarkovGenerator(Q), [4.0, 16.0], 20, step=2 ** -7, seed=1)
    assert len(out["ks_distance"]) == 2 and all(0 <= d <= 1 for d in out["ks_distance"])


def _bisect_a(g0, q, lam):
    return optimize.bisect(lambda a: a * (math.log(a) - g0) / q - math.log(lam), math.exp(g0), 1e6,
                           xtol=1e-14, rtol=1e-15, maxiter=500)


def test_a_lambda_examples():
    assert a_lambda(0.7, 2.0, 1.0) == pytest.approx(math.exp(0.7), rel=1e-15)
    g0 = math.log(2) + 1
    assert a_lambda(g0, 2.0, 10.0) == pytest.approx(_bisect_a(g0, 2.0, 10.0), abs=1e-8)
    with pytest.raises(ValueError):
        a_lambda(1.0, 0.0, 10.0)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([2.0, 10.0, 1e3, 1e6]), st.sampled_from([1.0, math.log(2) + 1]), st.floats(0.2, 5.0))
def test_a_lambda_identity(lam, g0, q):
    a = a_lambda(g0, q, lam)
    assert f_gamma_q(g0, q, a) == pytest.approx(lam, rel=1e-8)


def test_path_seeds_are_distinct():
    s = [path_seeds(0, i) for i in range(3)]
    draws = {np.random.default_rng(x).integers(2 ** 62) for triple in s for x in triple}
    assert len(draws) == 9
