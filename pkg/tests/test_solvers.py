import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wzrs.analysis import bound_constants, path_seeds
from wzrs.drivers import BrownianPath, DriverPath, polygonal_approx, sample_brownian, sup_distance
from wzrs.jumps import JumpPath, MarkovGenerator, sample_jump_path
from wzrs.lamperti import LampertiKit
from wzrs.model import CoefficientSet, RegimeCoefficients, constant_model, mmbm_model, sin_volatility_model
from wzrs.solvers import (build_S, build_S_lambda, euler_maruyama_rs, inverse_transform, lamperti_flow,
                          wz_ode_solve)

Q = np.array([[-2.0, 2.0], [3.0, -3.0]])
NO_JUMPS = JumpPath(1.0, [0.0], [0])


def _realization(seed, step=2 ** -10, gen=MarkovGenerator(Q)):
    sj, sb, _ = path_seeds(seed, 0)
    J = sample_jump_path(gen, 0, 1.0, sj)
    return J, sample_brownian(1.0, step, sb, forced_times=J.epochs[1:])


def test_euler_unit_diffusion_is_brownian():
    m = constant_model([0.0], [1.0], x0=0.25)
    b = sample_brownian(1.0, 2 ** -8, 0)
    x = euler_maruyama_rs(m, NO_JUMPS, b)
    assert np.max(np.abs(x.values - (0.25 + b.values))) <= 1e-13


def test_euler_zero_path_piecewise_ode():
    m = constant_model([1.0, 2.0], [1.0, 1.0], x0=0.1)
    J = JumpPath(1.0, [0.0, 0.5], [0, 1])
    grid = np.linspace(0, 1, 11)
    x = euler_maruyama_rs(m, J, BrownianPath(grid, np.zeros(11), 0.1))
    assert x.values[-1] == pytest.approx(0.1 + 1.5, abs=1e-14)


def test_euler_constant_coefficients_summation_oracle():
    m = constant_model([0.7, -0.4], [1.3, 0.6], x0=-0.2)
    J, b = _realization(4)
    x = euler_maruyama_rs(m, J, b)
    j = J.regime_at(b.grid[:-1])
    mu, sig = np.array([0.7, -0.4])[j], np.array([1.3, 0.6])[j]
    ref = -0.2 + np.concatenate([[0.0], np.cumsum(mu * np.diff(b.grid) + sig * np.diff(b.values))])
    assert np.max(np.abs(x.values - ref)) <= 1e-12


def test_euler_needs_epochs_in_grid():
    J = JumpPath(1.0, [0.0, 0.3], [0, 1])
    with pytest.raises(ValueError, match="epochs"):
        euler_maruyama_rs(mmbm_model(), J, sample_brownian(1.0, 0.25, 0))


def test_wz_constant_sigma_scales_driver():
    m = constant_model([0.0], [1.7], x0=0.5)
    b = sample_brownian(1.0, 2 ** -9, 1)
    f = polygonal_approx(b, 2 ** 5)
    x = wz_ode_solve(m, NO_JUMPS, f, step=2 ** -9)
    assert np.max(np.abs(x.values - (0.5 + 1.7 * f(x.times)))) <= 1e-13


def test_wz_on_brownian_grid_reproduces_b():
    m = constant_model([0.0], [1.0])
    b = sample_brownian(1.0, 2 ** -8, 2)
    f = polygonal_approx(b, 2 ** 8, resolution=1.0)
    x = wz_ode_solve(m, NO_JUMPS, f, grid=b.grid)
    assert np.max(np.abs(x.values - b.values)) <= 1e-13


def test_wz_self_convergence_towards_euler():
    m = sin_volatility_model()
    b = sample_brownian(1.0, 2 ** -13, 8)
    xe = euler_maruyama_rs(m, NO_JUMPS, b)
    errs = [wz_ode_solve(m, NO_JUMPS, polygonal_approx(b, lam), grid=b.grid).sup_diff(xe) for lam in (2 ** 6, 2 ** 10)]
    assert errs[0] >= 2 * errs[1]


def test_flow_constant_drift_is_linear(mmbm):
    kit = LampertiKit(mmbm)
    b = sample_brownian(1.0, 2 ** -8, 3)
    u, y = lamperti_flow(kit, 0, 0.4, 0.25, 0.5, b)
    assert np.max(np.abs(y - (0.4 + 1.0 * u))) <= 1e-13
    u, y = lamperti_flow(kit, 1, 0.4, 0.25, 0.5, b)
    assert np.max(np.abs(y - (0.4 - 0.5 * u))) <= 1e-13


def test_flow_linear_decay():
    rc = RegimeCoefficients(mu=lambda t, x: -x, sigma=lambda t, x: 1.0, d1_sigma=lambda t, x: 0.0,
                            d2_sigma=lambda t, x: 0.0)
    kit = LampertiKit(CoefficientSet((rc,), 0.0, 0.5, 2.0, 1.0))
    w = DriverPath("synthetic", 1.0, np.array([0.0, 1.0]), np.zeros(2), coupled=True)
    u, y = lamperti_flow(kit, 0, 2.0, 0.0, 1.0, w, step=2 ** -7)
    assert abs(y[-1] - 2.0 * math.exp(-1.0)) <= 1e-8


def test_flow_gronwall_sensitivity():
    m = sin_volatility_model()
    kit = LampertiKit(m)
    k1 = bound_constants(m, mbar=1.5).K1
    for seed in range(5):
        b = sample_brownian(1.0, 2 ** -10, seed)
        f = polygonal_approx(b, 2 ** 6)
        for a, c in [(0.0, 0.0), (0.3, 0.1), (-1.0, -1.2)]:
            _, ya = lamperti_flow(kit, 0, a, 0.0, 1.0, f, step=2 ** -10)
            _, yb = lamperti_flow(kit, 0, c, 0.0, 1.0, b, step=2 ** -10)
            assert np.max(np.abs(ya - yb)) <= k1 * (sup_distance(f, b) + abs(a - c))


def test_build_S_constant_coefficients():
    m = constant_model([0.6, -1.0], [1.5, 0.5])
    kit = LampertiKit(m)
    J, b = _realization(6)
    s = build_S(kit, J, b)
    mu_star = np.array([0.4, -2.0])
    for a, e in zip(np.r_[0, np.flatnonzero(s.is_epoch)], np.r_[np.flatnonzero(s.is_epoch), b.grid.size - 1]):
        seg = slice(a, e)
        t, w = s.times[seg], b.values[seg]
        ref = s.values[a] + mu_star[s.regimes[a]] * (t - t[0]) + (w - w[0])
        assert np.max(np.abs(s.values[seg] - ref)) <= 1e-12
    for k in np.flatnonzero(s.is_epoch):
        sig = np.array([1.5, 0.5])
        assert s.values[k] == pytest.approx(s.left[k] * sig[s.regimes[k - 1]] / sig[s.regimes[k]], abs=1e-13)
    assert J.n_jumps > 0


def test_build_S_unit_diffusion_zero_drift():
    kit = LampertiKit(constant_model([0.0], [1.0]))
    b = sample_brownian(1.0, 2 ** -8, 9)
    assert np.array_equal(build_S(kit, NO_JUMPS, b).values, b.values)


def test_build_S_lambda_requires_driver(mmbm):
    kit = LampertiKit(mmbm)
    b = sample_brownian(1.0, 2 ** -8, 9)
    with pytest.raises(TypeError):
        build_S_lambda(kit, NO_JUMPS, b)


def test_inverse_unit_sigma():
    kit = LampertiKit(constant_model([0.3], [1.0], x0=1.25))
    b = sample_brownian(1.0, 2 ** -8, 1)
    s = build_S(kit, NO_JUMPS, b)
    assert np.max(np.abs(inverse_transform(kit, NO_JUMPS, s).values - (1.25 + s.values))) <= 1e-15


def test_inverse_continuity_at_epochs():
    m = mmbm_model()
    kit = LampertiKit(m, use_closed_form=False)
    n = 0
    for seed in range(6):
        J, b = _realization(seed, step=2 ** -8)
        x = inverse_transform(kit, J, build_S(kit, J, b))
        gaps = np.abs(x.values - x.left)[x.is_epoch]
        n += gaps.size
        assert np.all(gaps <= 2 * kit.root_tol * m.V)
    assert n > 0


def test_round_trip_through_euler_path():
    m = sin_volatility_model(n_regimes=2, offset=[2.0, 2.5])
    kit = LampertiKit(m, use_closed_form=False)
    J, b = _realization(3, step=2 ** -7)
    xe = euler_maruyama_rs(m, J, b)
    ell = [kit.h(int(j), t, x) for j, t, x in zip(xe.regimes, xe.times, xe.values)]
    back = [kit.h_inv(int(j), t, e) for j, t, e in zip(xe.regimes, xe.times, ell)]
    assert np.max(np.abs(np.array(back) - xe.values)) <= 1e-8


def test_inverse_rejects_foreign_jump_path(mmbm):
    kit = LampertiKit(mmbm)
    J, b = _realization(5)
    s = build_S(kit, J, b)
    with pytest.raises(ValueError, match="different jump path"):
        inverse_transform(kit, JumpPath(1.0, [0.0], [0]), s)
    with pytest.raises(ValueError):
        inverse_transform(kit, J, euler_maruyama_rs(mmbm, J, b))


def test_two_route_consistency_mmbm(mmbm):
    kit = LampertiKit(mmbm)
    worst = 0.0
    for seed in range(50):
        J, b = _realization(seed, step=2 ** -14)
        worst = max(worst, inverse_transform(kit, J, build_S(kit, J, b)).sup_diff(euler_maruyama_rs(mmbm, J, b)))
    assert worst <= 0.05


def test_two_route_consistency_refines_for_sin_volatility():
    m = sin_volatility_model(n_regimes=2, offset=[2.0, 2.5])
    kit = LampertiKit(m)
    errs = []
    for step in (2 ** -8, 2 ** -12):
        e = []
        for seed in range(8):
            J, b = _realization(seed, step=step)
            e.append(inverse_transform(kit, J, build_S(kit, J, b)).sup_diff(euler_maruyama_rs(m, J, b)))
        errs.append(np.median(e))
    assert errs[1] < 0.5 * errs[0]


def test_unit_diffusion_quadratic_variation_vanishes():
    m = sin_volatility_model(n_regimes=2, offset=[2.0, 2.5])
    kit = LampertiKit(m)
    J, b = _realization(1, step=2 ** -14)
    qv = []
    for k in (8, 10, 12, 14):
        g = np.linspace(0, 1, 2 ** k + 1)
        bk = b.restrict(np.union1d(g, J.epochs[1:]))
        s = build_S(kit, J, bk)
        d = np.diff(s.left - bk.values)
        d[s.is_epoch[1:]] = 0.0
        qv.append(np.sum(d * d))
    slope = np.polyfit(np.log2([2.0 ** -k for k in (8, 10, 12, 14)]), np.log2(qv), 1)[0]
    assert slope > 0.8


def test_csv_export_and_determinism(tmp_path, mmbm):
    kit = LampertiKit(mmbm)
    J, b = _realization(7)
    s1, s2 = build_S(kit, J, b), build_S(kit, J, b)
    s1.to_csv(tmp_path / "a.csv")
    s2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["t", "value", "regime", "is_epoch", "left_limit"]
    assert len(rows) == b.grid.size + 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([2 ** 4, 2 ** 6]))
def test_exact_route_consistency_property(seed, lam):
    m = sin_volatility_model(n_regimes=2, offset=[2.0, 2.5])
    kit = LampertiKit(m)
    J, b = _realization(seed, step=2 ** -10)
    f = polygonal_approx(b, lam)
    xs = inverse_transform(kit, J, build_S(kit, J, f, grid=b.grid))
    xw = wz_ode_solve(m, J, f, grid=b.grid)
    assert xs.sup_diff(xw) <= 1e-4
