"""
Markov-modulated Brownian motion and its pathwise bounds
=========================================================

A two-regime Brownian motion with drift switches between
``mu = (1, -1)`` and ``sigma = (1, 2)`` at the epochs of a Markov chain.
We build one realization, approximate the Brownian driver by its polygonal
interpolation and compare the transformed paths against the pathwise bound.
"""

import numpy as np

from wzrs import (LampertiKit, MarkovGenerator, bound_constants, build_S, check_pathwise_bound, check_x_bound,
                  inverse_transform, mmbm_model, polygonal_approx, sample_brownian, sample_jump_path)
from wzrs.analysis import path_seeds

model = mmbm_model()
kit = LampertiKit(model)
gen = MarkovGenerator(np.array([[-2.0, 2.0], [3.0, -3.0]]))

###############################################################################
# One realization: the regime path first, then a Brownian path whose grid
# contains every switching epoch.
sj, sb, _ = path_seeds(0, 3)
jumps = sample_jump_path(gen, 0, 1.0, sj)
b = sample_brownian(1.0, 2.0 ** -14, sb, forced_times=jumps.epochs[1:])
print("switching epochs:", np.round(jumps.epochs[1:], 4), "regimes:", jumps.regimes)

###############################################################################
# The transformed path has unit diffusion. With constant coefficients its drift
# is mu/sigma and a switch rescales it by sigma_prev/sigma_new.
f = polygonal_approx(b, 2.0 ** 8)
s = build_S(kit, jumps, b)
s_lam = build_S(kit, jumps, f, grid=b.grid)
for k in np.flatnonzero(s.is_epoch):
    print(f"t={s.times[k]:.4f}  S-={s.left[k]: .4f}  S={s.values[k]: .4f}")

###############################################################################
# Bound check
c = bound_constants(model)
rep = check_pathwise_bound(s, s_lam, f, b, jumps.n_jumps, c, detailed=True)
print(f"K1={c.K1:.3f}  K2={c.K2:.3f}  K3={c.K3:.3f}")
print(f"sup|S^lam - S| = {rep.lhs:.4f}  <=  {rep.rhs:.4f}   ({'ok' if rep.passed else 'violated'})")
# Per segment, the drift part Y = S - (w - w_start) obeys a Gronwall estimate.
# With constant coefficients Y^lam and Y agree until the first switch.
for seg in rep.segments:
    print(f"  sup|Y^lam - Y| on [{seg.start:.3f}, {seg.end:.3f}]: {seg.lhs:.4f} <= {seg.rhs:.4f}")

x, x_lam = inverse_transform(kit, jumps, s), inverse_transform(kit, jumps, s_lam)
xr = check_x_bound(x, x_lam, s, s_lam, model.V)
print(f"sup|X^lam - X| = {xr.lhs:.4f}, V * sup|S^lam - S| = {xr.rhs:.4f}")
