"""
Why the Wong-Zakai correction term matters
==========================================

Driving ``dx = sigma(x) dF`` by a smooth path converges to the Stratonovich
solution. Subtracting ``sigma * sigma' / 2`` from the drift recovers the Ito
solution, here represented by a fine Euler-Maruyama path on the same noise.
"""

import numpy as np

from wzrs import (JumpPath, euler_maruyama_rs, polygonal_approx, sample_brownian, sin_volatility_model,
                  wz_ode_solve)

model = sin_volatility_model()
jumps = JumpPath(1.0, [0.0], [0])

for lam in (2.0 ** 6, 2.0 ** 8, 2.0 ** 10):
    corrected, plain = [], []
    for seed in range(40):
        b = sample_brownian(1.0, 1.0 / (8 * lam), seed)
        f = polygonal_approx(b, lam)
        x = euler_maruyama_rs(model, jumps, b)
        corrected.append(wz_ode_solve(model, jumps, f, grid=b.grid).sup_diff(x))
        plain.append(wz_ode_solve(model, jumps, f, grid=b.grid, correction=False).sup_diff(x))
    print(f"lambda={lam:6.0f}  corrected {np.median(corrected):.4f}   uncorrected {np.median(plain):.4f}")

###############################################################################
# The corrected error keeps shrinking with lambda; the uncorrected one
# levels off at the size of the Ito-Stratonovich drift gap.
