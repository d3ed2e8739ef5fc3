"""
Strong convergence rate of the polygonal Wong-Zakai approximation
================================================================

For each path the same jump path and Brownian path feed every mesh
``1/lambda``; the median sup error is regressed on ``lambda`` in log-log scale.
Pass ``--paths`` to trade accuracy for time.
"""

import argparse

import numpy as np

from wzrs import MarkovGenerator, estimate_rate, mmbm_model

parser = argparse.ArgumentParser()
parser.add_argument("--paths", type=int, default=100)
parser.add_argument("--workers", type=int, default=1)
args = parser.parse_args()

lams = [2.0 ** k for k in range(4, 11)]
est = estimate_rate(mmbm_model(), MarkovGenerator(np.array([[-2.0, 2.0], [3.0, -3.0]])), "polygonal", lams,
                    args.paths, 8.0, gamma=2.0, epsilon=0.1, seed=0, workers=args.workers)

print(f"{'lambda':>8} {'median X err':>13} {'median S err':>13} {'P(err >= thr)':>14}")
for lam, mx, ms, p in zip(est.lams, est.medians_x, est.medians_s, est.tail_probabilities()):
    print(f"{lam:8.0f} {mx:13.5f} {ms:13.5f} {p:14.3f}")
print(f"fitted slope (X): {est.slope:.3f}   (S): {est.slope_s:.3f}")

###############################################################################
# The reference rate carries a logarithmic factor, so over this window it
# decays more slowly than lambda**-0.5.
ref = np.array([est.rate(l) for l in est.lams])
print(f"slope of the reference rate on the same grid: {np.polyfit(np.log(est.lams), np.log(ref), 1)[0]:.3f}")
