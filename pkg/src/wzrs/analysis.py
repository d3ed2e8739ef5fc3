"""Bound constants, pathwise inequality checks, the regime-switching Ito
formula check, and the Monte Carlo strong-rate harness."""

from __future__ import annotations

import csv
import json
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .drivers import (TIME_TOL, BrownianPath, DriverPath, RateFunction, merge_times, polygonal_approx,
                      polygonal_rate, sample_brownian, sup_distance, transport_process, uniform_grid)
from .jumps import JumpPath, sample_jump_path
from .lamperti import LampertiKit
from .model import AssumptionGrid, CoefficientSet, estimate_mstar
from .solvers import SolutionPath, _path_key, build_S, inverse_transform
from .specfun import f_inverse

__all__ = [
    "BoundConstants",
    "bound_constants",
    "PathwiseReport",
    "SegmentCheck",
    "XBoundReport",
    "check_pathwise_bound",
    "check_x_bound",
    "ItoFunction",
    "verify_ito_rs",
    "BudgetExceeded",
    "RateEstimate",
    "estimate_rate",
    "transport_summary",
    "a_lambda",
    "path_seeds",
]


class BudgetExceeded(RuntimeError):
    """The requested sweep needs more path-steps than the configured cap."""


# -- constants ----------------------------------------------------------------

@dataclass(frozen=True)
class BoundConstants:
    Mbar: float
    K1: float
    K2: float
    K3: float
    v: float
    V: float

    @classmethod
    def from_values(cls, Mbar: float, v: float, V: float) -> "BoundConstants":
        if Mbar < 0 or not 0 < v <= V:
            raise ValueError(f"need Mbar >= 0 and 0 < v <= V, got {Mbar}, {v}, {V}")
        K1 = max(2.0 * Mbar, 1.0) * math.exp(Mbar)
        K3 = K1 * V / v
        if K3 <= 1.0:
            raise ValueError(f"K3 = {K3} <= 1: the pathwise constant K2 is undefined")
        K2 = K3 * (2.0 + K1) / (K3 - 1.0)
        return cls(float(Mbar), K1, K2, K3, float(v), float(V))

    def rhs(self, n_jumps: int, dist: float) -> float:
        return self.K2 * self.K3 ** n_jumps * dist


DEFAULT_MSTAR_GRID = AssumptionGrid(T=1.0, x_lo=-5.0, x_hi=5.0, dt=0.05, dx=0.01)


def bound_constants(model: CoefficientSet, mbar: Optional[float] = None,
                    grid: Optional[AssumptionGrid] = None) -> BoundConstants:
    """Gronwall and pathwise constants for ``model``.

    ``Mbar`` is taken from ``mbar``, else the model's declared ``mstar``,
    else estimated on ``grid`` (a lower estimate of the true Lipschitz constant).
    """
    if mbar is None:
        if model.mstar is not None:
            mbar = max(model.mstar)
        else:
            grid = grid or DEFAULT_MSTAR_GRID
            kit = LampertiKit(model)
            mbar = max(estimate_mstar(model, i, grid, kit) for i in range(model.n_regimes))
    return BoundConstants.from_values(mbar, model.v, model.V)


# -- pathwise checks ----------------------------------------------------------

@dataclass(frozen=True)
class SegmentCheck:
    start: float
    end: float
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs


@dataclass(frozen=True)
class PathwiseReport:
    lhs: float
    rhs: float
    bound: float
    fb_dist: float
    n_jumps: int
    slack: float
    slack_abs: float
    segments: tuple = ()

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs and all(s.passed for s in self.segments)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "bound": self.bound, "margin": self.margin,
                "fb_dist": self.fb_dist, "n_jumps": self.n_jumps, "passed": self.passed,
                "segments_failed": sum(not s.passed for s in self.segments)}


def _same_realization(s: SolutionPath, s_lambda: SolutionPath, f: Optional[DriverPath] = None,
                      b: Optional[BrownianPath] = None) -> None:
    if s.provenance.get("jumps") != s_lambda.provenance.get("jumps"):
        raise ValueError("paths were built from different jump paths")
    if b is not None and s.provenance.get("driver_key") not in (None, _path_key(b)):
        raise ValueError("S was not built from the given Brownian path")
    if f is not None and s_lambda.provenance.get("driver_key") not in (None, _path_key(f)):
        raise ValueError("S_lambda was not built from the given driver path")
    if s.times.shape != s_lambda.times.shape or np.any(np.abs(s.times - s_lambda.times) > TIME_TOL):
        raise ValueError("paths live on different grids")


def check_pathwise_bound(s: SolutionPath, s_lambda: SolutionPath, f: DriverPath, b: BrownianPath,
                         n_jumps: int, c: BoundConstants, slack: float = 1e-3, slack_abs: float = 1e-6,
                         detailed: bool = False) -> PathwiseReport:
    """Check ``sup|S_lambda - S| <= K2 K3**N sup|F - B| (1 + slack) + slack_abs``.

    With ``detailed`` the Gronwall inequality is also checked on every
    inter-jump segment, for ``Y = S - (w - w_{t_n})`` started at the two
    post-jump values ``a`` and ``b``.
    """
    if not f.coupled:
        raise ValueError("uncoupled driver: pathwise bounds need a driver built from the same Brownian path")
    _same_realization(s, s_lambda, f, b)
    dist = sup_distance(f, b)
    lhs = s_lambda.sup_diff(s)
    bound = c.rhs(n_jumps, dist)
    rhs = bound * (1.0 + slack) + slack_abs
    segments = []
    if detailed:
        t = s.times
        fv, bv = f(t), b(t)
        cuts = [0] + np.flatnonzero(s.is_epoch).tolist() + [t.size - 1]
        for a, e in zip(cuts[:-1], cuts[1:]):
            if e <= a:
                continue
            # Y on [t_a, t_e): right values, plus the left limit at t_e
            y_l = np.append(s_lambda.values[a:e], s_lambda.left[e]) - (fv[a:e + 1] - fv[a])
            y = np.append(s.values[a:e], s.left[e]) - (bv[a:e + 1] - bv[a])
            start_gap = abs(s_lambda.values[a] - s.values[a])
            seg_rhs = c.K1 * (dist + start_gap) * (1.0 + slack) + slack_abs
            segments.append(SegmentCheck(float(t[a]), float(t[e]), float(np.max(np.abs(y_l - y))), seg_rhs))
    return PathwiseReport(lhs, rhs, bound, dist, int(n_jumps), slack, slack_abs, tuple(segments))


@dataclass(frozen=True)
class XBoundReport:
    lhs: float
    s_dist: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.s_dist if self.s_dist > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "s_dist": self.s_dist, "rhs": self.rhs, "ratio": self.ratio,
                "passed": self.passed}


def check_x_bound(x: SolutionPath, x_lambda: SolutionPath, s: SolutionPath, s_lambda: SolutionPath,
                  V: float, slack: float = 1e-6) -> XBoundReport:
    """Check ``sup|X_lambda - X| <= V sup|S_lambda - S| (1 + slack)``."""
    _same_realization(s, s_lambda)
    _same_realization(x, x_lambda)
    if x.provenance.get("jumps") != s.provenance.get("jumps"):
        raise ValueError("X and S paths come from different jump paths")
    lhs = x_lambda.sup_diff(x)
    sd = s_lambda.sup_diff(s)
    return XBoundReport(lhs, sd, V * sd * (1.0 + slack))


# -- Ito formula --------------------------------------------------------------

@dataclass(frozen=True)
class ItoFunction:
    """Per-regime function ``f(i, t, x)`` with partial derivatives in the same signature."""

    f: Callable[[int, float, float], float]
    d1: Callable[[int, float, float], float]
    d2: Callable[[int, float, float], float]
    d22: Callable[[int, float, float], float]

    def __post_init__(self):
        for name in ("f", "d1", "d2", "d22"):
            if not callable(getattr(self, name)):
                raise ValueError(f"missing derivative function {name!r}")


def verify_ito_rs(fam: ItoFunction, z: Union[BrownianPath, DriverPath], jumps: JumpPath,
                  step: Optional[float] = None) -> float:
    """Largest gap between ``f_{J_t}(t, Z_t)`` and the right side of the
    regime-switching Ito formula, over the grid times.

    Time integrals use left Riemann sums and ``dZ`` integrals use the
    left-point rule with exact cell increments. The quadratic variation is
    ``t`` for a Brownian path and 0 for a finite-variation driver. The
    grid is the path's own grid (Brownian) or a uniform ``step`` grid merged
    with the driver breakpoints; jump epochs are always included.
    """
    brownian = isinstance(z, BrownianPath)
    if brownian:
        times = merge_times(z.grid, jumps.epochs[1:])
    else:
        if step is None:
            raise ValueError("a finite-variation driver needs a grid step")
        times = merge_times(uniform_grid(z.T, step), z.knots, jumps.epochs[1:])
    if times[-1] > jumps.T + TIME_TOL:
        raise ValueError("the jump path does not cover the driver horizon")
    zv = z(times).tolist()
    regs = jumps.regime_at(times).tolist()
    before = jumps.regime_before(times).tolist()
    tl = times.tolist()
    f, d1, d2, d22 = fam.f, fam.d1, fam.d2, fam.d22
    rhs = f(regs[0], 0.0, zv[0])
    worst = 0.0
    for k in range(len(tl) - 1):
        i, t, x = regs[k], tl[k], zv[k]
        dt = tl[k + 1] - t
        dz = zv[k + 1] - x
        rhs += d1(i, t, x) * dt + d2(i, t, x) * dz
        if brownian:
            rhs += 0.5 * d22(i, t, x) * dt
        t1, x1, i1, i0 = tl[k + 1], zv[k + 1], regs[k + 1], before[k + 1]
        if i1 != i0:
            rhs += f(i1, t1, x1) - f(i0, t1, x1)
        worst = max(worst, abs(f(i1, t1, x1) - rhs))
    return worst


# -- rate harness -------------------------------------------------------------

def path_seeds(master: int, index: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence, np.random.SeedSequence]:
    """Independent streams (jumps, Brownian, transport) for one path index."""
    return tuple(np.random.SeedSequence([int(master), int(index)]).spawn(3))


StepRule = Union[float, Callable[[float], float]]


def _step_for(rule: StepRule, lam: float) -> float:
    if callable(rule):
        return float(rule(lam))
    return 1.0 / (float(rule) * lam)


@dataclass
class RateEstimate:
    """Per-(lambda, path) sup errors with a log-log fit of the medians."""

    lams: np.ndarray
    seeds: np.ndarray
    x_errors: np.ndarray
    s_errors: np.ndarray
    fb_dist: np.ndarray
    n_jumps: np.ndarray
    gamma: float
    epsilon: float
    q: float
    rate: RateFunction
    slope: float = field(init=False)
    intercept: float = field(init=False)
    slope_s: float = field(init=False)

    def __post_init__(self):
        if self.lams.size < 4:
            raise ValueError("a rate fit needs at least 4 lambda values")
        if np.any(self.x_errors < 0) or np.any(self.s_errors < 0):
            raise ValueError("errors must be non-negative")
        self.slope, self.intercept = _fit(self.lams, self.medians_x)
        self.slope_s, _ = _fit(self.lams, self.medians_s)

    @property
    def medians_x(self) -> np.ndarray:
        return np.median(self.x_errors, axis=1)

    @property
    def medians_s(self) -> np.ndarray:
        return np.median(self.s_errors, axis=1)

    def thresholds(self) -> np.ndarray:
        return np.array([self.gamma * self.rate(float(l)) * float(l) ** self.epsilon for l in self.lams])

    def tail_counts(self, which: str = "x") -> np.ndarray:
        err = self.x_errors if which == "x" else self.s_errors
        return np.sum(err >= self.thresholds()[:, None], axis=1)

    def tail_probabilities(self, which: str = "x") -> np.ndarray:
        return self.tail_counts(which) / self.x_errors.shape[1]

    def summary(self) -> dict:
        return {
            "lambdas": [float(l) for l in self.lams],
            "n_paths": int(self.x_errors.shape[1]),
            "slope": float(self.slope),
            "intercept": float(self.intercept),
            "slope_S": float(self.slope_s),
            "median_X_err": [float(m) for m in self.medians_x],
            "median_S_err": [float(m) for m in self.medians_s],
            "rate": self.rate.tag,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "q": self.q,
            "thresholds": [float(t) for t in self.thresholds()],
            "tail_counts_X": [int(c) for c in self.tail_counts("x")],
            "tail_counts_S": [int(c) for c in self.tail_counts("s")],
            "reference_lambda_pow_minus_q": [float(l) ** -self.q for l in self.lams],
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "seed", "sup_X_err", "sup_S_err", "sup_FB_dist", "N"])
            for a, lam in enumerate(self.lams):
                for p, seed in enumerate(self.seeds):
                    w.writerow([repr(float(lam)), int(seed), repr(float(self.x_errors[a, p])),
                                repr(float(self.s_errors[a, p])), repr(float(self.fb_dist[a, p])),
                                int(self.n_jumps[p])])

    def write_summary(self, path, extra: Optional[dict] = None) -> None:
        data = self.summary()
        if extra:
            data.update(extra)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fit(lams: np.ndarray, medians: np.ndarray) -> tuple[float, float]:
    if np.any(medians <= 0):
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(np.log(lams), np.log(medians), 1)
    return float(slope), float(intercept)


# worker state for forked pools; set by _init_worker
_TASK: dict = {}


def _init_worker(task: dict) -> None:
    global _TASK
    _TASK = task


def _simulate_path(index: int) -> tuple[int, list, list, list, int]:
    """All lambda cells for one path index (the same J and B feed every lambda)."""
    t = _TASK
    kit, lams, steps, T = t["kit"], t["lams"], t["steps"], t["T"]
    sj, sb, _ = path_seeds(t["seed"], index)
    J = sample_jump_path(t["gen"], t["j0"], T, sj)
    epochs = J.epochs[1:]
    grids = [merge_times(uniform_grid(T, h), epochs) for h in steps]
    fine = merge_times(np.concatenate(grids), epochs)
    # Brownian increments on the union of all lambda grids
    rng = np.random.default_rng(sb)
    inc = rng.standard_normal(fine.size - 1) * np.sqrt(np.diff(fine))
    full = BrownianPath(fine, np.concatenate([[0.0], np.cumsum(inc)]), float(np.max(np.diff(fine))))
    xe, se, fb = [], [], []
    for lam, h, g in zip(lams, steps, grids):
        B = full.restrict(g)
        B = BrownianPath(B.grid, B.values, h, None)
        F = polygonal_approx(B, lam)
        S = build_S(kit, J, B)
        Sl = build_S(kit, J, F, grid=B.grid)
        X = inverse_transform(kit, J, S)
        Xl = inverse_transform(kit, J, Sl)
        xe.append(Xl.sup_diff(X))
        se.append(Sl.sup_diff(S))
        fb.append(sup_distance(F, B))
    return index, xe, se, fb, J.n_jumps


def _run_cells(task: dict, fn, indices: Sequence[int], workers: int) -> list:
    if workers <= 1 or len(indices) < 2:
        _init_worker(task)
        return [fn(i) for i in indices]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx, initializer=_init_worker,
                             initargs=(task,)) as pool:
        return list(pool.map(fn, indices, chunksize=max(1, len(indices) // (4 * workers))))


def estimate_rate(model: CoefficientSet, jump_gen, driver_kind: str, lambda_grid: Sequence[float],
                  n_paths: int, step_rule: StepRule = 8.0, gamma: float = 1.0, epsilon: float = 0.0,
                  q: float = 1.0, seed: int = 0, *, j0: int = 0, T: float = 1.0, workers: int = 1,
                  max_path_steps: Optional[int] = None, rate: Optional[RateFunction] = None,
                  kit: Optional[LampertiKit] = None,
                  error_fn: Optional[Callable[[float, int], Union[float, tuple]]] = None) -> RateEstimate:
    """Monte Carlo strong-error sweep over ``lambda_grid``.

    For each path index the jump path and one Brownian path (on the union of
    all lambda grids) are drawn from streams derived from ``(seed, index)``;
    every lambda then uses the restriction of that Brownian path to its own
    grid ``uniform(step_rule(lam)) + epochs``. A number ``step_rule = r``
    means the step ``1 / (r lam)``.

    ``error_fn(lam, index)`` bypasses simulation and supplies the error
    (or an ``(x_err, s_err)`` pair) directly.

    Raises
    ------
    BudgetExceeded
        If ``n_paths`` times the total grid size exceeds ``max_path_steps``.
    """
    lams = np.asarray(lambda_grid, dtype=float)
    if lams.size < 4 or np.any(np.diff(lams) <= 0) or np.any(lams <= 0):
        raise ValueError("lambda_grid must be positive, increasing, with at least 4 entries")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if driver_kind != "polygonal":
        raise ValueError(f"uncoupled driver {driver_kind!r}: pathwise errors need the polygonal driver "
                         "(use transport_summary for distributional reporting)")
    rate = rate or polygonal_rate
    indices = list(range(n_paths))
    if error_fn is not None:
        xe = np.empty((lams.size, n_paths))
        se = np.empty_like(xe)
        for a, lam in enumerate(lams):
            for p in indices:
                e = error_fn(float(lam), p)
                xe[a, p], se[a, p] = (e, e) if np.ndim(e) == 0 else e
        zeros = np.zeros_like(xe)
        return RateEstimate(lams, np.array(indices), xe, se, zeros, np.zeros(n_paths, dtype=int),
                            gamma, epsilon, q, rate)
    steps = [_step_for(step_rule, float(l)) for l in lams]
    cost = n_paths * sum(int(math.ceil(T / h)) + 1 for h in steps)
    if max_path_steps is not None and cost > max_path_steps:
        raise BudgetExceeded(f"sweep needs about {cost} path-steps, cap is {max_path_steps}")
    task = {"model": model, "kit": kit or LampertiKit(model), "gen": jump_gen, "j0": j0, "T": T,
            "lams": [float(l) for l in lams], "steps": steps, "seed": seed}
    rows = sorted(_run_cells(task, _simulate_path, indices, workers))
    xe = np.array([r[1] for r in rows]).T
    se = np.array([r[2] for r in rows]).T
    fb = np.array([r[3] for r in rows]).T
    nj = np.array([r[4] for r in rows], dtype=int)
    return RateEstimate(lams, np.array(indices), xe, se, fb, nj, gamma, epsilon, q, rate)


def _transport_path(index: int) -> tuple[int, float, list]:
    t = _TASK
    sj, sb, st = path_seeds(t["seed"], index)
    J = sample_jump_path(t["gen"], t["j0"], t["T"], sj)
    B = sample_brownian(t["T"], t["step"], sb, forced_times=J.epochs[1:])
    kit = t["kit"]
    x_end = float(inverse_transform(kit, J, build_S(kit, J, B)).values[-1])
    ends = []
    for a, lam in enumerate(t["lams"]):
        F = transport_process(lam, t["T"], np.random.SeedSequence(st.entropy, spawn_key=st.spawn_key + (a,)))
        Xl = inverse_transform(kit, J, build_S(kit, J, F, step=t["step"]))
        ends.append(float(Xl.values[-1]))
    return index, x_end, ends


def transport_summary(model: CoefficientSet, jump_gen, lambda_grid: Sequence[float], n_paths: int,
                      step: float = 2.0 ** -10, seed: int = 0, *, j0: int = 0, T: float = 1.0,
                      workers: int = 1) -> dict:
    """Distributional comparison of ``X_T`` under transport drivers with ``X_T``.

    The transport process is independent of ``B``, so only laws can be
    compared: the two-sample Kolmogorov-Smirnov distance per lambda is
    reported next to the transport rate.
    """
    from .drivers import transport_rate

    task = {"model": model, "kit": LampertiKit(model), "gen": jump_gen, "j0": j0, "T": T,
            "lams": [float(l) for l in lambda_grid], "step": step, "seed": seed}
    rows = sorted(_run_cells(task, _transport_path, list(range(n_paths)), workers))
    ref = np.array([r[1] for r in rows])
    out = {"lambdas": task["lams"], "rate": "transport", "delta": [], "ks_distance": [], "median_X_T": [],
           "reference_median_X_T": float(np.median(ref))}
    for a, lam in enumerate(task["lams"]):
        vals = np.array([r[2][a] for r in rows])
        out["delta"].append(float(transport_rate(lam)))
        out["ks_distance"].append(float(stats.ks_2samp(vals, ref).statistic))
        out["median_X_T"].append(float(np.median(vals)))
    return out


def a_lambda(gamma0: float, q: float, lam: float) -> float:
    """Solution ``A`` of ``exp(A (log A - gamma0) / q) = lam`` with ``A >= e**gamma0``."""
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    if lam < 1:
        raise ValueError(f"lam must be >= 1, got {lam}")
    return f_inverse(gamma0, q, lam)
