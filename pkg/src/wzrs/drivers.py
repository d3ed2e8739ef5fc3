"""Brownian paths and the finite-variation drivers that approximate them.

Two driver families are provided: the polygonal interpolation of a sampled
Brownian path (coupled, used for pathwise checks) and the uniform transport
(telegraph) process ``sqrt(lam) * int_0^t (-1)**M_s ds`` driven by an
independent Poisson clock (uncoupled).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

__all__ = [
    "BrownianPath",
    "DriverPath",
    "RateFunction",
    "ResolutionError",
    "merge_times",
    "uniform_grid",
    "sample_brownian",
    "polygonal_approx",
    "transport_process",
    "sup_distance",
    "polygonal_rate",
    "transport_rate",
]

TIME_TOL = 1e-12


class ResolutionError(ValueError):
    """Brownian grid too coarse for the requested driver mesh."""


def uniform_grid(T: float, step: float) -> np.ndarray:
    n = max(int(math.ceil(T / step - 1e-9)), 1)
    return np.linspace(0.0, T, n + 1)


def merge_times(base: np.ndarray, *forced: Iterable[float], tol: float = TIME_TOL) -> np.ndarray:
    """Sorted union of ``base`` and the forced times.

    Points closer than ``tol`` are merged; a forced time wins over a base
    point so that jump epochs and breakpoints appear bit-exactly, except that
    the two ends of ``base`` are always kept.
    """
    base = np.asarray(base, dtype=float)
    extra = [np.asarray(list(f), dtype=float).ravel() for f in forced]
    extra = np.concatenate(extra) if extra else np.empty(0)
    if extra.size == 0:
        return np.unique(base)
    times = np.concatenate([base, extra])
    prio = np.concatenate([np.zeros(base.size), np.ones(extra.size)])
    if base.size:
        prio[np.argmin(base)] = prio[np.argmax(base)] = 2.0
    order = np.lexsort((-prio, times))
    times, prio = times[order], prio[order]
    # cluster by gaps wider than tol, then keep the highest-priority member
    cluster = np.concatenate([[0], np.cumsum(np.diff(times) > tol)])
    order = np.lexsort((-prio, cluster))
    first = np.concatenate([[True], np.diff(cluster[order]) > 0])
    return np.sort(times[order][first])


@dataclass(frozen=True)
class BrownianPath:
    """Brownian values on a strictly increasing grid starting at 0."""

    grid: np.ndarray
    values: np.ndarray
    step: float
    seed: Optional[int] = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1 or g.size < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if g[0] != 0.0 or v[0] != 0.0:
            raise ValueError("a Brownian path starts at (0, 0)")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    @property
    def knots(self) -> np.ndarray:
        return self.grid

    def __call__(self, t):
        """Linear interpolation between grid values."""
        return np.interp(t, self.grid, self.values)

    def restrict(self, times: np.ndarray) -> "BrownianPath":
        """Same path on a subset of its grid (times must be grid points)."""
        times = np.asarray(times, dtype=float)
        idx = np.clip(np.searchsorted(self.grid, times), 0, self.grid.size - 1)
        left = np.clip(idx - 1, 0, None)
        pick = np.where(np.abs(self.grid[left] - times) < np.abs(self.grid[idx] - times), left, idx)
        if np.any(np.abs(self.grid[pick] - times) > TIME_TOL * max(1.0, self.T)):
            raise ValueError("restrict() needs times that lie on the Brownian grid")
        step = float(np.max(np.diff(times))) if times.size > 1 else self.step
        return BrownianPath(times, self.values[pick], step, self.seed)

    def to_csv(self, path) -> None:
        _write_tv(path, self.grid, self.values)


def _write_tv(path, t, v):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for a, b in zip(t, v):
            w.writerow([repr(float(a)), repr(float(b))])


@dataclass(frozen=True)
class DriverPath:
    """Continuous piecewise-linear path given by its breakpoints."""

    kind: str
    lam: float
    breakpoints: np.ndarray
    values: np.ndarray
    coupled: bool
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("polygonal", "transport", "synthetic"):
            raise ValueError(f"unknown driver kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        bp = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if bp.shape != v.shape or bp.size < 2 or np.any(np.diff(bp) <= 0) or bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0, increase strictly and match values")
        bp.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def knots(self) -> np.ndarray:
        return self.breakpoints

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.values))))

    def __call__(self, t):
        return np.interp(t, self.breakpoints, self.values)

    def to_csv(self, path) -> None:
        _write_tv(path, self.breakpoints, self.values)


def sample_brownian(T: float, step: float, seed, forced_times: Iterable[float] = ()) -> BrownianPath:
    """Brownian motion on the uniform grid of spacing <= ``step`` plus ``forced_times``."""
    if not 0 < step <= T:
        raise ValueError(f"need 0 < step <= T, got step={step}, T={T}")
    forced = [float(t) for t in forced_times]
    if any(t < 0 or t > T for t in forced):
        raise ValueError("forced times must lie in [0, T]")
    grid = merge_times(uniform_grid(T, step), forced)
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal(grid.size - 1) * np.sqrt(np.diff(grid))
    values = np.concatenate([[0.0], np.cumsum(inc)])
    return BrownianPath(grid, values, float(step), seed=seed if isinstance(seed, int) else None)


def polygonal_approx(b: BrownianPath, lam: float, resolution: float = 8.0) -> DriverPath:
    """Interpolate ``b`` linearly between the points ``k / lam`` (and ``T``).

    Breakpoints snap to the nearest grid point of ``b``, so the grid must be
    at least ``resolution`` times finer than the mesh ``1 / lam``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if b.step > (1.0 / (resolution * lam)) * (1 + 1e-9):
        raise ResolutionError(f"Brownian step {b.step} too coarse for lambda={lam}: need <= {1.0 / (resolution * lam)}")
    T = b.T
    k = np.arange(int(math.floor(lam * T * (1 + 1e-12))) + 1)
    targets = np.append(k / lam, T)
    idx = np.clip(np.searchsorted(b.grid, targets), 1, b.grid.size - 1)
    nearer_left = (targets - b.grid[idx - 1]) <= (b.grid[idx] - targets)
    idx = np.unique(np.where(nearer_left, idx - 1, idx))
    return DriverPath("polygonal", float(lam), b.grid[idx], b.values[idx], coupled=True, seed=b.seed)


def transport_process(lam: float, T: float, seed) -> DriverPath:
    """Uniform transport process with slopes ``+-sqrt(lam)`` switching at Poisson(lam) epochs.

    The initial slope is ``+sqrt(lam)``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    rng = np.random.default_rng(seed)
    n = rng.poisson(lam * T)
    arrivals = np.sort(rng.uniform(0.0, T, size=n))
    arrivals = arrivals[(arrivals > 0) & (arrivals < T)]
    bp = np.concatenate([[0.0], np.unique(arrivals), [T]])
    signs = np.where(np.arange(bp.size - 1) % 2 == 0, 1.0, -1.0)
    values = np.concatenate([[0.0], np.cumsum(math.sqrt(lam) * signs * np.diff(bp))])
    return DriverPath("transport", float(lam), bp, values, coupled=False,
                      seed=seed if isinstance(seed, int) else None)


def sup_distance(f, b) -> float:
    """``max |f(t) - b(t)|`` over the union of both paths' knots."""
    if abs(f.T - b.T) > TIME_TOL * max(1.0, b.T):
        raise ValueError(f"horizons differ: {f.T} vs {b.T}")
    times = merge_times(b.knots, f.knots)
    return float(np.max(np.abs(f(times) - b(times))))


@dataclass(frozen=True)
class RateFunction:
    """Named convergence rate ``delta(lam)``."""

    tag: str
    fn: Callable[[float], float]

    def __call__(self, lam):
        return self.fn(lam)

    def check(self, lams=None) -> bool:
        """Positive and decreasing towards 0 on a log grid."""
        lams = np.logspace(2, 16, 57) if lams is None else np.asarray(lams, dtype=float)
        vals = np.array([self.fn(float(x)) for x in lams])
        return bool(np.all(vals > 0) and np.all(np.diff(vals) < 0) and vals[-1] < 1e-2 * vals[0])


def _polygonal_rate(lam):
    return lam ** -0.5 * (1.0 + math.log(lam)) ** 0.5


def _transport_rate(lam):
    return lam ** -0.25 * math.log(lam)


polygonal_rate = RateFunction("polygonal", _polygonal_rate)
transport_rate = RateFunction("transport", _transport_rate)
