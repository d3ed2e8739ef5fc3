"""Path solvers for the regime-switching SDE, its Wong-Zakai approximation and
their Lamperti transforms.

All integrators are fixed-step and run on an explicit time grid that contains
every jump epoch (and every driver breakpoint), so two routes fed the same
inputs can be compared point by point.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .drivers import TIME_TOL, BrownianPath, DriverPath, merge_times, uniform_grid
from .jumps import JumpPath
from .lamperti import LampertiKit
from .model import CoefficientSet

__all__ = [
    "BlowUpError",
    "SolutionPath",
    "euler_maruyama_rs",
    "wz_ode_solve",
    "lamperti_flow",
    "build_S",
    "build_S_lambda",
    "inverse_transform",
    "solver_grid",
    "jump_key",
]

Path = Union[BrownianPath, DriverPath]

BLOWUP = 1e12


class BlowUpError(ArithmeticError):
    pass


def jump_key(jumps: JumpPath) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(jumps.epochs).tobytes())
    h.update(np.ascontiguousarray(jumps.regimes, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def _path_key(w: Path) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(w.knots).tobytes())
    h.update(np.ascontiguousarray(w.values).tobytes())
    return h.hexdigest()[:16]


@dataclass
class SolutionPath:
    """Grid-sampled path with right values and left limits.

    ``left[k]`` differs from ``values[k]`` only at jump epochs of the
    transformed paths (labels ``S`` and ``S_lambda``).
    """

    label: str
    times: np.ndarray
    values: np.ndarray
    left: np.ndarray
    regimes: np.ndarray
    is_epoch: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in ("X", "X_lambda", "S", "S_lambda"):
            raise ValueError(f"unknown path label {self.label!r}")

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def sup_diff(self, other: "SolutionPath") -> float:
        """``sup_t |self - other|`` including left limits (grids must agree)."""
        if self.times.shape != other.times.shape or np.any(np.abs(self.times - other.times) > TIME_TOL):
            raise ValueError("paths live on different grids")
        return float(max(np.max(np.abs(self.values - other.values)),
                         np.max(np.abs(self.left - other.left))))

    def sup_diff_on(self, other: "SolutionPath", t_max: float) -> float:
        mask = self.times <= t_max + TIME_TOL
        a = np.abs(self.values - other.values)[mask]
        b = np.abs(self.left - other.left)[mask]
        return float(max(a.max(), b.max()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "regime", "is_epoch", "left_limit"])
            for t, v, j, e, lft in zip(self.times, self.values, self.regimes, self.is_epoch, self.left):
                w.writerow([repr(float(t)), repr(float(v)), int(j), int(bool(e)), repr(float(lft))])


def solver_grid(T: float, jumps: JumpPath, w: Optional[Path] = None, step: Optional[float] = None,
                grid: Optional[np.ndarray] = None) -> np.ndarray:
    """Integration grid: the Brownian grid, or a uniform grid merged with
    driver breakpoints and jump epochs."""
    epochs = jumps.epochs[1:]
    if isinstance(w, BrownianPath):
        _require_epochs(w.grid, epochs)
        return w.grid
    if grid is None:
        if step is None:
            raise ValueError("a driver path needs an integration step or an explicit grid")
        grid = uniform_grid(T, step)
    extra = [epochs]
    if w is not None:
        extra.append(w.knots)
    return merge_times(grid, *extra)


def _require_epochs(grid: np.ndarray, epochs: np.ndarray) -> None:
    if epochs.size == 0:
        return
    idx = np.clip(np.searchsorted(grid, epochs), 0, grid.size - 1)
    if np.any(grid[idx] != epochs):
        missing = epochs[grid[idx] != epochs]
        raise ValueError(f"grid lacks jump epochs {missing[:5]}; sample B with forced_times=jump epochs")


def _epoch_flags(times: np.ndarray, jumps: JumpPath) -> np.ndarray:
    flags = np.zeros(times.size, dtype=bool)
    epochs = jumps.epochs[1:]
    if epochs.size:
        idx = np.searchsorted(times, epochs)
        ok = idx < times.size
        flags[idx[ok][times[idx[ok]] == epochs[ok]]] = True
    return flags


def _check_horizon(jumps: JumpPath, times: np.ndarray) -> None:
    if times[-1] > jumps.T + TIME_TOL:
        raise ValueError(f"path horizon {times[-1]} exceeds jump path horizon {jumps.T}")


def euler_maruyama_rs(model: CoefficientSet, jumps: JumpPath, b: BrownianPath) -> SolutionPath:
    """Euler-Maruyama scheme on the Brownian grid, regime re-read at every step."""
    times = b.grid
    _require_epochs(times, jumps.epochs[1:])
    _check_horizon(jumps, times)
    regs = jumps.regime_at(times)
    n = times.size
    x = np.empty(n)
    x[0] = xk = model.x0
    tl = times.tolist()
    bl = b.values.tolist()
    rl = regs.tolist()
    coefs = [(rc.mu, rc.sigma) for rc in model.regimes]
    for k in range(n - 1):
        t = tl[k]
        mu, sig = coefs[rl[k]]
        xk = xk + mu(t, xk) * (tl[k + 1] - t) + sig(t, xk) * (bl[k + 1] - bl[k])
        if not abs(xk) < BLOWUP:
            raise BlowUpError(f"Euler state {xk} at t={tl[k + 1]}")
        x[k + 1] = xk
    return SolutionPath("X", times, x, x.copy(), regs, _epoch_flags(times, jumps),
                        {"model": model.name, "jumps": jump_key(jumps), "driver": "brownian",
                         "driver_key": _path_key(b), "seed": b.seed, "solver": "euler-maruyama"})


def wz_ode_solve(model: CoefficientSet, jumps: JumpPath, f: DriverPath, step: Optional[float] = None,
                 grid: Optional[np.ndarray] = None, correction: bool = True) -> SolutionPath:
    """Classical RK4 for the Wong-Zakai equation driven by a piecewise-linear path.

    On each grid cell the driver has a constant slope ``F'`` and the state obeys
    ``x' = mu - sigma * d2_sigma / 2 + sigma * F'``. ``correction=False`` drops
    the ``-sigma * d2_sigma / 2`` term (the Stratonovich limit).
    """
    times = solver_grid(f.T, jumps, f, step=step, grid=grid)
    _check_horizon(jumps, times)
    regs = jumps.regime_at(times)
    fv = f(times)
    n = times.size
    x = np.empty(n)
    x[0] = xk = model.x0
    tl = times.tolist()
    fl = fv.tolist()
    rl = regs.tolist()
    c = 0.5 if correction else 0.0
    coefs = [(rc.mu, rc.sigma, rc.d2_sigma) for rc in model.regimes]
    for k in range(n - 1):
        t = tl[k]
        h = tl[k + 1] - t
        slope = (fl[k + 1] - fl[k]) / h
        mu, sig, d2 = coefs[rl[k]]

        def rhs(tt, xx):
            s = sig(tt, xx)
            return mu(tt, xx) - c * s * d2(tt, xx) + s * slope

        hh = 0.5 * h
        k1 = rhs(t, xk)
        k2 = rhs(t + hh, xk + hh * k1)
        k3 = rhs(t + hh, xk + hh * k2)
        k4 = rhs(t + h, xk + h * k3)
        xk = xk + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not abs(xk) < BLOWUP:
            raise BlowUpError(f"Wong-Zakai state {xk} at t={tl[k + 1]}")
        x[k + 1] = xk
    return SolutionPath("X_lambda", times, x, x.copy(), regs, _epoch_flags(times, jumps),
                        {"model": model.name, "jumps": jump_key(jumps), "driver": f.kind, "lam": f.lam,
                         "driver_key": _path_key(f), "seed": f.seed,
                         "solver": "rk4-wong-zakai" if correction else "rk4-uncorrected"})


def _flow(mstar, s0: float, tl: list, wl: list, out: list) -> float:
    """RK4 for ``S' = mu*(t, S) + w'`` with ``w`` linear on each cell.

    Equivalent to integrating ``Y(u) = S - (w_{r+u} - w_r)`` with the displaced
    argument ``Y + w_{r+u} - w_r``; appends the values at ``tl[1:]`` to ``out``.
    """
    s = s0
    for k in range(len(tl) - 1):
        t = tl[k]
        h = tl[k + 1] - t
        hh = 0.5 * h
        dw = wl[k + 1] - wl[k]
        half = s + 0.5 * dw
        k1 = mstar(t, s)
        k2 = mstar(t + hh, half + hh * k1)
        k3 = mstar(t + hh, half + hh * k2)
        k4 = mstar(t + h, s + dw + h * k3)
        s = s + dw + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not abs(s) < BLOWUP:
            raise BlowUpError(f"transformed state {s} at t={tl[k + 1]}")
        out.append(s)
    return s


def lamperti_flow(kit: LampertiKit, i: int, b_start: float, r: float, dur: float, w: Path,
                  step: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``Y(u) = b + int_0^u mu*_i(r + s, Y(s) + w_{r+s} - w_r) ds`` on ``[0, dur]``.

    Returns ``(u, Y(u))``. The time grid is the knots of ``w`` inside
    ``[r, r + dur]``, refined to ``step`` if given; ``w`` is interpolated
    linearly between its knots.
    """
    if dur < 0 or r < 0 or r + dur > w.T + TIME_TOL:
        raise ValueError(f"[{r}, {r + dur}] not inside the path horizon [0, {w.T}]")
    if dur == 0:
        times = np.array([r])
    else:
        knots = w.knots
        inside = knots[(knots > r) & (knots < r + dur)]
        base = np.array([r, r + dur]) if step is None else r + uniform_grid(dur, step)
        times = merge_times(base, inside)
    wv = w(times)
    out = [b_start]
    _flow(kit.mu_star_fn(kit.model.check_regime(i)), b_start, times.tolist(), wv.tolist(), out)
    s = np.array(out)
    return times - r, s - (wv - wv[0])


def build_S(kit: LampertiKit, jumps: JumpPath, w: Path, step: Optional[float] = None,
            grid: Optional[np.ndarray] = None) -> SolutionPath:
    """Pathwise transformed solution driven by ``w``.

    Between epochs the Y-flow of the active regime is added to the driver
    increment; at each epoch the left limit is mapped through the jump reset.
    ``w`` a Brownian path gives ``S``; a driver path gives ``S_lambda``.
    """
    times = solver_grid(w.T, jumps, w, step=step, grid=grid)
    _check_horizon(jumps, times)
    regs = jumps.regime_at(times)
    flags = _epoch_flags(times, jumps)
    wv = w(times) if not isinstance(w, BrownianPath) else w.values
    j0 = int(jumps.regimes[0])
    s0 = kit.h(j0, 0.0, kit.x0)
    tl = times.tolist()
    wl = wv.tolist()
    # split the grid at epochs
    cuts = [0] + np.flatnonzero(flags).tolist() + [times.size - 1]
    values = [s0]
    left = [s0]
    s = s0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        mstar = kit.mu_star_fn(int(regs[a]))
        seg = []
        s = _flow(mstar, s, tl[a:b + 1], wl[a:b + 1], seg)
        values.extend(seg)
        left.extend(seg)
        if flags[b]:
            s = kit.jump_reset(int(regs[b - 1]), int(regs[b]), tl[b], s)
            values[b] = s
    label = "S" if isinstance(w, BrownianPath) else "S_lambda"
    prov = {"model": kit.model.name, "jumps": jump_key(jumps),
            "driver": "brownian" if isinstance(w, BrownianPath) else w.kind,
            "driver_key": _path_key(w), "seed": w.seed, "solver": "lamperti-rk4"}
    if isinstance(w, DriverPath):
        prov["lam"] = w.lam
    return SolutionPath(label, times, np.array(values), np.array(left), regs, flags, prov)


def inverse_transform(kit: LampertiKit, jumps: JumpPath, s: SolutionPath) -> SolutionPath:
    """Map a transformed path back: ``X_t = h_inv(J_t, t, S_t)``.

    Left limits at epochs use the previous regime, so the result is
    continuous up to the transform tolerance.
    """
    if s.label not in ("S", "S_lambda"):
        raise ValueError(f"inverse_transform needs an S or S_lambda path, got {s.label}")
    if s.provenance.get("jumps") not in (None, jump_key(jumps)):
        raise ValueError("transformed path was built from a different jump path")
    inv = [kit.h_inv_fn(i) for i in range(kit.model.n_regimes)]
    tl = s.times.tolist()
    rl = s.regimes.tolist()
    x = [inv[j](t, v) for t, j, v in zip(tl, rl, s.values.tolist())]
    left = list(x)
    for k in np.flatnonzero(s.is_epoch).tolist():
        left[k] = inv[rl[k - 1]](tl[k], float(s.left[k]))
    prov = dict(s.provenance, solver=s.provenance.get("solver", "") + "+inverse")
    label = "X" if s.label == "S" else "X_lambda"
    return SolutionPath(label, s.times, np.array(x, dtype=float), np.array(left, dtype=float),
                        s.regimes, s.is_epoch, prov)


def build_S_lambda(kit: LampertiKit, jumps: JumpPath, f: DriverPath, step: Optional[float] = None,
                   grid: Optional[np.ndarray] = None) -> SolutionPath:
    """:func:`build_S` for a finite-variation driver."""
    if not isinstance(f, DriverPath):
        raise TypeError("build_S_lambda needs a DriverPath")
    return build_S(kit, jumps, f, step=step, grid=grid)
