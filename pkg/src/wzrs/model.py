"""Regime-switching coefficient sets, named presets and grid-sampled assumption checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "EvaluationError",
    "RegimeCoefficients",
    "CoefficientSet",
    "AssumptionGrid",
    "Violation",
    "ValidationReport",
    "validate_assumptions",
    "estimate_mstar",
    "constant_model",
    "mmbm_model",
    "sin_volatility_model",
    "time_arctan_model",
    "model_from_config",
    "PRESETS",
]

Coef = Callable[[float, float], float]

FD_STEP = 1e-5
FD_TOL = 1e-4


class EvaluationError(ArithmeticError):
    """A coefficient function returned a non-finite value."""


@dataclass(frozen=True)
class RegimeCoefficients:
    """Coefficients of one regime.

    The optional ``h``, ``h_inv``, ``d1_h`` and ``mu_star`` are closed forms of
    the Lamperti quantities; the transform kit uses them when present and
    falls back to quadrature and root finding otherwise.
    """

    mu: Coef
    sigma: Coef
    d1_sigma: Coef
    d2_sigma: Coef
    h: Optional[Coef] = None
    h_inv: Optional[Coef] = None
    d1_h: Optional[Coef] = None
    mu_star: Optional[Coef] = None

    def has_closed_forms(self) -> bool:
        return None not in (self.h, self.h_inv, self.d1_h)


@dataclass(frozen=True)
class CoefficientSet:
    """Scalar regime-switching model with its declared bounds.

    ``v < sigma_i < V`` and ``|d1_sigma_i| / sigma_i**2 <= K`` are the
    Wong-Zakai bounds; ``mstar`` holds the Lipschitz constants of the
    transformed drifts, one per regime (``None`` when not declared).
    """

    regimes: tuple[RegimeCoefficients, ...]
    x0: float
    v: float
    V: float
    K: float
    mstar: Optional[tuple[float, ...]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.regimes) == 0:
            raise ValueError("a model needs at least one regime")
        if not (0.0 < self.v <= self.V < math.inf):
            raise ValueError(f"need 0 < v <= V < inf, got v={self.v}, V={self.V}")
        if self.K < 0:
            raise ValueError(f"K must be non-negative, got {self.K}")
        if self.mstar is not None:
            if len(self.mstar) != len(self.regimes):
                raise ValueError("mstar needs one entry per regime")
            object.__setattr__(self, "mstar", tuple(float(m) for m in self.mstar))
        object.__setattr__(self, "regimes", tuple(self.regimes))

    @property
    def n_regimes(self) -> int:
        return len(self.regimes)

    def check_regime(self, i: int) -> int:
        if not (0 <= int(i) < self.n_regimes) or int(i) != i:
            raise IndexError(f"regime {i} outside state space of size {self.n_regimes}")
        return int(i)

    def __getitem__(self, i: int) -> RegimeCoefficients:
        return self.regimes[self.check_regime(i)]


# ----------------------------------------------------------------------------
# picklable coefficient pieces (process pools need to ship presets to workers)


@dataclass(frozen=True)
class _Const:
    value: float

    def __call__(self, t, x):
        return self.value


@dataclass(frozen=True)
class _AffineState:
    """(x - x0) / s"""

    x0: float
    s: float

    def __call__(self, t, x):
        return (x - self.x0) / self.s


@dataclass(frozen=True)
class _AffineStateInv:
    x0: float
    s: float

    def __call__(self, t, ell):
        return self.x0 + self.s * ell


@dataclass(frozen=True)
class _SinSigma:
    a: float
    b: float

    def __call__(self, t, x):
        return self.a + self.b * math.sin(x)


@dataclass(frozen=True)
class _SinSigmaDx:
    b: float

    def __call__(self, t, x):
        return self.b * math.cos(x)


@dataclass(frozen=True)
class _SinH:
    """Antiderivative of 1/(a + b sin y) from x0, continued across periods."""

    a: float
    b: float
    x0: float

    def _prim(self, x):
        r = math.sqrt(self.a * self.a - self.b * self.b)
        k = math.floor((x + math.pi) / (2.0 * math.pi))
        u = x - 2.0 * math.pi * k
        if u <= -math.pi:
            base = -math.pi / r
        else:
            base = 2.0 / r * math.atan((self.a * math.tan(0.5 * u) + self.b) / r)
        return k * 2.0 * math.pi / r + base

    def __call__(self, t, x):
        return self._prim(x) - self._prim(self.x0)


@dataclass(frozen=True)
class _SinHInv:
    a: float
    b: float
    x0: float

    def __call__(self, t, ell):
        r = math.sqrt(self.a * self.a - self.b * self.b)
        z = ell + _SinH(self.a, self.b, self.x0)._prim(self.x0)
        period = 2.0 * math.pi / r
        k = math.floor((z + 0.5 * period) / period)
        rem = z - k * period
        theta = 0.5 * r * rem
        if theta <= -0.5 * math.pi:
            u = -math.pi
        else:
            u = 2.0 * math.atan((r * math.tan(theta) - self.b) / self.a)
        return u + 2.0 * math.pi * k


@dataclass(frozen=True)
class _SinMuStar:
    mu: float
    a: float
    b: float
    x0: float

    def __call__(self, t, ell):
        x = _SinHInv(self.a, self.b, self.x0)(t, ell)
        return self.mu / (self.a + self.b * math.sin(x)) - 0.5 * self.b * math.cos(x)


@dataclass(frozen=True)
class _ArctanSigma:
    a: float
    b: float

    def __call__(self, t, x):
        return self.a + self.b * math.atan(t) / math.pi


@dataclass(frozen=True)
class _ArctanSigmaDt:
    b: float

    def __call__(self, t, x):
        return self.b / (math.pi * (1.0 + t * t))


@dataclass(frozen=True)
class _ArctanH:
    a: float
    b: float
    x0: float

    def __call__(self, t, x):
        return (x - self.x0) / (self.a + self.b * math.atan(t) / math.pi)


@dataclass(frozen=True)
class _ArctanHInv:
    a: float
    b: float
    x0: float

    def __call__(self, t, ell):
        return self.x0 + ell * (self.a + self.b * math.atan(t) / math.pi)


@dataclass(frozen=True)
class _ArctanD1H:
    a: float
    b: float
    x0: float

    def __call__(self, t, x):
        s = self.a + self.b * math.atan(t) / math.pi
        ds = self.b / (math.pi * (1.0 + t * t))
        return -(x - self.x0) * ds / (s * s)


@dataclass(frozen=True)
class _ArctanMuStar:
    mu: float
    a: float
    b: float

    def __call__(self, t, ell):
        s = self.a + self.b * math.atan(t) / math.pi
        ds = self.b / (math.pi * (1.0 + t * t))
        return (self.mu - ell * ds) / s


def _as_list(value, n: int, name: str) -> list[float]:
    if np.ndim(value) == 0:
        return [float(value)] * n
    out = [float(v) for v in value]
    if len(out) != n:
        raise ValueError(f"{name} needs {n} entries, got {len(out)}")
    return out


def constant_model(mu: Sequence[float], sigma: Sequence[float], x0: float = 0.0,
                   v: Optional[float] = None, V: Optional[float] = None, K: float = 1.0,
                   mstar: Optional[Sequence[float]] = None, name: str = "constant") -> CoefficientSet:
    """Constant drift and volatility in each regime (Markov-modulated Brownian motion)."""
    mu = [float(m) for m in mu]
    sigma = _as_list(sigma, len(mu), "sigma")
    if v is None:
        v = 0.9 * min(sigma)
    if V is None:
        V = 1.1 * max(sigma)
    regimes = tuple(
        RegimeCoefficients(
            mu=_Const(m), sigma=_Const(s), d1_sigma=_Const(0.0), d2_sigma=_Const(0.0),
            h=_AffineState(x0, s), h_inv=_AffineStateInv(x0, s), d1_h=_Const(0.0),
            mu_star=_Const(m / s),
        )
        for m, s in zip(mu, sigma)
    )
    return CoefficientSet(regimes, float(x0), float(v), float(V), float(K),
                          mstar=tuple(mstar) if mstar is not None else None, name=name,
                          params={"mu": mu, "sigma": sigma})


def mmbm_model(x0: float = 0.0) -> CoefficientSet:
    """Two-regime Markov-modulated Brownian motion used throughout the acceptance runs."""
    return constant_model([1.0, -1.0], [1.0, 2.0], x0=x0, v=0.9, V=2.1, K=1.0,
                          mstar=(0.0, 0.0), name="mmbm")


def sin_volatility_model(offset: Sequence[float] | float = 2.0, amplitude: Sequence[float] | float = 1.0,
                         mu: Sequence[float] | float = 0.0, n_regimes: int = 1, x0: float = 0.0,
                         v: Optional[float] = None, V: Optional[float] = None, K: float = 1.0,
                         mstar: Optional[Sequence[float]] = None) -> CoefficientSet:
    """``sigma_i(t, x) = a_i + b_i sin x`` with constant drift ``mu_i``."""
    n = n_regimes if np.ndim(offset) == 0 else len(offset)
    a = _as_list(offset, n, "offset")
    b = _as_list(amplitude, n, "amplitude")
    m = _as_list(mu, n, "mu")
    for ai, bi in zip(a, b):
        if ai <= abs(bi):
            raise ValueError(f"need offset > |amplitude| for a positive volatility, got {ai}, {bi}")
    if v is None:
        v = 0.9 * min(ai - abs(bi) for ai, bi in zip(a, b))
    if V is None:
        V = max(ai + abs(bi) for ai, bi in zip(a, b)) + 0.1
    regimes = tuple(
        RegimeCoefficients(
            mu=_Const(mi), sigma=_SinSigma(ai, bi), d1_sigma=_Const(0.0), d2_sigma=_SinSigmaDx(bi),
            h=_SinH(ai, bi, x0), h_inv=_SinHInv(ai, bi, x0), d1_h=_Const(0.0),
            mu_star=_SinMuStar(mi, ai, bi, x0),
        )
        for ai, bi, mi in zip(a, b, m)
    )
    return CoefficientSet(regimes, float(x0), float(v), float(V), float(K),
                          mstar=tuple(mstar) if mstar is not None else None, name="sin-volatility",
                          params={"offset": a, "amplitude": b, "mu": m})


def time_arctan_model(offset: Sequence[float] | float = 2.0, scale: Sequence[float] | float = 1.0,
                      mu: Sequence[float] | float = 0.0, n_regimes: int = 1, x0: float = 0.0,
                      v: Optional[float] = None, V: Optional[float] = None, K: float = 1.0,
                      mstar: Optional[Sequence[float]] = None) -> CoefficientSet:
    """``sigma_i(t, x) = a_i + b_i arctan(t) / pi``: volatility depends on time only."""
    n = n_regimes if np.ndim(offset) == 0 else len(offset)
    a = _as_list(offset, n, "offset")
    b = _as_list(scale, n, "scale")
    m = _as_list(mu, n, "mu")
    for ai, bi in zip(a, b):
        if ai - 0.5 * abs(bi) <= 0:
            raise ValueError(f"volatility offset {ai} too small for scale {bi}")
    if v is None:
        v = 0.9 * min(ai - 0.5 * abs(bi) for ai, bi in zip(a, b))
    if V is None:
        V = max(ai + 0.5 * abs(bi) for ai, bi in zip(a, b)) + 0.1
    regimes = tuple(
        RegimeCoefficients(
            mu=_Const(mi), sigma=_ArctanSigma(ai, bi), d1_sigma=_ArctanSigmaDt(bi), d2_sigma=_Const(0.0),
            h=_ArctanH(ai, bi, x0), h_inv=_ArctanHInv(ai, bi, x0), d1_h=_ArctanD1H(ai, bi, x0),
            mu_star=_ArctanMuStar(mi, ai, bi),
        )
        for ai, bi, mi in zip(a, b, m)
    )
    return CoefficientSet(regimes, float(x0), float(v), float(V), float(K),
                          mstar=tuple(mstar) if mstar is not None else None, name="time-arctan",
                          params={"offset": a, "scale": b, "mu": m})


PRESETS = {
    "constant": constant_model,
    "mmbm": mmbm_model,
    "sin-volatility": sin_volatility_model,
    "time-arctan": time_arctan_model,
}


def model_from_config(cfg: dict) -> CoefficientSet:
    """Build a preset model from a JSON-style mapping.

    ``{"preset": name, "params": {...}, "x0": ..., "bounds": {"v", "V", "K", "mstar"}}``
    """
    preset = cfg.get("preset")
    if preset not in PRESETS:
        raise ValueError(f"unknown model preset {preset!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(cfg.get("params", {}))
    if "x0" in cfg:
        kwargs["x0"] = float(cfg["x0"])
    bounds = cfg.get("bounds", {})
    if preset == "mmbm":
        extra = set(kwargs) - {"x0"}
        if extra or bounds:
            raise ValueError("the mmbm preset is fixed; use the 'constant' preset to change parameters")
        return mmbm_model(**kwargs)
    for key in ("v", "V", "K", "mstar"):
        if key in bounds:
            kwargs[key] = bounds[key]
    try:
        return PRESETS[preset](**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for preset {preset!r}: {exc}") from None


# ----------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class AssumptionGrid:
    """Rectangle ``[0, T] x [x_lo, x_hi]`` sampled with steps ``dt`` and ``dx``."""

    T: float
    x_lo: float
    x_hi: float
    dt: float
    dx: float

    def __post_init__(self):
        if not (self.T > 0 and self.x_hi > self.x_lo and self.dt > 0 and self.dx > 0):
            raise ValueError(f"degenerate grid {self}")

    @property
    def times(self) -> np.ndarray:
        n = max(int(round(self.T / self.dt)), 1)
        return np.linspace(0.0, self.T, n + 1)

    @property
    def xs(self) -> np.ndarray:
        n = max(int(round((self.x_hi - self.x_lo) / self.dx)), 1)
        return np.linspace(self.x_lo, self.x_hi, n + 1)

    def refine(self, factor: int = 2) -> "AssumptionGrid":
        return AssumptionGrid(self.T, self.x_lo, self.x_hi, self.dt / factor, self.dx / factor)

    def describe(self) -> dict:
        return {"T": self.T, "x_lo": self.x_lo, "x_hi": self.x_hi, "dt": self.dt, "dx": self.dx,
                "n_t": len(self.times), "n_x": len(self.xs)}


@dataclass(frozen=True)
class Violation:
    check: str
    regime: int
    t: float
    x: float
    observed: float
    bound: float


@dataclass
class ValidationReport:
    grid: dict
    violations: list[Violation]
    sigma_min: float
    sigma_max: float
    max_d1_ratio: float
    max_fd_error: dict
    mstar_observed: Optional[list[float]] = None

    @property
    def passed(self) -> bool:
        return not self.violations

    def failed_checks(self) -> set[str]:
        return {v.check for v in self.violations}

    def flags(self) -> dict[str, bool]:
        names = ("sigma_lower", "sigma_upper", "d1_ratio", "fd_d1_sigma", "fd_d2_sigma", "mstar")
        failed = self.failed_checks()
        return {n: n not in failed for n in names}


def _eval(fn: Coef, t: float, x: float, what: str, regime: int) -> float:
    val = float(fn(t, x))
    if not math.isfinite(val):
        raise EvaluationError(f"{what} of regime {regime} is {val} at (t={t}, x={x})")
    return val


def validate_assumptions(model: CoefficientSet, grid: AssumptionGrid,
                         check_mstar: bool = False, kit=None) -> ValidationReport:
    """Spot-check the volatility bounds, the time-derivative ratio bound and the
    user-supplied derivatives on a sampled rectangle.

    Each violated check is reported once per regime with its worst grid point.
    With ``check_mstar`` the declared ``M*_i`` are compared against
    :func:`estimate_mstar` on the same grid.
    """
    worst: dict[tuple[str, int], Violation] = {}

    def flag(check, i, t, x, observed, bound, severity):
        key = (check, i)
        prev = worst.get(key)
        if prev is None or severity > prev_severity[key]:
            worst[key] = Violation(check, i, float(t), float(x), float(observed), float(bound))
            prev_severity[key] = severity

    prev_severity: dict[tuple[str, int], float] = {}
    s_min, s_max, ratio_max = math.inf, -math.inf, 0.0
    fd_err = {"d1_sigma": 0.0, "d2_sigma": 0.0}
    h = FD_STEP
    for i, rc in enumerate(model.regimes):
        for t in grid.times:
            for x in grid.xs:
                s = _eval(rc.sigma, t, x, "sigma", i)
                d1 = _eval(rc.d1_sigma, t, x, "d1_sigma", i)
                d2 = _eval(rc.d2_sigma, t, x, "d2_sigma", i)
                _eval(rc.mu, t, x, "mu", i)
                s_min, s_max = min(s_min, s), max(s_max, s)
                if not s > model.v:
                    flag("sigma_lower", i, t, x, s, model.v, model.v - s)
                if not s < model.V:
                    flag("sigma_upper", i, t, x, s, model.V, s - model.V)
                ratio = abs(d1) / (s * s) if s != 0 else math.inf
                ratio_max = max(ratio_max, ratio)
                if ratio > model.K:
                    flag("d1_ratio", i, t, x, ratio, model.K, ratio - model.K)
                fd1 = (_eval(rc.sigma, t + h, x, "sigma", i) - _eval(rc.sigma, t - h, x, "sigma", i)) / (2 * h)
                fd2 = (_eval(rc.sigma, t, x + h, "sigma", i) - _eval(rc.sigma, t, x - h, "sigma", i)) / (2 * h)
                e1 = abs(fd1 - d1) / (1.0 + abs(d1))
                e2 = abs(fd2 - d2) / (1.0 + abs(d2))
                fd_err["d1_sigma"] = max(fd_err["d1_sigma"], e1)
                fd_err["d2_sigma"] = max(fd_err["d2_sigma"], e2)
                if e1 > FD_TOL:
                    flag("fd_d1_sigma", i, t, x, fd1, d1, e1)
                if e2 > FD_TOL:
                    flag("fd_d2_sigma", i, t, x, fd2, d2, e2)

    observed = None
    if check_mstar:
        observed = [estimate_mstar(model, i, grid, kit=kit) for i in range(model.n_regimes)]
        if model.mstar is not None:
            for i, (decl, obs) in enumerate(zip(model.mstar, observed)):
                if obs > decl * (1 + 1e-9) + 1e-12:
                    flag("mstar", i, math.nan, math.nan, obs, decl, obs - decl)

    violations = sorted(worst.values(), key=lambda v: (v.check, v.regime))
    return ValidationReport(grid.describe(), violations, s_min, s_max, ratio_max, fd_err, observed)


def estimate_mstar(model: CoefficientSet, regime: int, grid: AssumptionGrid, kit=None) -> float:
    """Largest adjacent-point Lipschitz quotient of ``mu_star(t, .)`` on the grid.

    The rectangle's second axis is read as the transformed coordinate ``ell``.
    This is a lower estimate of the true constant; on nested refinements it
    can only grow.
    """
    from .lamperti import LampertiKit

    i = model.check_regime(regime)
    kit = kit or LampertiKit(model)
    ells = grid.xs
    best = 0.0
    for t in grid.times:
        vals = np.array([kit.mu_star(i, float(t), float(e)) for e in ells])
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise EvaluationError(f"mu_star of regime {i} is not finite at (t={t}, ell={ells[bad]})")
        q = np.abs(np.diff(vals)) / np.diff(ells)
        best = max(best, float(q.max()))
    return best
