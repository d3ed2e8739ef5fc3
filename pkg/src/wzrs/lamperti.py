"""Lamperti transform ``h_i(t, x) = int_{x0}^x dy / sigma_i(t, y)`` and friends.

Closed forms attached to a regime are used when available; otherwise every
quantity is computed by adaptive quadrature (QUADPACK) and a safeguarded
Newton iteration bracketed by the volatility bounds.
"""

from __future__ import annotations

import math

from scipy import integrate

from .model import CoefficientSet

__all__ = ["LampertiKit", "QuadratureError", "BracketError"]


class QuadratureError(ArithmeticError):
    pass


class BracketError(ArithmeticError):
    """Root bracket derived from ``v < sigma < V`` does not contain a sign change."""


class LampertiKit:
    """Transform, inverse, time derivative and transformed drift for a model.

    Parameters
    ----------
    model : CoefficientSet
    quad_tol : float
        Absolute tolerance of every quadrature.
    root_tol : float
        Step-size tolerance of the inverse iteration.
    use_closed_form : bool
        Use per-regime closed forms when the model provides them.
    """

    def __init__(self, model: CoefficientSet, quad_tol: float = 1e-10, root_tol: float = 1e-12,
                 use_closed_form: bool = True):
        if quad_tol <= 0 or root_tol <= 0:
            raise ValueError("tolerances must be positive")
        self.model = model
        self.quad_tol = quad_tol
        self.root_tol = root_tol
        self.use_closed_form = use_closed_form
        self.x0 = model.x0
        regs = model.regimes
        self._h = [r.h if use_closed_form and r.h is not None else None for r in regs]
        self._h_inv = [r.h_inv if use_closed_form and r.h_inv is not None else None for r in regs]
        self._d1_h = [r.d1_h if use_closed_form and r.d1_h is not None else None for r in regs]
        self._mu_star = [r.mu_star if use_closed_form and r.mu_star is not None else None for r in regs]

    # -- quadrature ----------------------------------------------------------

    def _quad(self, fn, a: float, b: float, what: str) -> float:
        if a == b:
            return 0.0
        out = integrate.quad(fn, a, b, epsabs=self.quad_tol, epsrel=1e-13, limit=200, full_output=1)
        val, err = out[0], out[1]
        # QUADPACK flags roundoff on intervals already resolved to machine precision
        if err > self.quad_tol * max(1.0, abs(b - a)) or not math.isfinite(val):
            msg = out[3] if len(out) > 3 else ""
            raise QuadratureError(f"{what} on [{a}, {b}] achieved error {err:.3g} "
                                  f"> {self.quad_tol:.3g}; {msg}".rstrip("; "))
        return val

    def _h_quad(self, i: int, t: float, a: float, b: float) -> float:
        sigma = self.model.regimes[i].sigma
        return self._quad(lambda y: 1.0 / sigma(t, y), a, b, f"h_{i}(t={t})")

    # -- public API ----------------------------------------------------------

    def h(self, i: int, t: float, x: float) -> float:
        """Transform; negative for ``x < x0``."""
        f = self._h[i]
        if f is not None:
            return float(f(t, x))
        return self._h_quad(i, t, self.x0, x)

    def h_inv(self, i: int, t: float, ell: float) -> float:
        """Inverse of ``h(i, t, .)``.

        The root lies between ``x0 + v ell`` and ``x0 + V ell`` because
        ``1/V < dh/dx < 1/v``; Newton steps (derivative ``1/sigma``) that leave
        the bracket are replaced by bisection.
        """
        f = self._h_inv[i]
        if f is not None:
            return float(f(t, ell))
        if ell == 0.0:
            return self.x0
        m = self.model
        sigma = m.regimes[i].sigma
        lo, hi = sorted((self.x0 + m.v * ell, self.x0 + m.V * ell))
        pad = 1e-12 * (1.0 + abs(lo) + abs(hi))
        lo, hi = lo - pad, hi + pad
        g_lo = self._h_quad(i, t, self.x0, lo) - ell
        g_hi = self._h_quad(i, t, self.x0, hi) - ell
        if g_lo > 0 or g_hi < 0:
            raise BracketError(
                f"h_{i}(t={t}, .) - {ell} has no sign change on [{lo}, {hi}] "
                f"(values {g_lo:.3g}, {g_hi:.3g}); the volatility bounds v={m.v}, V={m.V} look violated")
        x = self.x0 + sigma(t, self.x0) * ell
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        # g = h(x) - ell is updated incrementally between iterates
        g = self._h_quad(i, t, self.x0, x) - ell
        for _ in range(100):
            if g == 0.0:
                return x
            if g < 0:
                lo = x
            else:
                hi = x
            step = -g * sigma(t, x)
            x_new = x + step
            if not lo < x_new < hi:
                x_new = 0.5 * (lo + hi)
            g = g + self._h_quad(i, t, x, x_new)
            if abs(x_new - x) <= self.root_tol * (1.0 + abs(x_new)) or hi - lo <= self.root_tol:
                x = x_new
                break
            x = x_new
        # one Newton polish against a fresh integral from x0
        g = self._h_quad(i, t, self.x0, x) - ell
        return x - g * sigma(t, x)

    def d1_h(self, i: int, t: float, x: float) -> float:
        """Partial time derivative ``-int_{x0}^x d1_sigma / sigma**2 dy`` (signed)."""
        f = self._d1_h[i]
        if f is not None:
            return float(f(t, x))
        rc = self.model.regimes[i]
        sig, d1 = rc.sigma, rc.d1_sigma

        def integrand(y):
            s = sig(t, y)
            return d1(t, y) / (s * s)

        return -self._quad(integrand, self.x0, x, f"d1_h_{i}(t={t})")

    def mu_star(self, i: int, t: float, ell: float) -> float:
        """Transformed drift ``d1_h + mu/sigma - d2_sigma/2`` evaluated at ``x = h_inv(ell)``."""
        f = self._mu_star[i]
        if f is not None:
            return float(f(t, ell))
        rc = self.model.regimes[i]
        x = self.h_inv(i, t, ell)
        return self.d1_h(i, t, x) + rc.mu(t, x) / rc.sigma(t, x) - 0.5 * rc.d2_sigma(t, x)

    def jump_reset(self, i_prev: int, i_new: int, t: float, s_minus: float) -> float:
        """Value of the transformed path right after a switch ``i_prev -> i_new`` at ``t``."""
        return self.h(i_new, t, self.h_inv(i_prev, t, s_minus))

    def mu_star_fn(self, i: int):
        """Fast callable ``(t, ell) -> mu_star`` for regime ``i`` (used in inner loops)."""
        f = self._mu_star[i]
        if f is not None:
            return f
        return lambda t, ell: self.mu_star(i, t, ell)

    def h_inv_fn(self, i: int):
        f = self._h_inv[i]
        if f is not None:
            return f
        return lambda t, ell: self.h_inv(i, t, ell)

    def table(self, i: int, t: float, xs) -> list[tuple[float, float, float, float, float]]:
        """Rows ``(x, h, h_inv(h), d1_h, mu_star(h))`` for inspection dumps."""
        rows = []
        for x in xs:
            ell = self.h(i, t, float(x))
            rows.append((float(x), ell, self.h_inv(i, t, ell), self.d1_h(i, t, float(x)),
                         self.mu_star(i, t, ell)))
        return rows
