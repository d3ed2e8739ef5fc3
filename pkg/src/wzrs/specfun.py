"""Lambert W (principal branch) and the f_{gamma,q} pair used for jump-count tails.

``f_gamma_q(gamma, q, x) = exp(x (log x - gamma) / q)`` maps ``[e^gamma, inf)``
onto ``[1, inf)``; its inverse is ``e^gamma * exp(W(q e^-gamma log y))``.
Both are available in log space because the interesting arguments overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "WResult",
    "lambert_w0",
    "f_gamma_q",
    "f_inverse",
    "BRANCH_POINT",
]

BRANCH_POINT = -math.exp(-1.0)

_MAX_HALLEY = 50


@dataclass(frozen=True)
class WResult:
    value: float
    residual: float
    iterations: int

    def __float__(self) -> float:
        return self.value


def _initial_guess(x: float) -> float:
    if x < -0.25:
        # branch-point series in p = sqrt(2(ex + 1))
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    if x <= math.e:
        # Winitzki's approximation, good to a few percent on this range
        lx = math.log1p(x)
        return lx * (1.0 - math.log1p(lx) / (2.0 + lx))
    l1 = math.log(x)
    l2 = math.log(l1)
    return l1 - l2 + l2 / l1


def _residual(w: float, x: float) -> float:
    return abs(w * math.exp(w) - x)


def _bisect(x: float) -> tuple[float, int]:
    # w e^w is increasing on [-1, inf)
    lo = -1.0
    hi = max(1.0, math.log(x) if x > 1.0 else 1.0)
    n = 0
    while hi - lo > 4e-16 * max(1.0, abs(hi)) and n < 200:
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            lo = mid
        else:
            hi = mid
        n += 1
    return 0.5 * (lo + hi), n


def lambert_w0(x: float) -> WResult:
    """Principal branch of the Lambert W function.

    Halley iteration from a range-dependent initial guess, with a bisection
    fallback if the iteration fails to reach the residual tolerance.

    Parameters
    ----------
    x : float
        Argument, ``x >= -1/e``.

    Returns
    -------
    WResult
        ``value`` satisfies ``value * exp(value) == x`` up to
        ``residual <= 1e-12 * max(1, |x|)``.

    Raises
    ------
    ValueError
        If ``x < -1/e`` or ``x`` is not finite.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"lambert_w0 requires a finite argument, got {x}")
    if x < BRANCH_POINT:
        raise ValueError(f"lambert_w0 domain is x >= -1/e, got {x}")
    if x == 0.0:
        return WResult(0.0, 0.0, 0)
    if x == BRANCH_POINT:
        return WResult(-1.0, _residual(-1.0, x), 0)

    tol = 1e-12 * max(1.0, abs(x))
    w = _initial_guess(x)
    it = 0
    for it in range(1, _MAX_HALLEY + 1):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if w < -1.0:
            w = -1.0
        if abs(dw) <= 1e-15 * (1.0 + abs(w)):
            break
    res = _residual(w, x)
    if res <= tol:
        return WResult(w, res, it)
    wb, nb = _bisect(x)
    return WResult(wb, _residual(wb, x), it + nb)


def f_gamma_q(gamma: float, q: float, x: float, log: bool = False) -> float:
    """Evaluate ``exp(x (log x - gamma) / q)`` for ``x >= e^gamma``.

    With ``log=True`` the exponent itself is returned, which stays finite
    long after the function value overflows.
    """
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    if x < math.exp(gamma) * (1.0 - 1e-15):
        raise ValueError(f"f_gamma_q domain is x >= e^gamma = {math.exp(gamma)}, got {x}")
    expo = max(x * (math.log(x) - gamma) / q, 0.0)
    if log:
        return expo
    if expo > 700.0:
        return math.inf if expo > 709.78 else math.exp(expo)
    return math.exp(expo)


def f_inverse(gamma: float, q: float, y: float, log: bool = False) -> float:
    """Inverse of :func:`f_gamma_q` through the Lambert W closed form.

    ``y`` is the function value, or its logarithm when ``log=True``.
    """
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    log_y = y if log else None
    if log_y is None:
        if y < 1.0:
            raise ValueError(f"f_inverse domain is y >= 1, got {y}")
        log_y = math.log(y)
    elif log_y < 0.0:
        raise ValueError(f"f_inverse domain is log y >= 0, got {log_y}")
    w = lambert_w0(q * math.exp(-gamma) * log_y).value
    return math.exp(gamma + w)
