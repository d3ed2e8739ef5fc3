"""Realizations of the regime process and the Poisson-domination tail bound."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "JumpPath",
    "MarkovGenerator",
    "InhomogeneousMarkovGenerator",
    "SemiMarkovGenerator",
    "DeterministicGenerator",
    "sample_jump_path",
    "count_jumps",
    "poisson_tail_bound",
    "generator_from_config",
]


@dataclass(frozen=True)
class JumpPath:
    """Piecewise-constant regime path on ``[0, T]``.

    ``regimes[k]`` is active on ``[epochs[k], epochs[k+1])``; ``epochs[0] == 0``.
    """

    T: float
    epochs: np.ndarray
    regimes: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        ep = np.asarray(self.epochs, dtype=float)
        rg = np.asarray(self.regimes, dtype=int)
        if ep.ndim != 1 or len(ep) == 0 or len(ep) != len(rg):
            raise ValueError("epochs and regimes must be non-empty 1-d arrays of equal length")
        if ep[0] != 0.0:
            raise ValueError(f"first epoch must be 0, got {ep[0]}")
        if np.any(np.diff(ep) <= 0):
            raise ValueError("epochs must be strictly increasing")
        if ep[-1] > self.T:
            raise ValueError(f"epoch {ep[-1]} beyond horizon {self.T}")
        if np.any(rg[1:] == rg[:-1]):
            raise ValueError("consecutive regimes must differ (every epoch is a regime change)")
        if np.any(rg < 0):
            raise ValueError("regimes are non-negative indices")
        ep.setflags(write=False)
        rg.setflags(write=False)
        object.__setattr__(self, "epochs", ep)
        object.__setattr__(self, "regimes", rg)

    @property
    def jump_times(self) -> np.ndarray:
        return self.epochs[1:]

    @property
    def n_jumps(self) -> int:
        return len(self.epochs) - 1

    def regime_at(self, t):
        """Regime active at ``t`` (right-continuous convention)."""
        idx = np.searchsorted(self.epochs, t, side="right") - 1
        return self.regimes[idx]

    def regime_before(self, t):
        """Left limit ``J_{t-}``; equals ``J_0`` at ``t = 0``."""
        idx = np.maximum(np.searchsorted(self.epochs, t, side="left") - 1, 0)
        return self.regimes[idx]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "regime"])
            for t, j in zip(self.epochs, self.regimes):
                w.writerow([repr(float(t)), int(j)])

    @classmethod
    def from_csv(cls, path, T: float) -> "JumpPath":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(T, [float(r["epoch"]) for r in rows], [int(r["regime"]) for r in rows])


def _check_rate_matrix(Q: np.ndarray, what: str = "Q") -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"{what} must be square, got shape {Q.shape}")
    off = Q - np.diag(np.diag(Q))
    if np.any(off < 0):
        raise ValueError(f"{what} has negative off-diagonal rates")
    if not np.allclose(Q.sum(axis=1), 0.0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError(f"{what} rows must sum to zero")
    return Q


@dataclass(frozen=True)
class MarkovGenerator:
    """Time-homogeneous continuous-time Markov chain with rate matrix ``Q``."""

    Q: np.ndarray
    kind: str = field(default="homogeneous-markov", init=False)

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_rate_matrix(self.Q))

    @property
    def n_regimes(self) -> int:
        return self.Q.shape[0]

    @property
    def intensity_bound(self) -> float:
        return float(np.max(-np.diag(self.Q)))

    def _sample(self, j0: int, T: float, rng: np.random.Generator):
        Q = self.Q
        epochs, regimes = [0.0], [j0]
        t, j = 0.0, j0
        while True:
            rate = -Q[j, j]
            if rate <= 0:
                break
            t += rng.exponential(1.0 / rate)
            if t > T:
                break
            p = Q[j].copy()
            p[j] = 0.0
            j = int(rng.choice(len(p), p=p / p.sum()))
            epochs.append(t)
            regimes.append(j)
        return epochs, regimes


@dataclass(frozen=True)
class InhomogeneousMarkovGenerator:
    """Markov chain with time-dependent rates ``Q(t)``, sampled by Poisson thinning.

    ``c`` must dominate every exit rate ``-Q_ii(t)``; candidate epochs arrive at
    rate ``c`` and are accepted with probability ``-Q_ii(t) / c``. The number of
    candidates is itself a Poisson(c T) variable dominating the jump count.
    """

    Q: Callable[[float], np.ndarray]
    c: float
    n: int
    kind: str = field(default="inhomogeneous-markov", init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"intensity bound must be positive, got {self.c}")
        for t in np.linspace(0.0, 1.0, 11):
            Qt = _check_rate_matrix(self.Q(float(t)), f"Q({t})")
            if Qt.shape != (self.n, self.n):
                raise ValueError(f"Q({t}) has shape {Qt.shape}, expected {(self.n, self.n)}")
            if np.max(-np.diag(Qt)) > self.c * (1 + 1e-12):
                raise ValueError(f"intensity bound c={self.c} below an exit rate of Q({t})")

    @property
    def n_regimes(self) -> int:
        return self.n

    @property
    def intensity_bound(self) -> float:
        return self.c

    def _sample(self, j0: int, T: float, rng: np.random.Generator):
        epochs, regimes = [0.0], [j0]
        t, j = 0.0, j0
        while True:
            t += rng.exponential(1.0 / self.c)
            if t > T:
                break
            Qt = np.asarray(self.Q(t), dtype=float)
            rate = -Qt[j, j]
            if rate > self.c * (1 + 1e-12):
                raise ValueError(f"exit rate {rate} at t={t} exceeds the bound c={self.c}")
            if rng.uniform() * self.c < rate:
                p = Qt[j].copy()
                p[j] = 0.0
                j = int(rng.choice(len(p), p=p / p.sum()))
                epochs.append(t)
                regimes.append(j)
        return epochs, regimes


@dataclass(frozen=True)
class SemiMarkovGenerator:
    """Semi-Markov regime process.

    ``holding[i](rng)`` draws a sojourn in regime ``i``; ``P`` is the embedded
    jump chain and must have a zero diagonal.
    """

    P: np.ndarray
    holding: Sequence[Callable[[np.random.Generator], float]]
    kind: str = field(default="semi-markov", init=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if np.any(np.diag(P) != 0):
            raise ValueError("self-transitions are not allowed in the embedded chain")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0):
            raise ValueError("rows of P must be probability vectors")
        if len(self.holding) != P.shape[0]:
            raise ValueError("need one holding-time sampler per regime")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "holding", tuple(self.holding))

    @property
    def n_regimes(self) -> int:
        return self.P.shape[0]

    @property
    def intensity_bound(self) -> Optional[float]:
        return None

    def _sample(self, j0: int, T: float, rng: np.random.Generator):
        epochs, regimes = [0.0], [j0]
        t, j = 0.0, j0
        while True:
            dt = float(self.holding[j](rng))
            if not dt > 0:
                raise ValueError(f"holding time sampler for regime {j} returned {dt}")
            t += dt
            if t > T:
                break
            j = int(rng.choice(self.n_regimes, p=self.P[j]))
            epochs.append(t)
            regimes.append(j)
        return epochs, regimes


@dataclass(frozen=True)
class DeterministicGenerator:
    """Fixed schedule ``[(t_0 = 0, j_0), (t_1, j_1), ...]``; ``j0`` and ``seed`` are ignored."""

    schedule: Sequence[tuple[float, int]]
    kind: str = field(default="deterministic", init=False)

    def __post_init__(self):
        sched = tuple((float(t), int(j)) for t, j in self.schedule)
        if not sched or sched[0][0] != 0.0:
            raise ValueError("a deterministic schedule starts at time 0")
        JumpPath(max(t for t, _ in sched), [t for t, _ in sched], [j for _, j in sched])
        object.__setattr__(self, "schedule", sched)

    @property
    def n_regimes(self) -> int:
        return max(j for _, j in self.schedule) + 1

    @property
    def intensity_bound(self) -> Optional[float]:
        return None

    def _sample(self, j0: int, T: float, rng: np.random.Generator):
        kept = [(t, j) for t, j in self.schedule if t <= T]
        return [t for t, _ in kept], [j for _, j in kept]


def sample_jump_path(gen, j0: int, T: float, seed) -> JumpPath:
    """Draw one regime path on ``[0, T]`` starting in ``j0``.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`
    (an int, a ``SeedSequence`` or a ``Generator``); the result is a pure
    function of ``(gen, j0, T, seed)``.
    """
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if not 0 <= j0 < gen.n_regimes:
        raise ValueError(f"initial regime {j0} outside 0..{gen.n_regimes - 1}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    epochs, regimes = gen._sample(int(j0), float(T), rng)
    return JumpPath(float(T), epochs, regimes, seed=seed if isinstance(seed, int) else None)


def count_jumps(path: JumpPath, T_prime: Optional[float] = None) -> int:
    """Number of regime changes in ``(0, T']``; an epoch exactly at ``T'`` counts."""
    if T_prime is None:
        T_prime = path.T
    if not 0 < T_prime <= path.T:
        raise ValueError(f"T'={T_prime} outside (0, {path.T}]")
    return int(np.searchsorted(path.epochs, T_prime, side="right") - 1)


def _log_pmf(k: int, c: float) -> float:
    return k * math.log(c) - c - math.lgamma(k + 1)


def poisson_tail_bound(n: int, c: float) -> tuple[float, float]:
    """Exact ``P(Poisson(c) >= n)`` and the Stirling-type envelope
    ``n**-0.5 * exp(-n (log n - (log c + 1)))`` (taken as 1 for ``n = 0``).

    Above the mode the upper tail is summed outward in decreasing terms;
    below it the complement of the (then small) lower sum is used.
    """
    if n < 0 or c <= 0:
        raise ValueError(f"need n >= 0 and c > 0, got n={n}, c={c}")
    n = int(n)
    if n == 0:
        return 1.0, 1.0
    stirling = math.exp(-0.5 * math.log(n) - n * (math.log(n) - (math.log(c) + 1.0)))
    if n > c:
        lead = _log_pmf(n, c)
        total, term, k = 0.0, 1.0, n
        while term > 1e-18 * total or total == 0.0:
            total += term
            k += 1
            term *= c / k
        exact = math.exp(lead) * total
    else:
        lower = sum(math.exp(_log_pmf(k, c)) for k in range(n - 1, -1, -1))
        exact = 1.0 - lower
    return exact, stirling


# ----------------------------------------------------------------------------
# config


def _holding_sampler(spec: dict):
    dist = spec.get("dist")
    if dist == "exponential":
        scale = float(spec["scale"])
        return lambda rng: rng.exponential(scale)
    if dist == "gamma":
        shape, scale = float(spec["shape"]), float(spec["scale"])
        return lambda rng: rng.gamma(shape, scale)
    if dist == "weibull":
        shape, scale = float(spec["shape"]), float(spec["scale"])
        return lambda rng: scale * rng.weibull(shape)
    if dist == "uniform":
        lo, hi = float(spec["low"]), float(spec["high"])
        if not 0 <= lo < hi:
            raise ValueError("uniform holding times need 0 <= low < high")
        return lambda rng: rng.uniform(lo, hi) or hi
    raise ValueError(f"unknown holding-time distribution {dist!r}")


@dataclass(frozen=True)
class _ModulatedQ:
    Q: tuple
    amplitude: float
    period: float

    def __call__(self, t):
        return np.asarray(self.Q) * (1.0 + self.amplitude * math.sin(2 * math.pi * t / self.period))


def generator_from_config(cfg: dict):
    """Jump generator from a JSON-style mapping (see the README for the schema)."""
    kind = cfg.get("kind")
    if kind in ("markov", "homogeneous-markov"):
        return MarkovGenerator(np.asarray(cfg["Q"], dtype=float))
    if kind == "inhomogeneous-markov":
        Q = np.asarray(cfg["Q"], dtype=float)
        _check_rate_matrix(Q)
        amp = float(cfg.get("amplitude", 0.5))
        if not 0 <= amp < 1:
            raise ValueError("modulation amplitude must lie in [0, 1)")
        c = float(cfg.get("c", np.max(-np.diag(Q)) * (1 + amp)))
        return InhomogeneousMarkovGenerator(_ModulatedQ(tuple(map(tuple, Q)), amp, float(cfg.get("period", 1.0))),
                                            c, Q.shape[0])
    if kind == "semi-markov":
        return SemiMarkovGenerator(np.asarray(cfg["P"], dtype=float),
                                   [_holding_sampler(h) for h in cfg["holding"]])
    if kind == "deterministic":
        return DeterministicGenerator([tuple(p) for p in cfg["schedule"]])
    raise ValueError(f"unknown jump generator kind {kind!r}")
