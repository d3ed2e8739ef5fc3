"""Experiment configuration: one JSON file, validated before anything runs."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .jumps import generator_from_config
from .model import CoefficientSet, model_from_config

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]

DEFAULT_LAMBDAS = [2.0 ** k for k in range(4, 11)]

TOP_KEYS = {"model", "jumps", "driver", "T", "step", "paths", "seed", "out", "slack", "tail",
            "max_path_steps", "ito_step", "workers", "synthetic", "dump"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    jumps: dict
    driver_kind: str = "polygonal"
    lam: float = 256.0
    lambdas: tuple = tuple(DEFAULT_LAMBDAS)
    T: float = 1.0
    step_ratio: Optional[float] = 8.0
    step: Optional[float] = None
    paths: int = 100
    seed: int = 0
    out: str = "out"
    slack_rel: float = 1e-3
    slack_abs: float = 1e-6
    slack_x: float = 1e-6
    gamma: float = 1.0
    epsilon: float = 0.0
    q: float = 1.0
    max_path_steps: Optional[int] = None
    ito_step: float = 2.0 ** -12
    workers: int = 1
    synthetic: Optional[dict] = None
    dump: dict = field(default_factory=lambda: {"t": 0.0, "x_lo": -5.0, "x_hi": 5.0, "n": 21})

    def build_model(self) -> CoefficientSet:
        return model_from_config(self.model)

    def build_generator(self):
        return generator_from_config(self.jumps)

    @property
    def j0(self) -> int:
        return int(self.jumps.get("j0", 0))

    def step_for(self, lam: float) -> float:
        return self.step if self.step is not None else 1.0 / (self.step_ratio * lam)

    def canonical(self) -> dict:
        """Everything that can change results (``out`` and ``workers`` cannot)."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        d["lambdas"] = list(d["lambdas"])
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, workers: Optional[int] = None,
                       out: Optional[str] = None) -> "ExperimentConfig":
        d = asdict(self)
        if seed is not None:
            d["seed"] = _seed(seed)
        if workers is not None:
            d["workers"] = _positive_int(workers, "workers")
        if out is not None:
            d["out"] = str(out)
        return ExperimentConfig(**d)


def _num(x, name: str, positive: bool = False, allow_zero: bool = True) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"{name} must be a finite number, got {x!r}")
    if positive and (x < 0 or (x == 0 and not allow_zero)):
        raise ConfigError(f"{name} must be {'positive' if not allow_zero else 'non-negative'}, got {x}")
    return float(x)


def _positive_int(x, name: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < 1:
        raise ConfigError(f"{name} must be a positive integer, got {x!r}")
    return x


def _seed(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {x!r}")
    return x


def _lambda(x, name: str) -> float:
    x = _num(x, name)
    if x <= 0:
        raise ConfigError(f"{name} must be positive, got {x}")
    return x


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded JSON mapping; every problem raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "model" not in raw or "jumps" not in raw:
        raise ConfigError("config needs 'model' and 'jumps' sections")
    kw: dict = {"model": raw["model"], "jumps": raw["jumps"]}

    drv = raw.get("driver", {})
    kind = drv.get("kind", "polygonal")
    if kind not in ("polygonal", "transport"):
        raise ConfigError(f"driver kind must be 'polygonal' or 'transport', got {kind!r}")
    kw["driver_kind"] = kind
    if "lambda" in drv:
        kw["lam"] = _lambda(drv["lambda"], "driver.lambda")
    if "lambdas" in drv:
        lams = [_lambda(x, "driver.lambdas entry") for x in drv["lambdas"]]
        if len(lams) < 4 or any(b <= a for a, b in zip(lams, lams[1:])):
            raise ConfigError("driver.lambdas must be increasing with at least 4 entries")
        kw["lambdas"] = tuple(lams)
    unknown = set(drv) - {"kind", "lambda", "lambdas"}
    if unknown:
        raise ConfigError(f"unknown driver keys {sorted(unknown)}")

    if "T" in raw:
        kw["T"] = _num(raw["T"], "T", positive=True, allow_zero=False)
    step = raw.get("step", {})
    if "step" in step and "ratio" in step:
        raise ConfigError("give either step.step or step.ratio, not both")
    if "step" in step:
        kw["step"] = _num(step["step"], "step.step", positive=True, allow_zero=False)
        kw["step_ratio"] = None
    elif "ratio" in step:
        kw["step_ratio"] = _num(step["ratio"], "step.ratio", positive=True, allow_zero=False)
        if kw["step_ratio"] < 8:
            raise ConfigError("step.ratio must be >= 8 (grid at least 8x finer than the driver mesh)")
    if "paths" in raw:
        kw["paths"] = _positive_int(raw["paths"], "paths")
    if "seed" in raw:
        kw["seed"] = _seed(raw["seed"])
    if "out" in raw:
        kw["out"] = str(raw["out"])
    if "workers" in raw:
        kw["workers"] = _positive_int(raw["workers"], "workers")
    slack = raw.get("slack", {})
    for key, name in (("rel", "slack_rel"), ("abs", "slack_abs"), ("x", "slack_x")):
        if key in slack:
            kw[name] = _num(slack[key], f"slack.{key}", positive=True)
    tail = raw.get("tail", {})
    for key in ("gamma", "epsilon", "q"):
        if key in tail:
            kw[key] = _num(tail[key], f"tail.{key}")
    if kw.get("gamma", 1.0) <= 0 or kw.get("q", 1.0) <= 0:
        raise ConfigError("tail.gamma and tail.q must be positive")
    if "max_path_steps" in raw and raw["max_path_steps"] is not None:
        kw["max_path_steps"] = _positive_int(raw["max_path_steps"], "max_path_steps")
    if "ito_step" in raw:
        kw["ito_step"] = _num(raw["ito_step"], "ito_step", positive=True, allow_zero=False)
    if "synthetic" in raw:
        syn = raw["synthetic"]
        if not isinstance(syn, dict) or "exponent" not in syn:
            raise ConfigError("synthetic needs an 'exponent' (errors are lambda**exponent)")
        kw["synthetic"] = {"exponent": _num(syn["exponent"], "synthetic.exponent"),
                           "scale": _num(syn.get("scale", 1.0), "synthetic.scale", positive=True,
                                         allow_zero=False)}
    if "dump" in raw:
        d = {"t": 0.0, "x_lo": -5.0, "x_hi": 5.0, "n": 21}
        d.update(raw["dump"])
        d = {"t": _num(d["t"], "dump.t"), "x_lo": _num(d["x_lo"], "dump.x_lo"),
             "x_hi": _num(d["x_hi"], "dump.x_hi"), "n": _positive_int(d["n"], "dump.n")}
        kw["dump"] = d

    cfg = ExperimentConfig(**kw)
    # build the model and generator now so that bad parameters fail before any simulation
    try:
        model = cfg.build_model()
        gen = cfg.build_generator()
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid model or jump specification: {exc}") from None
    if gen.n_regimes > model.n_regimes:
        raise ConfigError(f"jump generator has {gen.n_regimes} regimes, model only {model.n_regimes}")
    if not 0 <= cfg.j0 < gen.n_regimes:
        raise ConfigError(f"jumps.j0={cfg.j0} is not a regime of the generator")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw)
