"""Experiment configuration: an INI file with sections, defaulting to the
double-well benchmark (H = 0.7 on [0, 1], 4096 steps, f = g = x - x^3,
sigma = sin, initial pair (1, 3), kappa in {0, 10, 100, 1000}, seeds 0..9).
"""

from __future__ import annotations

import configparser
import hashlib
import importlib
import io
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

from .flows import VectorFieldSpec, linear_field, sine_field
from .model import DriftSpec, double_well, linear_drift
from .paths import GridPath, HurstParam, Regime, RoughLift, TimeGrid, lift_geometric, sample_fbm

__all__ = [
    "ConfigError", "ExperimentConfig", "Model", "register_model", "resolve_model",
    "load_config", "build_driver", "default_alpha", "BUILTIN_MODELS",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class Model:
    f: DriftSpec
    g: DriftSpec
    sigma: VectorFieldSpec


_REGISTRY: dict[str, Callable[[], Model]] = {}


def register_model(name: str):
    """Decorator registering a zero-argument factory returning a :class:`Model`."""
    def deco(factory):
        _REGISTRY[name] = factory
        return factory
    return deco


@register_model("double_well_sin")
def _double_well_sin() -> Model:
    f = double_well()
    return Model(f, f, sine_field(1))


@register_model("linear")
def _linear() -> Model:
    f = linear_drift(1.0)
    return Model(f, f, linear_field(1))


BUILTIN_MODELS = ("double_well_sin", "linear")


def resolve_model(name: str) -> Model:
    """Registered name, or ``package.module:factory`` for a user factory."""
    if name in _REGISTRY:
        return _REGISTRY[name]()
    if ":" in name:
        mod, _, attr = name.partition(":")
        try:
            factory = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot import model factory {name!r}: {exc}") from exc
        model = factory()
        if not isinstance(model, Model):
            raise ConfigError(f"{name!r} did not return a Model")
        return model
    raise ConfigError(f"unknown model {name!r}; known: {sorted(_REGISTRY)}")


def default_alpha(hurst: float) -> float:
    """Hölder exponent used for variation norms: just above the regime's lower
    limit (1/2 for Young, 1/3 for rough) and below H."""
    hp = HurstParam(hurst)
    if hp.regime is Regime.YOUNG:
        return min(0.55, 0.5 * (0.5 + hurst))
    return min(0.35, 0.5 * (1.0 / 3.0 + hurst))


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.replace(";", ",").split(","))


def _ints(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class ExperimentConfig:
    hurst: float = 0.7
    a: float = 0.0
    b: float = 1.0
    n_steps: int = 4096
    model: str = "double_well_sin"
    y0_1: tuple = (1.0,)
    y0_2: tuple = (3.0,)
    kappas: tuple = (0.0, 10.0, 100.0, 1000.0)
    seeds: tuple = tuple(range(10))
    lam: float = 0.5
    generic_c: float = 2.0
    window_fraction: float = 0.2
    alpha: Optional[float] = None
    c_sigma: Optional[float] = None
    scheme: str = "milstein"
    out_dir: str = "out"
    tolerances: dict = field(default_factory=dict, hash=False)

    def validate(self) -> "ExperimentConfig":
        try:
            HurstParam(self.hurst)
            TimeGrid(self.a, self.b, self.n_steps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        model = resolve_model(self.model)
        m = model.sigma.m
        if len(self.y0_1) != m or len(self.y0_2) != m:
            raise ConfigError(f"initial data must have {m} components")
        if not self.kappas:
            raise ConfigError("kappa list is empty")
        if any(k < 0 for k in self.kappas):
            raise ConfigError("kappa values must be >= 0")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(s < 0 or s >= 2 ** 64 for s in self.seeds):
            raise ConfigError("seeds must lie in [0, 2**64)")
        if not 0 < self.lam < 1:
            raise ConfigError("lambda must lie in (0, 1)")
        if not self.generic_c > 1:
            raise ConfigError("the generic constant C must be > 1")
        if not 0 <= self.window_fraction < 1:
            raise ConfigError("window fraction must lie in [0, 1)")
        if self.alpha is not None:
            lo = 0.5 if self.regime is Regime.YOUNG else 1.0 / 3.0
            if not lo < self.alpha < self.hurst:
                raise ConfigError(f"alpha must lie in ({lo:.4g}, H)")
        if self.c_sigma is not None and not self.c_sigma > 0:
            raise ConfigError("c_sigma must be positive")
        if self.scheme not in ("milstein", "euler"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        return self

    @property
    def regime(self) -> Regime:
        return HurstParam(self.hurst).regime

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.a, self.b, self.n_steps)

    @property
    def alpha_value(self) -> float:
        return self.alpha if self.alpha is not None else default_alpha(self.hurst)

    @property
    def p(self) -> float:
        return 1.0 / self.alpha_value

    def resolved_model(self) -> Model:
        model = resolve_model(self.model)
        if self.c_sigma is not None:
            model = Model(model.f, model.g, model.sigma.with_bound(self.c_sigma))
        return model

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    # INI round trip ----------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["driver"] = {"hurst": _fmt(self.hurst), "a": _fmt(self.a), "b": _fmt(self.b),
                        "n_steps": str(self.n_steps)}
        model = {"name": self.model, "y0_1": ", ".join(map(_fmt, self.y0_1)),
                 "y0_2": ", ".join(map(_fmt, self.y0_2)), "scheme": self.scheme}
        if self.c_sigma is not None:
            model["c_sigma"] = _fmt(self.c_sigma)
        cp["model"] = model
        coupling = {"kappas": ", ".join(map(_fmt, self.kappas)), "lambda": _fmt(self.lam),
                    "generic_c": _fmt(self.generic_c),
                    "window_fraction": _fmt(self.window_fraction)}
        if self.alpha is not None:
            coupling["alpha"] = _fmt(self.alpha)
        cp["coupling"] = coupling
        cp["run"] = {"seeds": ", ".join(str(s) for s in self.seeds), "out_dir": self.out_dir}
        if self.tolerances:
            cp["tolerances"] = {k: _fmt(v) for k, v in sorted(self.tolerances.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        base = cls()
        kw = {}
        known = {"driver", "model", "coupling", "run", "tolerances", "manifest"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            if cp.has_section("driver"):
                s = cp["driver"]
                _only(s, {"hurst", "a", "b", "n_steps"})
                for key in ("hurst", "a", "b"):
                    if key in s:
                        kw[key] = float(s[key])
                if "n_steps" in s:
                    kw["n_steps"] = int(s["n_steps"])
            if cp.has_section("model"):
                s = cp["model"]
                _only(s, {"name", "y0_1", "y0_2", "scheme", "c_sigma"})
                if "name" in s:
                    kw["model"] = s["name"].strip()
                for key in ("y0_1", "y0_2"):
                    if key in s:
                        kw[key] = _floats(s[key])
                if "scheme" in s:
                    kw["scheme"] = s["scheme"].strip()
                if "c_sigma" in s:
                    kw["c_sigma"] = float(s["c_sigma"])
            if cp.has_section("coupling"):
                s = cp["coupling"]
                _only(s, {"kappas", "lambda", "generic_c", "window_fraction", "alpha"})
                if "kappas" in s:
                    kw["kappas"] = _floats(s["kappas"])
                if "lambda" in s:
                    kw["lam"] = float(s["lambda"])
                for key in ("generic_c", "window_fraction", "alpha"):
                    if key in s:
                        kw[key] = float(s[key])
            if cp.has_section("run"):
                s = cp["run"]
                _only(s, {"seeds", "out_dir"})
                if "seeds" in s:
                    kw["seeds"] = _ints(s["seeds"])
                if "out_dir" in s:
                    kw["out_dir"] = s["out_dir"].strip()
            if cp.has_section("tolerances"):
                kw["tolerances"] = {k: float(v) for k, v in cp["tolerances"].items()}
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config value: {exc}") from exc
        return replace(base, **kw)


def _only(section, allowed: set) -> None:
    extra = set(section.keys()) - allowed
    if extra:
        raise ConfigError(f"unknown keys in [{section.name}]: {sorted(extra)}")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_ini(fh.read())


def build_driver(config: ExperimentConfig, seed: int, dim: Optional[int] = None):
    """fBm driver for one seed: a path in the Young regime, its lift otherwise."""
    if dim is None:
        dim = resolve_model(config.model).sigma.d
    path = sample_fbm(config.hurst, config.grid, dim, seed)
    if config.regime is Regime.YOUNG:
        return path
    return lift_geometric(path)


def config_fields() -> list:
    return [f.name for f in fields(ExperimentConfig)]
