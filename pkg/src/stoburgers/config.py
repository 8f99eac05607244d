"""Experiment specifications and their YAML text form."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .dynamics import SimConfig

SUBCOMMANDS = ("simulate", "ou-check", "alpha-scaling", "expmoment", "lambda-scan", "variational",
               "gradient", "lipschitz", "invariant", "convergence", "selftest")

SIM_FIELDS = {"gamma": float, "n": int, "dt": float, "horizon": float, "m_quad": (int, type(None)),
              "nonlinear": bool}


class ConfigError(ValueError):
    """Malformed configuration; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class ExperimentSpec:
    name: str
    subcommand: str
    sim: dict
    x0: object = "zero"
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out: str = "results"

    def sim_config(self) -> SimConfig:
        try:
            return SimConfig(**self.sim)
        except (TypeError, ValueError) as exc:
            raise ConfigError("sim", str(exc)) from exc

    def to_dict(self) -> dict:
        return {"name": self.name, "subcommand": self.subcommand, "seed": self.seed,
                "workers": self.workers, "out": self.out, "sim": dict(self.sim),
                "x0": copy.deepcopy(self.x0), "params": copy.deepcopy(self.params)}

    def echo(self) -> dict:
        """Content that determines the results (excludes output location and worker count)."""
        d = self.to_dict()
        del d["out"], d["workers"]
        return d

    def spec_hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_SIM = {"gamma": 0.0, "n": 32, "dt": 1e-3, "horizon": 1.0, "m_quad": None, "nonlinear": True}


def _check_type(path, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(path, f"expected int, got {value!r}")
    if not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(path, f"expected {names}, got {value!r}")
    return value


def from_dict(data) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping")
    known = {"name", "subcommand", "seed", "workers", "out", "sim", "x0", "params"}
    for key in data:
        if key not in known:
            raise ConfigError(str(key), "unknown field")
    sub = data.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {sub!r}")
    sim = dict(DEFAULT_SIM)
    raw_sim = data.get("sim", {}) or {}
    if not isinstance(raw_sim, dict):
        raise ConfigError("sim", "expected a mapping")
    for key, value in raw_sim.items():
        if key not in SIM_FIELDS:
            raise ConfigError(f"sim.{key}", "unknown field")
        sim[key] = _check_type(f"sim.{key}", value, SIM_FIELDS[key])
    params = data.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("params", "expected a mapping")
    x0 = data.get("x0", "zero")
    if not isinstance(x0, (str, list)):
        raise ConfigError("x0", "expected a preset name or a list of coefficients")
    if isinstance(x0, list):
        x0 = [_check_type(f"x0[{i}]", v, float) for i, v in enumerate(x0)]
    seed = _check_type("seed", data.get("seed", 0), int)
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    workers = _check_type("workers", data.get("workers", 1), int)
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    spec = ExperimentSpec(
        name=_check_type("name", data.get("name", sub), str),
        subcommand=sub,
        sim=sim,
        x0=x0,
        params=params,
        seed=seed,
        workers=workers,
        out=_check_type("out", data.get("out", "results"), str),
    )
    spec.sim_config()
    return spec


def dumps(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)


def loads(text: str) -> ExperimentSpec:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentSpec:
    with open(path) as fh:
        return loads(fh.read())
