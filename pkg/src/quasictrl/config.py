"""Flat ``section.key = value`` run configuration.

Lines starting with ``#`` are comments. Values are stored verbatim as strings
and converted on access, so ``parse(dumps(cfg)) == cfg`` holds exactly.
Defaults are never written into the mapping.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

from .errors import ConfigError

log = logging.getLogger(__name__)

EXPERIMENTS = ("simulate", "certificate", "obstruct", "chain", "optimize")
FAMILIES = ("constant", "separable", "exponential", "adversarial", "bump", "csv")

# key -> (kind, default); kind is one of float, int, bool, str, list, or a tuple of choices
SCHEMA: dict[str, tuple] = {
    "experiment": (EXPERIMENTS, None),
    "physics.mu": ("float", "1.0"),
    "physics.fr": ("float", "1.0"),
    "physics.r": ("float_or_derived", "derived"),
    "physics.r_override": ("bool", "false"),
    "grid.n_cells": ("int", "256"),
    "grid.n_steps": ("int", "256"),
    "grid.horizon": ("float", "0.1"),
    "dual.xi": ("list", "0.25,0.5,0.75"),
    "dual.theta": ("float_or_search", "2.0"),
    "dual.T_star": ("float_or_search", "search"),
    "dual.time_samples": ("int", "10000"),
    "h0.family": (FAMILIES, "adversarial"),
    "h0.value": ("float", "1.0"),
    "h0.amplitude": ("float", "0.1"),
    "h0.a": ("float", "1.0"),
    "h0.base": ("float", "1.0"),
    "h0.height": ("float", "2.0"),
    "h0.center": ("float", "0.5"),
    "h0.width": ("float", "0.08"),
    "h0.path": ("str", ""),
    "h1.family": (FAMILIES, "constant"),
    "h1.value": ("float", "1.0"),
    "h1.amplitude": ("float", "0.1"),
    "h1.a": ("float", "1.0"),
    "h1.base": ("float", "1.0"),
    "h1.height": ("float", "2.0"),
    "h1.center": ("float", "0.5"),
    "h1.width": ("float", "0.08"),
    "h1.path": ("str", ""),
    "simulate.controls": (("quasi", "constant"), "quasi"),
    "chain.source": (("analytic", "simulate"), "analytic"),
    "chain.corrupt": ("float", "0.0"),
    "chain.tol": ("float", "1e-3"),
    "obstruct.case": (("null", "target"), "null"),
    "obstruct.K": ("float", "1.0"),
    "obstruct.budget": ("float", "1e-2"),
    "obstruct.random_controls": ("int", "3"),
    "obstruct.seed": ("int", "0"),
    "obstruct.compare_optimizer": ("bool", "true"),
    "optimizer.iterations": ("int", "200"),
    "optimizer.knots": ("int", "8"),
    "optimizer.step0": ("float", "1.0"),
    "output.dir": ("str", "out"),
}

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _convert(key: str, raw: str):
    kind = SCHEMA[key][0]
    try:
        if isinstance(kind, tuple):
            if raw not in kind:
                raise ValueError(f"expected one of {', '.join(kind)}")
            return raw
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError("expected a boolean")
        if kind == "list":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "float_or_derived":
            return raw if raw == "derived" else float(raw)
        if kind == "float_or_search":
            return raw if raw == "search" else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key} = {raw!r}: {exc}") from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: str | None = None

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def get(self, key: str):
        if key not in SCHEMA:
            raise KeyError(key)
        raw = self.values.get(key, SCHEMA[key][1])
        if raw is None:
            raise ConfigError(f"missing required key {key}")
        return _convert(key, raw)

    def __getitem__(self, key):
        return self.get(key)

    def with_values(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        for k, v in updates.items():
            vals[k.replace("__", ".")] = str(v)
        return RunConfig(vals, self.source)

    @property
    def experiment(self) -> str:
        return self.get("experiment")

    def mu(self) -> float:
        return self.get("physics.mu")

    def friction(self) -> float | None:
        """None means derived from mu and Fr."""
        r = self.get("physics.r")
        return None if r == "derived" else r

    def validate(self) -> "RunConfig":
        for key in self.values:
            self.get(key)
        self.get("experiment")
        mu, fr = self.get("physics.mu"), self.get("physics.fr")
        if not mu > 0 or not fr > 0:
            raise ConfigError("physics.mu and physics.fr must be positive")
        r = self.friction()
        if r is not None:
            derived = 1.0 / (mu * fr**2)
            if abs(r - derived) > 1e-12 * derived:
                if not self.get("physics.r_override"):
                    raise ConfigError(f"physics.r = {r} differs from 1/(mu Fr^2) = {derived}; "
                                      "set physics.r_override = true to keep it")
                log.warning("friction r=%g overrides the quasi-solution value %g", r, derived)
        for key in ("grid.n_cells", "grid.n_steps"):
            if self.get(key) < 4:
                raise ConfigError(f"{key} must be at least 4")
        if not self.get("grid.horizon") > 0:
            raise ConfigError("grid.horizon must be positive")
        xi = self.get("dual.xi")
        if len(xi) != 3 or not (0 < xi[0] < xi[1] < xi[2] < 1):
            raise ConfigError(f"dual.xi must be three increasing points in (0, 1), got {xi}")
        theta, T = self.get("dual.theta"), self.get("dual.T_star")
        if theta == "search" and T == "search":
            raise ConfigError("dual.theta and dual.T_star cannot both be 'search'")
        if theta != "search" and not theta > 0:
            raise ConfigError("dual.theta must be positive")
        if T != "search" and not T > 0:
            raise ConfigError("dual.T_star must be positive")
        if self.get("optimizer.knots") < 2:
            raise ConfigError("optimizer.knots must be at least 2")
        if self.get("optimizer.iterations") < 0:
            raise ConfigError("optimizer.iterations must be nonnegative")
        for prefix in ("h0", "h1"):
            if self.get(f"{prefix}.family") == "csv":
                path = self.resolve_path(self.get(f"{prefix}.path"))
                if not path or not os.path.isfile(path):
                    raise ConfigError(f"{prefix}.path {path!r} does not exist")
        return self

    def resolve_path(self, path: str) -> str:
        if path and not os.path.isabs(path) and self.source:
            return os.path.join(os.path.dirname(os.path.abspath(self.source)), path)
        return path


def parse(text: str, source: str | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        _convert(key, value)
        values[key] = value
    return RunConfig(values, source)


def dumps(cfg: RunConfig) -> str:
    lines = [f"{k} = {cfg.values[k]}" for k in sorted(cfg.values)]
    return "\n".join(lines) + "\n"


def load(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text, source=path).validate()
