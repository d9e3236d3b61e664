"""Experiment configuration: INI files with typed, range-checked fields.

Layout::

    [experiment]
    kind = picard
    system = cubic-dissipative
    seed = 7
    n_paths = 1000

    [system]            # overrides passed to the builtin family
    jump_gain = 0.2

Values are parsed as Python literals when possible (``[2, 4]``, ``1e-3``,
``true``), otherwise kept as strings.
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .coefficients import BUILTIN_SYSTEMS
from .solver import SolverSettings

KINDS = ("simulate", "picard", "stability", "ito-check", "bj-check", "burkholder-check", "validate")


class ConfigError(ValueError):
    pass


def _literal(raw: str) -> Any:
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError):
        return raw.strip()


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    system: str = "linear-ou-jump"
    overrides: Mapping[str, Any] = field(default_factory=dict)
    p: float | None = None
    T: float | None = None
    dim: int | None = None
    n_steps: int = 512
    n_paths: int = 1000
    n_iters: int = 9
    seed: int = 0
    out: str = "results"
    solver_tol: float = 1e-13
    max_iter: int = 50
    max_halvings: int = 20
    picard_tol: float = 0.0
    ps: tuple = ()
    y0_shift: float = 0.5
    compare_direct: bool = False
    validate_samples: int = 10_000
    validate_radius: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ConfigError(f"{name}: {msg}")

        need(self.kind in KINDS, "kind", f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        need(self.system in BUILTIN_SYSTEMS, "system",
             f"unknown system {self.system!r}; expected one of {', '.join(BUILTIN_SYSTEMS)}")
        lowest = 1.0 if self.kind == "bj-check" else 2.0
        for q in self.exponents:
            need(isinstance(q, (int, float)) and q >= lowest, "p", f"must be >= {lowest:g}, got {q!r}")
        need(self.T is None or self.T > 0, "T", "must be positive")
        need(self.dim is None or (isinstance(self.dim, int) and self.dim >= 1), "dim", "must be a positive integer")
        for name in ("n_steps", "n_paths", "n_iters", "max_iter", "validate_samples"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, name, f"must be an integer >= 1, got {v!r}")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed", "must be a non-negative integer")
        need(self.solver_tol > 0, "solver_tol", "must be positive")
        need(self.picard_tol >= 0, "picard_tol", "must be non-negative")
        need(self.max_halvings >= 0, "max_halvings", "must be non-negative")
        need(self.validate_radius > 0, "validate_radius", "must be positive")
        need(self.y0_shift != 0, "y0_shift", "must be nonzero")

    @property
    def exponents(self) -> tuple:
        if self.ps:
            return tuple(self.ps)
        return (self.p if self.p is not None else 2.0,)

    @property
    def settings(self) -> SolverSettings:
        return SolverSettings(self.n_steps, self.solver_tol, self.max_iter, self.max_halvings)

    def system_overrides(self, p: float | None = None) -> dict:
        o = dict(self.overrides)
        q = p if p is not None else self.p
        if q is not None:
            o["p"] = float(max(q, 2.0))
        if self.T is not None:
            o["T"] = float(self.T)
        if self.dim is not None:
            o["dim"] = int(self.dim)
        return o

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["overrides"] = dict(self.overrides)
        d["ps"] = list(self.ps)
        return d


_FIELDS = {f.name for f in fields(ExperimentConfig)} - {"overrides"}
_ALIASES = {"tol": "solver_tol"}


def config_from_mapping(experiment: Mapping[str, Any], system: Mapping[str, Any] | None = None,
                        solver: Mapping[str, Any] | None = None) -> ExperimentConfig:
    values: dict[str, Any] = {}
    for section in (experiment, solver or {}):
        for k, v in section.items():
            k = _ALIASES.get(k, k)
            if k not in _FIELDS:
                raise ConfigError(f"{k}: unknown configuration key")
            values[k] = v
    if "kind" not in values:
        raise ConfigError("kind: missing experiment kind")
    if "ps" in values:
        v = values["ps"]
        values["ps"] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
    for k in ("p", "T", "solver_tol", "picard_tol", "y0_shift", "validate_radius"):
        if k in values and isinstance(values[k], int) and not isinstance(values[k], bool):
            values[k] = float(values[k])
    for k in ("p", "T", "solver_tol", "picard_tol", "y0_shift", "validate_radius"):
        if k in values and values[k] is not None and not isinstance(values[k], float):
            raise ConfigError(f"{k}: expected a number, got {values[k]!r}")
    try:
        return ExperimentConfig(overrides=dict(system or {}), **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, kind: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    unknown = set(parser.sections()) - {"experiment", "system", "solver"}
    if unknown:
        raise ConfigError(f"config: unknown section(s) {sorted(unknown)}")

    def section(name):
        return {k: _literal(v) for k, v in parser[name].items()} if parser.has_section(name) else {}

    exp = section("experiment")
    if kind is not None:
        if "kind" in exp and exp["kind"] != kind:
            raise ConfigError(f"kind: config says {exp['kind']!r} but the command is {kind!r}")
        exp["kind"] = kind
    return config_from_mapping(exp, section("system"), section("solver"))
