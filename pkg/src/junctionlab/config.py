"""Flat ``section.key = value`` run configuration.

Lines starting with ``#`` are comments.  A ``[section]`` header line lets
the following bare ``key = value`` lines inherit that section.  String
values may be quoted.  Unknown keys are errors.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .expressions import ExpressionError, parse_expression
from .geometry import JunctionConfig, MeshError
from .problem_data import STANDARD, UNCONSTRAINED, ProblemData


class ConfigError(ValueError):
    pass


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _list_of(conv):
    def parse(v):
        v = v.strip()
        if v.startswith("(") and v.endswith(")") or v.startswith("[") and v.endswith("]"):
            v = v[1:-1]
        return [conv(p.strip()) for p in v.split(",") if p.strip()]

    return parse


def _str(v):
    return v


def _bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _expr_list(v):
    out = []
    for part in _list_of(_str)(v):
        part = part.strip().strip('"').strip("'")
        out.append(part)
    return out


SCHEMA = {
    "geometry": {
        "a": _float, "l": _float, "h": _float, "N": _int, "gamma": _str,
        "nx_rod": _int, "ny_rod": _int, "ny_body": _int, "nx_gap": _int,
    },
    "data": {"f": _str, "g": _str, "d": _str, "g_mode": _str},
    "solver": {"method": _str, "omega": _float, "tol": _float, "max_iter": _int},
    "run": {
        "N_list": _list_of(_int), "output_dir": _str, "limit_refine": _int,
        "v_list": _expr_list, "psi_list": _expr_list, "threshold": _float,
        "oracle_refine": _int, "plots": _bool, "trials": _int,
    },
}

DEFAULTS = {
    "geometry": {"a": 1.0, "l": 1.0, "h": 0.5, "gamma": "1", "nx_rod": 4, "ny_rod": 32, "ny_body": 32},
    "data": {"f": "0", "g": "0", "d": "0", "g_mode": STANDARD},
    "solver": {"method": "pdas", "omega": 1.5, "tol": 1e-10},
    "run": {"output_dir": "out", "limit_refine": 4, "threshold": 1e-10, "oracle_refine": 4, "plots": True, "trials": 50},
}


@dataclass
class RunConfig:
    geometry: dict
    data: ProblemData
    solver: dict
    run: dict
    raw: dict = field(default_factory=dict)

    def junction(self, N: int | None = None) -> JunctionConfig:
        g = dict(self.geometry)
        if N is not None:
            g["N"] = N
        if "N" not in g:
            raise ConfigError("geometry.N is required for this command")
        try:
            return JunctionConfig(**g)
        except (MeshError, ExpressionError) as exc:
            raise ConfigError(f"geometry: {exc}") from exc

    def solver_options(self) -> dict:
        opts = {}
        method = self.solver["method"]
        if "tol" in self.solver:
            opts["tol"] = self.solver["tol"]
        if "max_iter" in self.solver:
            opts["max_iter"] = self.solver["max_iter"]
        if method == "psor":
            opts["omega"] = self.solver["omega"]
        return opts

    @property
    def method(self) -> str:
        return self.solver["method"]


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        try:
            parts = shlex.split(v)
        except ValueError:
            return v
        if len(parts) == 1:
            return parts[0]
    return v


def parse_config_text(text: str) -> RunConfig:
    values: dict[str, dict] = {s: {} for s in SCHEMA}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]") and "=" not in stripped:
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in stripped.split("=", 1))
        if "." in key:
            sec, name = key.split(".", 1)
        elif section is not None:
            sec, name = section, key
        else:
            raise ConfigError(f"line {lineno}: key {key!r} has no section")
        if sec not in SCHEMA or name not in SCHEMA[sec]:
            raise ConfigError(f"line {lineno}: unknown key {sec}.{name}")
        if name in values[sec]:
            raise ConfigError(f"line {lineno}: duplicate key {sec}.{name}")
        try:
            values[sec][name] = SCHEMA[sec][name](_unquote(value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {sec}.{name}: {exc}") from exc

    merged = {s: {**DEFAULTS.get(s, {}), **values[s]} for s in SCHEMA}
    if merged["solver"]["method"] not in ("psor", "pdas"):
        raise ConfigError("solver.method must be psor or pdas")
    if not 0.0 < merged["solver"]["omega"] < 2.0:
        raise ConfigError("solver.omega must lie in (0, 2)")
    if merged["data"]["g_mode"] not in (STANDARD, UNCONSTRAINED):
        raise ConfigError("data.g_mode must be standard or unconstrained")
    nl = merged["run"].get("N_list")
    if nl is not None:
        if not nl or any(n < 1 for n in nl) or any(b <= a for a, b in zip(nl, nl[1:])):
            raise ConfigError("run.N_list must be strictly increasing positive integers")
    try:
        data = ProblemData(
            parse_expression(merged["data"]["f"]),
            parse_expression(merged["data"]["g"]),
            parse_expression(merged["data"]["d"]),
            merged["data"]["g_mode"],
        )
        parse_expression(merged["geometry"]["gamma"])
        for key in ("v_list", "psi_list"):
            for t in merged["run"].get(key, []):
                parse_expression(t)
    except ExpressionError as exc:
        raise ConfigError(f"expression error: {exc}") from exc
    return RunConfig(merged["geometry"], data, merged["solver"], merged["run"], values)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config_text(text)
