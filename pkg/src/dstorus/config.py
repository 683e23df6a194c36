"""Structured run configuration: TOML or JSON text, validated in one pass.

Keys live in sections (``grid``, ``time``, ``nonlinearity``, ``diagnostics``,
``initial``, ``strichartz``, ``run``) but may also be written flat at top level
when the bare name is unambiguous. A ``sweep`` table maps keys to lists; the
cartesian product of its axes expands into one run config per combination.

Environment variables ``DSTORUS_<KEY>`` or ``DSTORUS_<SECTION>_<KEY>`` override
file values. Every value carries its provenance: "explicit", "env" or "default".
"""

from __future__ import annotations

import itertools
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from .evolution import SolverConfig, in_theorem_range

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["ConfigError", "ParsedConfig", "parse_config", "load_config", "SCHEMA", "ENV_PREFIX"]

ENV_PREFIX = "DSTORUS_"
INITIAL_KINDS = ("zero", "gaussian", "exp_trig", "hypnls", "ozawa", "random")
PROBES = ("bilinear", "semiclassical", "bounds", "trilinear")


class ConfigError(ValueError):
    """All validation problems of one config, reported together."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: str  # float | int | bool | str | floats | ints
    default: Any
    check: Optional[Callable[[Any], Optional[str]]] = None

    @property
    def dotted(self) -> str:
        return f"{self.section}.{self.name}"


def _positive(v):
    return None if v > 0 else f"must be positive, got {v}"


def _even_positive(v):
    return None if v > 0 and v % 2 == 0 else f"must be a positive even integer, got {v}"


def _sign(v):
    return None if v in (1, -1) else f"must be +1 or -1, got {v}"


def _unit_open(v):
    return None if 0 < v < 1 else f"must lie in (0, 1), got {v}"


def _one_of(options):
    return lambda v: None if v in options else f"must be one of {', '.join(options)}, got {v!r}"


def _nonempty_positive(v):
    if not v:
        return "must be a non-empty list"
    return None if all(x > 0 for x in v) else f"entries must be positive, got {list(v)}"


_DEFAULTS = SolverConfig()

SCHEMA: tuple[Key, ...] = (
    Key("grid", "L", "float", _DEFAULTS.L, _positive),
    Key("grid", "nx", "int", _DEFAULTS.nx, _even_positive),
    Key("grid", "ny", "int", _DEFAULTS.ny, _even_positive),
    Key("time", "dt0", "float", _DEFAULTS.dt0, _positive),
    Key("time", "t_end", "float", _DEFAULTS.t_end, _positive),
    Key("time", "sample_dt", "float", _DEFAULTS.sample_dt, _positive),
    Key("time", "adaptive", "bool", _DEFAULTS.adaptive),
    Key("time", "dt_min_factor", "float", _DEFAULTS.dt_min_factor, lambda v: None if 0 < v <= 1 else
        f"must lie in (0, 1], got {v}"),
    Key("nonlinearity", "sigma", "int", _DEFAULTS.sigma, _sign),
    Key("nonlinearity", "e_enabled", "bool", _DEFAULTS.e_enabled),
    Key("nonlinearity", "dealias", "bool", _DEFAULTS.dealias),
    Key("diagnostics", "s_list", "floats", list(_DEFAULTS.s_list)),
    Key("diagnostics", "linf_max", "float", _DEFAULTS.linf_max, _positive),
    Key("diagnostics", "tail_max", "float", _DEFAULTS.tail_max, _unit_open),
    Key("diagnostics", "expect_theorem_range", "bool", False),
    Key("initial", "kind", "str", "gaussian", _one_of(INITIAL_KINDS)),
    Key("initial", "amplitude", "float", 1.0),
    Key("initial", "width", "float", 1.0, _positive),
    Key("initial", "cx", "float", 1.0),
    Key("initial", "sy", "float", 0.5),
    Key("initial", "profile_cos", "floats", [2.0, 1.0]),
    Key("initial", "profile_sin", "floats", []),
    Key("initial", "k_max", "int", 4, _positive),
    Key("strichartz", "probe", "str", "bilinear", _one_of(PROBES)),
    Key("strichartz", "Ls", "floats", [1.0, 2.0, 4.0, 8.0], _nonempty_positive),
    Key("strichartz", "Ns", "ints", [1, 2, 4, 8, 16], _nonempty_positive),
    Key("strichartz", "hs", "floats", [0.5, 0.25, 0.125, 0.0625], _nonempty_positive),
    Key("strichartz", "Rs", "ints", [1, 2, 4], _nonempty_positive),
    Key("strichartz", "extents", "ints", [1, 2, 4], _nonempty_positive),
    Key("strichartz", "trials", "int", 50, _positive),
    Key("strichartz", "s", "float", 0.75),
    Key("strichartz", "center_a", "float", 0.0),
    Key("strichartz", "center_b", "float", 0.0),
    Key("run", "seed", "int", None),
)

_BY_DOTTED = {k.dotted: k for k in SCHEMA}
_BY_NAME: dict[str, list[Key]] = {}
for _k in SCHEMA:
    _BY_NAME.setdefault(_k.name, []).append(_k)
SECTIONS = tuple(dict.fromkeys(k.section for k in SCHEMA))


def resolve_key(name: str) -> Optional[Key]:
    if name in _BY_DOTTED:
        return _BY_DOTTED[name]
    found = _BY_NAME.get(name, [])
    return found[0] if len(found) == 1 else None


def _coerce(key: Key, value):
    """Return (value, problem)."""
    k = key.kind
    if k == "bool":
        return (value, None) if isinstance(value, bool) else (None, f"expected a boolean, got {value!r}")
    if k == "str":
        return (value, None) if isinstance(value, str) else (None, f"expected a string, got {value!r}")
    if k == "int":
        if key.default is None and value is None:
            return None, None
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value), None
            return None, f"expected an integer, got {value!r}"
        return value, None
    if k == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"expected a number, got {value!r}"
        if not math.isfinite(value):
            return None, f"expected a finite number, got {value!r}"
        return float(value), None
    if k in ("floats", "ints"):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)):
            return None, f"expected a list of numbers, got {value!r}"
        out = []
        for v in value:
            sub = Key(key.section, key.name, k[:-1], None)
            c, err = _coerce(sub, v)
            if err:
                return None, f"list entry {err}"
            out.append(c)
        return out, None
    raise AssertionError(k)


def _parse_text(text: str, fmt: Optional[str]) -> dict:
    if fmt is None:
        fmt = "json" if text.lstrip().startswith("{") else "toml"
    try:
        data = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"cannot parse {fmt.upper()}: {exc}"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a table"])
    return data


def _env_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


@dataclass
class ParsedConfig:
    values: dict[str, Any]
    provenance: dict[str, str]
    sweep: dict[str, list] = field(default_factory=dict)
    label: str = ""

    def __getitem__(self, name):
        key = resolve_key(name)
        if key is None:
            raise KeyError(name)
        return self.values[key.dotted]

    @property
    def seed(self) -> Optional[int]:
        return self.values["run.seed"]

    @property
    def is_sweep(self) -> bool:
        return bool(self.sweep)

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(
            L=v["grid.L"], nx=v["grid.nx"], ny=v["grid.ny"], s_list=tuple(v["diagnostics.s_list"]),
            dt0=v["time.dt0"], t_end=v["time.t_end"], sigma=v["nonlinearity.sigma"],
            e_enabled=v["nonlinearity.e_enabled"], adaptive=v["time.adaptive"],
            dealias=v["nonlinearity.dealias"], dt_min_factor=v["time.dt_min_factor"],
            linf_max=v["diagnostics.linf_max"], tail_max=v["diagnostics.tail_max"],
            sample_dt=v["time.sample_dt"],
        )

    def section(self, name: str) -> dict[str, Any]:
        return {k.name: self.values[k.dotted] for k in SCHEMA if k.section == name}

    def expand(self) -> list["ParsedConfig"]:
        """One config per point of the sweep grid, in row-major axis order."""
        if not self.sweep:
            return [self]
        names = list(self.sweep)
        out = []
        for combo in itertools.product(*(self.sweep[n] for n in names)):
            values = dict(self.values)
            prov = dict(self.provenance)
            parts = []
            for n, v in zip(names, combo):
                values[n] = v
                prov[n] = "sweep"
                parts.append(f"{n.split('.')[-1]}={v:g}" if isinstance(v, (int, float)) else f"{n.split('.')[-1]}={v}")
            out.append(ParsedConfig(values, prov, {}, ",".join(parts)))
        return out

    def echo(self) -> dict:
        return {
            "values": {k: _jsonable(v) for k, v in self.values.items()},
            "provenance": dict(self.provenance),
            "sweep": {k: _jsonable(v) for k, v in self.sweep.items()},
            "label": self.label,
        }


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _check_cross(values: dict, problems: list):
    try:
        SolverConfig(
            L=values["grid.L"], nx=values["grid.nx"], ny=values["grid.ny"], s_list=tuple(values["diagnostics.s_list"]),
            dt0=values["time.dt0"], t_end=values["time.t_end"], sigma=values["nonlinearity.sigma"],
            sample_dt=values["time.sample_dt"], tail_max=values["diagnostics.tail_max"],
            linf_max=values["diagnostics.linf_max"], dt_min_factor=values["time.dt_min_factor"],
        )
    except (ValueError, TypeError) as exc:
        problems.append(f"solver: {exc}")
    if values["diagnostics.expect_theorem_range"]:
        bad = [s for s in values["diagnostics.s_list"] if not in_theorem_range(s)]
        if bad:
            problems.append(f"diagnostics.s_list: {bad} outside the theorem range 1/2 < s < 1")


def parse_config(text: str, fmt: Optional[str] = None, env: Optional[Mapping[str, str]] = None) -> ParsedConfig:
    """Validate config text; raises ConfigError listing every problem found."""
    data = _parse_text(text, fmt)
    env = os.environ if env is None else env
    problems: list[str] = []
    raw: dict[str, Any] = {}
    prov: dict[str, str] = {}
    sweep_raw: dict = {}

    def take(name, value, where):
        key = resolve_key(name)
        if key is None:
            hint = "ambiguous; use section.key" if len(_BY_NAME.get(name.split(".")[-1], [])) > 1 and "." not in name \
                else "unknown key"
            problems.append(f"{where}{name}: {hint}")
            return
        if key.dotted in raw:
            problems.append(f"{key.dotted}: given twice")
            return
        raw[key.dotted] = value
        prov[key.dotted] = "explicit"

    for top, value in data.items():
        if top == "sweep":
            if not isinstance(value, dict):
                problems.append("sweep: must be a table of key = [values]")
            else:
                sweep_raw = value
        elif top in SECTIONS and isinstance(value, dict):
            for name, v in value.items():
                take(f"{top}.{name}", v, "")
        else:
            take(top, value, "")

    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        key = None
        for sec in SECTIONS:
            if rest.startswith(sec + "_"):
                key = _BY_DOTTED.get(f"{sec}.{rest[len(sec) + 1:]}")
                if key is None:
                    key = next((k for k in SCHEMA if k.section == sec and k.name.lower() == rest[len(sec) + 1:]), None)
        if key is None:
            matches = [k for k in SCHEMA if k.name.lower() == rest]
            key = matches[0] if len(matches) == 1 else None
        if key is None:
            problems.append(f"environment {name}: unknown key")
            continue
        raw[key.dotted] = _env_value(env[name])
        prov[key.dotted] = "env"

    values: dict[str, Any] = {}
    for key in SCHEMA:
        if key.dotted in raw:
            v, err = _coerce(key, raw[key.dotted])
            if err is None and key.check is not None and v is not None:
                err = key.check(v)
            if err:
                problems.append(f"{key.dotted}: {err}")
                continue
            values[key.dotted] = v
        else:
            values[key.dotted] = list(key.default) if isinstance(key.default, list) else key.default
            prov[key.dotted] = "default"

    sweep: dict[str, list] = {}
    for name, axis in sweep_raw.items():
        key = resolve_key(name)
        if key is None:
            problems.append(f"sweep.{name}: unknown key")
            continue
        if not isinstance(axis, list) or not axis:
            problems.append(f"sweep.{name}: must be a non-empty list")
            continue
        coerced = []
        for v in axis:
            c, err = _coerce(key, v)
            if err is None and key.check is not None:
                err = key.check(c)
            if err:
                problems.append(f"sweep.{name}: {err}")
                break
            coerced.append(c)
        else:
            sweep[key.dotted] = coerced

    if not problems:
        for point in ParsedConfig(values, prov, sweep).expand():
            _check_cross(point.values, problems)
            if problems:
                if point.label:
                    problems[-1] = f"[{point.label}] {problems[-1]}"
                break
    if problems:
        raise ConfigError(problems)
    return ParsedConfig(values, prov, sweep)


def load_config(path, env: Optional[Mapping[str, str]] = None) -> ParsedConfig:
    """Read a .toml or .json file. OSError propagates to the caller."""
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    fmt = "json" if path.endswith(".json") else "toml" if path.endswith(".toml") else None
    return parse_config(text, fmt, env)
