"""TOML run configuration: parsing, validation, canonical form and hashing.

Schema (all sections optional except ``params``, ``domain``, ``coefficients``
and ``initial``)::

    [params]        chi, tau, lambda, mu
    [domain]        lengths = [L1(, L2)], cells = [N1(, N2)]
    [coefficients.a0|a1|a2]
        kind = "constant"   value
        kind = "trigsum"    offset, terms = [{amplitude, time, omega, phase, space = [[fn, k], ...]}]
        kind = "separable"  time = "<expr in t>", space = "<expr in x, y>"
        kind = "tabulated"  times, axes, values   (or file = "table.npz")
    [initial]
        kind = "uniform"    u, v
        kind = "cosine"     base, amplitude, mode, v_base, v_amplitude
        kind = "random"     seed, min, max, v_min, v_max, modes
    [time]          start, end, dt_max, cfl_safety, scheme ("imex" | "explicit"),
                    record_every, blowup_threshold
    [persistence]   eta_floor, settle_fraction, window
    [check]         hypothesis ("h1" | "h2"), c_gamma_table = [[q, C], ...]

Numbers may be written as constant expressions such as ``"2*pi"``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import (
    CheckSettings,
    Constant,
    CosinePerturbed,
    GridDomain,
    ModelParams,
    PersistenceSettings,
    RandomSmooth,
    RunConfig,
    Scheme,
    Separable,
    Tabulated,
    TrigSum,
    TrigTerm,
    Uniform,
)
from .errors import ConfigError, InvalidSpec
from .expr import number

_SECTIONS = {"params", "domain", "coefficients", "initial", "time", "persistence", "check"}
_TIME_KEYS = {"start", "end", "dt_max", "cfl_safety", "scheme", "record_every", "blowup_threshold"}


def _no_extra(d: dict, allowed, where: str) -> None:
    extra = set(d) - set(allowed)
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"unknown key {key!r}", field=f"{where}.{key}" if where else key)


def _num(d: dict, key: str, where: str, default=None):
    if key not in d:
        if default is None:
            raise ConfigError("missing required value", field=f"{where}.{key}")
        return default
    try:
        return number(d[key])
    except InvalidSpec as exc:
        raise ConfigError(str(exc), field=f"{where}.{key}") from None


def _parse_coefficient(d: dict, name: str, base_dir: Path | None):
    where = f"coefficients.{name}"
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("coefficient needs a 'kind'", field=where)
    kind = d["kind"]
    try:
        if kind == "constant":
            _no_extra(d, {"kind", "value"}, where)
            return Constant(_num(d, "value", where), label=name)
        if kind == "trigsum":
            _no_extra(d, {"kind", "offset", "terms"}, where)
            terms = []
            for i, t in enumerate(d.get("terms", [])):
                tw = f"{where}.terms[{i}]"
                _no_extra(t, {"amplitude", "time", "omega", "phase", "space"}, tw)
                space = tuple((str(fn), number(k)) for fn, k in t.get("space", []))
                terms.append(
                    TrigTerm(
                        amplitude=_num(t, "amplitude", tw),
                        time=str(t.get("time", "none")),
                        omega=_num(t, "omega", tw, 0.0),
                        phase=_num(t, "phase", tw, 0.0),
                        space=space,
                    )
                )
            return TrigSum(offset=_num(d, "offset", where, 0.0), terms=tuple(terms), label=name)
        if kind == "separable":
            _no_extra(d, {"kind", "time", "space"}, where)
            return Separable(time=str(d.get("time", "1")), space=str(d.get("space", "1")), label=name)
        if kind == "tabulated":
            _no_extra(d, {"kind", "times", "axes", "values", "file"}, where)
            if "file" in d:
                path = Path(d["file"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                with np.load(path) as data:
                    axes = tuple(data[k] for k in sorted(data.files) if k.startswith("axis"))
                    return Tabulated(data["times"], axes, data["values"], label=name)
            return Tabulated(
                np.asarray(d["times"], dtype=float),
                tuple(np.asarray(a, dtype=float) for a in d["axes"]),
                np.asarray(d["values"], dtype=float),
                label=name,
            )
    except ConfigError:
        raise
    except (InvalidSpec, KeyError, ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"invalid {kind} coefficient: {exc}", field=where) from None
    raise ConfigError(f"unknown coefficient kind {kind!r}", field=f"{where}.kind")


def _parse_initial(d: dict):
    where = "initial"
    kind = d.get("kind")
    try:
        if kind == "uniform":
            _no_extra(d, {"kind", "u", "v"}, where)
            return Uniform(_num(d, "u", where, 1.0), _num(d, "v", where, 1.0))
        if kind == "cosine":
            _no_extra(d, {"kind", "base", "amplitude", "mode", "v_base", "v_amplitude"}, where)
            return CosinePerturbed(
                base=_num(d, "base", where, 1.0),
                amplitude=_num(d, "amplitude", where, 0.5),
                mode=int(d.get("mode", 1)),
                v_base=_num(d, "v_base", where, 1.0),
                v_amplitude=_num(d, "v_amplitude", where, 0.0),
            )
        if kind == "random":
            _no_extra(d, {"kind", "seed", "min", "max", "v_min", "v_max", "modes"}, where)
            return RandomSmooth(
                seed=int(d.get("seed", 0)),
                min=_num(d, "min", where, 0.1),
                max=_num(d, "max", where, 2.0),
                v_min=_num(d, "v_min", where, 0.0),
                v_max=_num(d, "v_max", where, 1.0),
                modes=int(d.get("modes", 4)),
            )
    except InvalidSpec as exc:
        raise ConfigError(str(exc), field=where) from None
    raise ConfigError(f"unknown initial data kind {kind!r}", field="initial.kind")


def config_from_dict(d: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a table")
    _no_extra(d, _SECTIONS, "")
    for section in ("params", "domain", "coefficients", "initial"):
        if section not in d:
            raise ConfigError("missing section", field=section)

    dom = d["domain"]
    _no_extra(dom, {"lengths", "cells"}, "domain")
    try:
        lengths = tuple(number(v) for v in dom["lengths"])
        cells = tuple(int(v) for v in dom["cells"])
    except (KeyError, TypeError, ValueError, InvalidSpec) as exc:
        raise ConfigError(f"domain needs 'lengths' and 'cells' lists ({exc})", field="domain") from None
    domain = GridDomain(lengths, cells)

    p = d["params"]
    _no_extra(p, {"chi", "tau", "lambda", "mu", "dimension"}, "params")
    params = ModelParams(
        chi=_num(p, "chi", "params"),
        tau=_num(p, "tau", "params", 1.0),
        lambda_=_num(p, "lambda", "params", 1.0),
        mu=_num(p, "mu", "params", 1.0),
        dimension=int(p.get("dimension", domain.dimension)),
    )

    c = d["coefficients"]
    _no_extra(c, {"a0", "a1", "a2"}, "coefficients")
    coeffs = []
    for name in ("a0", "a1", "a2"):
        if name not in c:
            raise ConfigError("missing coefficient", field=f"coefficients.{name}")
        coeffs.append(_parse_coefficient(c[name], name, base_dir))

    initial = _parse_initial(d["initial"])

    tm = d.get("time", {})
    _no_extra(tm, _TIME_KEYS, "time")
    try:
        scheme = Scheme(tm.get("scheme", "imex"))
    except ValueError:
        raise ConfigError("scheme must be 'imex' or 'explicit'", field="time.scheme") from None

    ps = d.get("persistence", {})
    _no_extra(ps, {"eta_floor", "settle_fraction", "window"}, "persistence")
    persistence = PersistenceSettings(
        eta_floor=_num(ps, "eta_floor", "persistence", 1e-6),
        settle_fraction=_num(ps, "settle_fraction", "persistence", 0.5),
        window=_num(ps, "window", "persistence") if "window" in ps else None,
    )

    ck = d.get("check", {})
    _no_extra(ck, {"hypothesis", "c_gamma_table"}, "check")
    try:
        table = tuple((number(q), number(cq)) for q, cq in ck.get("c_gamma_table", []))
    except (TypeError, ValueError, InvalidSpec):
        raise ConfigError("c_gamma_table must be a list of [q, C] pairs", field="check.c_gamma_table") from None
    check = CheckSettings(hypothesis=str(ck.get("hypothesis", "h2")).lower(), c_gamma_table=table)

    return RunConfig(
        params=params,
        coeffs=tuple(coeffs),
        domain=domain,
        initial=initial,
        t_start=_num(tm, "start", "time", 0.0),
        t_end=_num(tm, "end", "time", 1.0),
        dt_max=_num(tm, "dt_max", "time", 0.01),
        cfl_safety=_num(tm, "cfl_safety", "time", 0.9),
        scheme=scheme,
        record_every=_num(tm, "record_every", "time", 0.1),
        blowup_threshold=_num(tm, "blowup_threshold", "time", 1e6),
        persistence=persistence,
        check=check,
    )


def _coeff_to_dict(c) -> dict:
    if isinstance(c, Constant):
        return {"kind": "constant", "value": float(c.value)}
    if isinstance(c, TrigSum):
        return {
            "kind": "trigsum",
            "offset": float(c.offset),
            "terms": [
                {
                    "amplitude": float(t.amplitude),
                    "time": t.time,
                    "omega": float(t.omega),
                    "phase": float(t.phase),
                    "space": [[fn, float(k)] for fn, k in t.space],
                }
                for t in c.terms
            ],
        }
    if isinstance(c, Separable):
        return {"kind": "separable", "time": c.time.source, "space": c.space.source}
    if isinstance(c, Tabulated):
        return {
            "kind": "tabulated",
            "times": c.times.tolist(),
            "axes": [a.tolist() for a in c.axes],
            "values": c.values.tolist(),
        }
    raise TypeError(f"cannot serialize coefficient {c!r}")


def _initial_to_dict(s) -> dict:
    if isinstance(s, Uniform):
        return {"kind": "uniform", "u": float(s.u), "v": float(s.v)}
    if isinstance(s, CosinePerturbed):
        return {
            "kind": "cosine",
            "base": float(s.base),
            "amplitude": float(s.amplitude),
            "mode": int(s.mode),
            "v_base": float(s.v_base),
            "v_amplitude": float(s.v_amplitude),
        }
    if isinstance(s, RandomSmooth):
        return {
            "kind": "random",
            "seed": int(s.seed),
            "min": float(s.min),
            "max": float(s.max),
            "v_min": float(s.v_min),
            "v_max": float(s.v_max),
            "modes": int(s.modes),
        }
    raise TypeError(f"cannot serialize initial data {s!r}")


def config_to_dict(config: RunConfig) -> dict:
    """Canonical, fully explicit dictionary form (round-trips through ``config_from_dict``)."""
    persistence = {
        "eta_floor": config.persistence.eta_floor,
        "settle_fraction": config.persistence.settle_fraction,
    }
    if config.persistence.window is not None:
        persistence["window"] = config.persistence.window
    return {
        "params": {
            "chi": float(config.params.chi),
            "tau": float(config.params.tau),
            "lambda": float(config.params.lambda_),
            "mu": float(config.params.mu),
        },
        "domain": {"lengths": list(config.domain.lengths), "cells": list(config.domain.cells)},
        "coefficients": {name: _coeff_to_dict(c) for name, c in zip(("a0", "a1", "a2"), config.coeffs)},
        "initial": _initial_to_dict(config.initial),
        "time": {
            "start": float(config.t_start),
            "end": float(config.t_end),
            "dt_max": float(config.dt_max),
            "cfl_safety": float(config.cfl_safety),
            "scheme": config.scheme.value,
            "record_every": float(config.record_every),
            "blowup_threshold": float(config.blowup_threshold),
        },
        "persistence": persistence,
        "check": {
            "hypothesis": config.check.hypothesis,
            "c_gamma_table": [list(p) for p in config.check.c_gamma_table],
        },
    }


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _locate(text: str, field: str | None) -> int | None:
    """Best-effort 1-based line number of ``field`` (dotted path) in TOML source."""
    if not text or not field:
        return None
    parts = [re.sub(r"\[\d+\]$", "", p) for p in field.split(".")]
    lines = text.splitlines()
    header_re = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.\- ]+?)\s*\]\]?\s*(#.*)?$")
    for cut in range(len(parts) - 1, -1, -1):
        header = ".".join(parts[:cut])
        key_re = re.compile(rf"^\s*{re.escape(parts[cut])}\s*=")
        in_section = not header
        header_line = None
        for i, line in enumerate(lines):
            m = header_re.match(line)
            if m:
                in_section = m.group(1) == header
                if in_section and header_line is None:
                    header_line = i + 1
                continue
            if in_section and key_re.match(line):
                return i + 1
        if header_line is not None:
            return header_line
    return None


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", line=int(m.group(1)) if m else None) from None


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    raw = parse_toml(text)
    if overrides:
        raw = apply_overrides(raw, overrides)
    try:
        return config_from_dict(raw, base_dir=path.parent)
    except ConfigError as exc:
        if exc.line is None and exc.field:
            raise ConfigError(exc.message, field=exc.field, line=_locate(text, exc.field)) from None
        raise


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Return a copy of ``raw`` with dotted-path assignments applied."""
    out = copy.deepcopy(raw)
    for path, value in overrides.items():
        node = out
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside a non-table value", field=path)
        node[keys[-1]] = value
    return out
