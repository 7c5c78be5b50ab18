"""Run configuration: an INI file with a fixed key schema.

Each section lists its allowed keys; anything else is a schema error.
Parsed values are plain Python (int, float, str, tuples of those), and
``dumps`` writes them back so that ``loads(dumps(loads(text)))`` equals
``loads(text)``.

Example::

    [run]
    id = quadratic_oracle
    seed = 1
    stages = experiment

    [experiment]
    name = gaussian_oracle
"""

from __future__ import annotations

import ast
import configparser
import inspect
import math
import re

from . import experiments

STAGES = ("sample", "vortices", "fluct", "contour", "couple", "walk", "experiment")
SAMPLE_MODELS = ("xy", "grad", "graddelta", "xyfield")
WALK_POTENTIALS = ("quadratic", "truncated", "anharmonic")


class ConfigError(ValueError):
    pass


def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"{s!r} is not finite")
    return v


def _floats(s):
    return tuple(_float(x) for x in re.split(r"[,\s]+", s.strip()) if x)


def _ints(s):
    return tuple(int(x) for x in re.split(r"[,\s]+", s.strip()) if x)


def _words(s):
    return tuple(x for x in re.split(r"[,\s]+", s.strip()) if x)


def _word(s):
    s = s.strip()
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", s):
        raise ValueError(f"{s!r} must be a single word of letters, digits, '_', '.', '-'")
    return s


def _edges(s):
    return "all" if s.strip() == "all" else _ints(s)


SCHEMA = {
    "run": {"id": _word, "seed": _int, "stages": _words},
    "model": {"model": _word, "d": _int, "eps": _float, "beta": _float, "schedule": _floats,
              "delta": _float, "lambda": _float, "h": _float, "box": _floats},
    "sampling": {"chains": _int, "burnin": _int, "samples": _int, "thin": _int,
                 "reflect": _int},
    "fluct": {"phi": _words, "tgrid": _floats},
    "contour": {"a": _floats, "edges": _edges},
    "couple": {"draws": _int},
    "walk": {"potential": _word, "d": _int, "eps": _float, "beta": _float, "delta": _float,
             "lambda": _float, "tgrid": _floats, "envs": _int, "walkers": _int, "dt": _float,
             "tolerance": _float},
    "experiment": {"name": _word},
}

DEFAULTS = {
    "model": {"d": 2, "box": (0.0, 1.0), "h": 0.0, "lambda": 0.0},
    "sampling": {"chains": 4, "burnin": 500, "samples": 2000, "thin": 2, "reflect": 1},
    "fluct": {"phi": ("bump", "sine")},
    "contour": {"a": (0.3, 0.5, 0.8), "edges": "all"},
    "couple": {"draws": 1000},
    "walk": {"potential": "quadratic", "d": 2, "beta": 1.0, "lambda": 0.1,
             "tgrid": (0.25, 0.5, 1.0), "envs": 8, "walkers": 200, "dt": 0.01},
}

NEEDS = {"sample": ("model", "sampling"), "vortices": ("sample",), "fluct": ("sample",),
         "contour": ("sample",), "couple": ("model",), "walk": ("walk",),
         "experiment": ("experiment",)}


def _experiment_value(s):
    try:
        return ast.literal_eval(s)
    except (ValueError, SyntaxError):
        return s.strip()


def _check_delta(section, value):
    if not 0 < value < math.pi / 2:
        raise ConfigError(f"[{section}] delta = {value!r}: must lie in (0, pi/2)")


def validate(cfg: dict) -> dict:
    """Cross-key checks on a parsed config; returns it unchanged."""
    run = cfg.get("run")
    if not run or "id" not in run or "stages" not in run:
        raise ConfigError("[run] needs id and stages")
    for st in run["stages"]:
        if st not in STAGES:
            raise ConfigError(f"unknown stage {st!r}; choose from {STAGES}")
    stages = set(run["stages"])
    for st in stages:
        for need in NEEDS[st]:
            if need in STAGES and need not in stages:
                raise ConfigError(f"stage {st!r} needs stage {need!r}")
            if need not in STAGES and need not in cfg:
                raise ConfigError(f"stage {st!r} needs a [{need}] section")
    m = cfg.get("model")
    if m is not None:
        if m.get("model") not in SAMPLE_MODELS:
            raise ConfigError(f"[model] model must be one of {SAMPLE_MODELS}")
        if "eps" not in m or not 0 < m["eps"] < 1:
            raise ConfigError("[model] eps must lie in (0, 1)")
        if ("beta" in m) == ("schedule" in m):
            raise ConfigError("[model] give exactly one of beta and schedule (A, C)")
        if "schedule" in m and len(m["schedule"]) != 2:
            raise ConfigError("[model] schedule takes two numbers: A, C")
        if "beta" in m and m["beta"] <= 0:
            raise ConfigError("[model] beta must be positive")
        if m["model"] == "graddelta" and "delta" not in m:
            raise ConfigError("[model] graddelta needs delta")
        if "delta" in m:
            _check_delta("model", m["delta"])
        if len(m["box"]) != 2 or m["box"][0] >= m["box"][1]:
            raise ConfigError("[model] box takes lo, hi with lo < hi")
        if "couple" in stages and m["model"] != "graddelta":
            raise ConfigError("couple stage needs model = graddelta")
    w = cfg.get("walk")
    if w is not None:
        if w["potential"] not in WALK_POTENTIALS:
            raise ConfigError(f"[walk] potential must be one of {WALK_POTENTIALS}")
        if "eps" not in w:
            raise ConfigError("[walk] needs eps")
        if "delta" in w:
            _check_delta("walk", w["delta"])
    e = cfg.get("experiment")
    if e is not None:
        name = e.get("name")
        if name not in experiments.EXPERIMENTS:
            raise ConfigError(f"[experiment] name must be one of {sorted(experiments.EXPERIMENTS)}")
        params = inspect.signature(experiments.EXPERIMENTS[name]).parameters
        for k in e:
            if k != "name" and (k not in params or k == "seed"):
                raise ConfigError(f"[experiment] {name} takes no parameter {k!r}")
    return cfg


def loads(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        out = dict(DEFAULTS.get(sec, {}))
        for key, raw in cp.items(sec):
            if sec == "experiment" and key != "name":
                out[key] = _experiment_value(raw)
                continue
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            try:
                out[key] = SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from exc
        cfg[sec] = out
    cfg.setdefault("run", {}).setdefault("seed", 0)
    return validate(cfg)


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return repr(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def dumps(cfg: dict) -> str:
    lines = []
    for sec, body in cfg.items():
        lines.append(f"[{sec}]")
        for k in sorted(body):
            v = body[k]
            lines.append(f"{k} = {repr(v) if sec == 'experiment' and k != 'name' else _fmt(v)}")
        lines.append("")
    return "\n".join(lines)
