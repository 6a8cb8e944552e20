"""Run configuration: JSON parsing, validation and serialization.

Structural checks (types, required and unknown keys, positivity) come from
the JSON schema shipped next to this module; cross-field checks (matrix
dimensions, band ordering, grid ordering, parameter names) are done here.
Every failure raises :class:`SchemaError` carrying a JSON pointer.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from .errors import SchemaError
from .hamiltonian import (
    ChannelSet, ClosedSystem, TwoLevelParams, build_energy_dependent,
    build_two_level, build_wideband,
)

__all__ = [
    "Tolerances", "Grid", "TwoLevelModel", "EffectiveModel", "TaskSpec",
    "OutputSpec", "RunConfig", "TASKS", "load_schema", "parse_config",
    "config_from_dict", "serialize_config",
]

TASKS = ("eig", "sweep", "ep_find", "rigidity_map", "cross_section", "trap", "encircle", "orth_scan")

TWO_LEVEL_KNOBS = ("e1", "e2", "gamma1", "gamma2", "omega_re", "omega_im")
_LEVEL_KNOB = re.compile(r"^level_(\d+)$")


@lru_cache(maxsize=1)
def load_schema():
    text = resources.files("eptrace").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class Tolerances:
    tol_eig: float = 1e-10
    tol_norm: float = 1e-8
    tol_sym: float = 1e-8
    tol_solve: float = 1e-10
    gap_min: float = 1e-8
    tol_defect: float = 1e-3
    tol_ep_gap: float = 1e-8
    tol_ep_rig: float = 1e-3
    fd_step: float = 1e-6
    overlap_min: float = 0.6
    tol_cluster: float = 1e-6
    tol_fix: float = 1e-12
    max_iter_fix: int = 200
    prominence: float = 0.05


@dataclass(frozen=True)
class Grid:
    """Either an explicit list of points or ``start/stop/num`` (linear or log)."""

    points: tuple | None = None
    start: float | None = None
    stop: float | None = None
    num: int | None = None
    scale: str = "linear"

    def values(self):
        if self.points is not None:
            return np.array(self.points, dtype=float)
        if self.scale == "log":
            return np.logspace(np.log10(self.start), np.log10(self.stop), self.num)
        return np.linspace(self.start, self.stop, self.num)

    def to_json(self):
        if self.points is not None:
            return list(self.points)
        return {"start": self.start, "stop": self.stop, "num": self.num, "scale": self.scale}


def _complex(x):
    if isinstance(x, list):
        return complex(float(x[0]), float(x[1]))
    return complex(float(x), 0.0)


def _cjson(z):
    return [z.real, z.imag]


@dataclass(frozen=True)
class TwoLevelModel:
    e1: float
    e2: float
    omega: complex
    gamma1: float = 0.0
    gamma2: float = 0.0

    kind = "two_level"

    @property
    def n(self):
        return 2

    @property
    def params(self):
        return TwoLevelParams(self.e1, self.gamma1, self.e2, self.gamma2, self.omega)

    def knobs(self):
        return TWO_LEVEL_KNOBS

    def with_knobs(self, values):
        kw = {}
        omega = self.omega
        for name, val in values.items():
            if name == "omega_re":
                omega = complex(val, omega.imag)
            elif name == "omega_im":
                omega = complex(omega.real, val)
            else:
                kw[name] = float(val)
        return replace(self, omega=omega, **kw)

    def matrix(self):
        return build_two_level(self.params).matrix

    def basis(self):
        return ClosedSystem.from_levels([self.e1, self.e2])

    def to_json(self):
        return {"two_level": {"e1": self.e1, "gamma1": self.gamma1, "e2": self.e2,
                              "gamma2": self.gamma2, "omega": _cjson(self.omega)}}


@dataclass(frozen=True)
class EffectiveModel:
    v: tuple
    coupling: str
    levels: tuple | None = None
    h0: tuple | None = None
    bands: tuple | None = None
    alpha: float = 0.0
    energy: float = 0.0

    kind = "effective"

    @property
    def n(self):
        return len(self.levels) if self.levels is not None else len(self.h0)

    @property
    def n_channels(self):
        return len(self.v[0])

    def closed(self):
        if self.levels is not None:
            return ClosedSystem.from_levels(self.levels)
        return ClosedSystem(np.array(self.h0, dtype=complex))

    def channels(self):
        return ChannelSet(np.array(self.v, dtype=complex), tuple(dict(b) for b in (self.bands or ())))

    basis = closed

    def knobs(self):
        main = "alpha" if self.coupling == "wideband" else "energy"
        return (main, "v_scale") + tuple(f"level_{k}" for k in range(self.n))

    def with_knobs(self, values):
        m = self
        for name, val in values.items():
            val = float(val)
            if name in ("alpha", "energy"):
                m = replace(m, **{name: val})
            elif name == "v_scale":
                m = replace(m, v=tuple(tuple(val * z for z in row) for row in m.v))
            else:
                k = int(_LEVEL_KNOB.match(name).group(1))
                if m.levels is not None:
                    lv = list(m.levels)
                    lv[k] = val
                    m = replace(m, levels=tuple(lv))
                else:
                    h = [list(r) for r in m.h0]
                    h[k][k] = complex(val)
                    m = replace(m, h0=tuple(tuple(r) for r in h))
        return m

    def matrix(self):
        if self.coupling == "wideband":
            return build_wideband(self.closed(), self.channels(), self.alpha).matrix
        return build_energy_dependent(self.closed(), self.channels(), self.energy).matrix

    def to_json(self):
        closed = ({"levels": list(self.levels)} if self.levels is not None
                  else {"h0": [[_cjson(z) for z in row] for row in self.h0]})
        channels = {"v": [[_cjson(z) for z in row] for row in self.v]}
        if self.bands is not None:
            channels["bands"] = [dict(b) for b in self.bands]
        coupling = ({"wideband": {"alpha": self.alpha}} if self.coupling == "wideband"
                    else {"energy_dependent": {"energy": self.energy}})
        return {"effective": {"closed": closed, "channels": channels, "coupling": coupling}}


@dataclass(frozen=True)
class TaskSpec:
    name: str
    params: tuple  # sorted (key, value) pairs, defaults filled

    def __getitem__(self, key):
        return dict(self.params)[key]

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    def to_json(self):
        out = {}
        for k, v in self.params:
            if v is None:
                continue
            out[k] = v.to_json() if isinstance(v, Grid) else (list(v) if isinstance(v, tuple) else v)
        return {self.name: out}


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    model: TwoLevelModel | EffectiveModel
    task: TaskSpec
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self):
        return {
            "model": self.model.to_json(),
            "task": self.task.to_json(),
            "tolerances": asdict(self.tolerances),
            "output": asdict(self.output),
        }


# ------------------------------------------------------------------ parsing

def _pointer(path):
    return "".join(f"/{p}" for p in path)


def _schema_check(doc):
    validator = jsonschema.Draft202012Validator(load_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is None:
        return
    path = list(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        if extra:
            raise SchemaError(f"unknown key {extra[0]!r}", _pointer(path + [extra[0]]))
    raise SchemaError(err.message, _pointer(path))


def _grid(raw, where):
    if isinstance(raw, list):
        g = Grid(points=tuple(float(x) for x in raw))
    else:
        g = Grid(start=float(raw["start"]), stop=float(raw["stop"]), num=int(raw["num"]),
                 scale=raw.get("scale", "linear"))
        if g.scale == "log" and (g.start <= 0 or g.stop <= 0):
            raise SchemaError("log grid needs positive start and stop", where)
    vals = g.values()
    if not np.all(np.isfinite(vals)) or np.any(np.diff(vals) <= 0):
        raise SchemaError("grid must be strictly increasing", where)
    return g


def _cmatrix(raw, where):
    rows = tuple(tuple(_complex(z) for z in row) for row in raw)
    if len({len(r) for r in rows}) != 1:
        raise SchemaError("matrix rows have different lengths", where)
    return rows


def _model(raw):
    if "two_level" in raw:
        t = raw["two_level"]
        return TwoLevelModel(e1=float(t["e1"]), e2=float(t["e2"]), omega=_complex(t["omega"]),
                             gamma1=float(t.get("gamma1", 0.0)), gamma2=float(t.get("gamma2", 0.0)))
    eff = raw["effective"]
    base = "/model/effective"
    closed = eff["closed"]
    levels = h0 = None
    if "levels" in closed:
        levels = tuple(float(x) for x in closed["levels"])
        n = len(levels)
    else:
        h0 = _cmatrix(closed["h0"], f"{base}/closed/h0")
        n = len(h0)
        if len(h0[0]) != n:
            raise SchemaError("h0 must be square", f"{base}/closed/h0")
        a = np.array(h0)
        if np.linalg.norm(a - a.conj().T) > 1e-12 * max(np.linalg.norm(a), 1.0):
            raise SchemaError("h0 must be Hermitian", f"{base}/closed/h0")
    ch = eff["channels"]
    v = _cmatrix(ch["v"], f"{base}/channels/v")
    if len(v) != n:
        raise SchemaError(f"v has {len(v)} rows but the closed system has {n} states",
                          f"{base}/channels/v")
    n_ch = len(v[0])
    bands = None
    if "bands" in ch:
        if len(ch["bands"]) != n_ch:
            raise SchemaError(f"{len(ch['bands'])} bands for {n_ch} channels", f"{base}/channels/bands")
        for k, b in enumerate(ch["bands"]):
            if not b["e_min"] < b["e_max"]:
                raise SchemaError("e_min must be below e_max", f"{base}/channels/bands/{k}/e_max")
        bands = tuple(tuple(sorted((key, float(val)) for key, val in b.items())) for b in ch["bands"])
    cp = eff["coupling"]
    if "wideband" in cp:
        return EffectiveModel(v=v, coupling="wideband", levels=levels, h0=h0, bands=bands,
                              alpha=float(cp["wideband"]["alpha"]))
    if bands is None:
        raise SchemaError("energy-dependent coupling needs channel bands", f"{base}/channels")
    return EffectiveModel(v=v, coupling="energy_dependent", levels=levels, h0=h0, bands=bands,
                          energy=float(cp["energy_dependent"].get("energy", 0.0)))


_GRID_KEYS = {"values", "xs", "ys", "energies", "alphas"}
_TASK_DEFAULTS = {
    "eig": {"poles": False},
    "ep_find": {"max_iter": 100, "pair": None},
    "cross_section": {"c": 0, "c_out": 0},
    "encircle": {"n_points": 400},
    "orth_scan": {"tol_orth": 1e-6},
}


def _task(raw, model):
    name = next(iter(raw))
    body = raw[name]
    base = f"/task/{name}"
    params = dict(_TASK_DEFAULTS.get(name, {}))
    for key, val in body.items():
        if key in _GRID_KEYS:
            params[key] = _grid(val, f"{base}/{key}")
        elif isinstance(val, list):
            params[key] = tuple(tuple(float(z) for z in x) if isinstance(x, list) else x for x in val)
        else:
            params[key] = val
    knobs = model.knobs()
    for key in ("parameter", "x", "y"):
        if key in params and params[key] not in knobs:
            raise SchemaError(f"unknown parameter {params[key]!r}; expected one of {list(knobs)}",
                              f"{base}/{key}")
    if "x" in params and params["x"] == params["y"]:
        raise SchemaError("x and y must be different parameters", f"{base}/y")
    if name in ("cross_section", "trap") and model.kind != "effective":
        raise SchemaError(f"task {name!r} needs an effective model", base)
    if name == "cross_section":
        for key in ("c", "c_out"):
            if params[key] >= model.n_channels:
                raise SchemaError(f"channel index out of range (C = {model.n_channels})", f"{base}/{key}")
    if name == "ep_find":
        for k, (lo, hi) in enumerate(params["domain"]):
            if not lo < hi:
                raise SchemaError("domain bounds must be increasing", f"{base}/domain/{k}")
        if params["pair"] is not None:
            pair = tuple(int(i) for i in params["pair"])
            if max(pair) >= model.n or pair[0] == pair[1]:
                raise SchemaError("pair must name two distinct states", f"{base}/pair")
            params["pair"] = pair
    if name == "eig" and params["poles"] and (model.kind != "effective" or model.coupling != "energy_dependent"):
        raise SchemaError("poles need an energy-dependent effective model", f"{base}/poles")
    return TaskSpec(name, tuple(sorted(params.items())))


def config_from_dict(doc):
    """Validate a decoded JSON document and build a :class:`RunConfig`."""
    _schema_check(doc)
    model = _model(doc["model"])
    task = _task(doc["task"], model)
    tol = Tolerances(**doc.get("tolerances", {}))
    out = OutputSpec(**doc.get("output", {}))
    return RunConfig(model, task, tol, out)


def parse_config(text):
    """Parse a JSON document into a validated :class:`RunConfig`.

    Raises
    ------
    SchemaError
        Malformed JSON, schema violations, unknown keys, or inconsistent
        values; ``pointer`` locates the offending key.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", "") from exc
    return config_from_dict(doc)


def serialize_config(cfg):
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2)


def tolerance_names():
    return [f.name for f in fields(Tolerances)]
