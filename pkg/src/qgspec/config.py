"""Scenario files (YAML) with line-anchored validation errors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .conditions import ConditionError, Delta, DeltaPrime, Dirichlet, VertexConditionSet
from .graph import BUILTINS, GraphError, GraphPoint, MetricGraph, builtin_graph
from .potential import (
    Constant,
    EdgePotential,
    PiecewiseConstant,
    Potential,
    PotentialError,
    Sampled,
    Zero,
)

EXPERIMENTS = ("spectrum", "compare", "weyl", "heat", "hadamard", "isospectral", "divergence", "bipartite")

CONDITION_SHORTHANDS = {
    "kirchhoff": "delta with sigma = 0",
    "anti_kirchhoff": "delta' with beta = 0",
    "dirichlet": "f(v) = 0 on every incident edge",
    "delta:<sigma>": "continuity and sum of inward derivatives = sigma f(v)",
    "delta_prime:<beta>": "continuous inward derivative and sum of values = beta times it",
}

POTENTIAL_SHORTHANDS = {
    "<number>": "constant potential on every edge",
    "{type: piecewise, breakpoints: [...], values: [...]}": "piecewise constant on one edge",
    "{type: sampled, values: [...], order: 0|1}": "uniform samples, cellwise or linear",
    "{type: random, pieces: n, amplitude: a}": "seeded random piecewise constant",
    "{default: <edge potential>, edges: {id: <edge potential>}}": "per-edge overrides",
}

# documented defaults per experiment
DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {"n_max": 20},
    "compare": {"n_max": 500, "limit_rtol": 0.10, "raw_rtol": 0.15, "potential_variant": False},
    "weyl": {"n_max": 500, "rtol": 0.05},
    "heat": {"t": [1e-3], "rtol": 0.05},
    "hadamard": {"indices": [1], "nodes": 64, "rule": "gauss", "rtol": 1e-3, "potential_variant": False},
    "isospectral": {"pair": "interval_delta_deltaprime", "n_max": 50, "length": 1.0, "beta": 1.0, "tol": 1e-8},
    "divergence": {"n_grid": [250, 500, 1000, 2000], "beta_prime": 1.0, "mirrored": False,
                   "gammas": [1.0, 0.5, 0.25], "potential_variant": False},
    "bipartite": {"n_grid": [250, 1000], "sigma": 0.0, "beta": 1.0},
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _Doc:
    """Plain data from a YAML node tree plus a map from key paths to line numbers."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple, int] = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                              mark.line + 1 if mark else None, source) from None
        if node is None:
            raise ConfigError("empty config", 1, source)
        self.data = self._convert(node, ())

    def _convert(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                if not isinstance(k, yaml.ScalarNode):
                    raise ConfigError("mapping keys must be scalars", k.start_mark.line + 1, self.source)
                key = _scalar(k)
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1, self.source)
                out[key] = self._convert(v, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, path + (i,)) for i, v in enumerate(node.value)]
        return _scalar(node)

    def line(self, path) -> int | None:
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def error(self, path, message) -> ConfigError:
        return ConfigError(message, self.line(path), self.source)


def _scalar(node):
    """Resolve a scalar node with the safe loader's implicit typing."""
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


@dataclass
class Scenario:
    experiment: str
    graph: MetricGraph
    conditions_a: VertexConditionSet | None
    conditions_b: VertexConditionSet | None
    potential: Potential
    knobs: dict[str, Any] = field(default_factory=dict)
    target: int | GraphPoint | None = None
    source: str = "<config>"
    raw: dict = field(default_factory=dict)

    def knob(self, name):
        return self.knobs[name]


# -- graph --------------------------------------------------------------------

def _graph(doc: _Doc, spec, path, base: Path) -> MetricGraph:
    if not isinstance(spec, dict):
        raise doc.error(path, "graph must be a mapping with 'builtin' or 'file'")
    try:
        if "builtin" in spec:
            name = spec["builtin"]
            if name not in BUILTINS:
                raise doc.error(path + ("builtin",), f"unknown builtin graph {name!r}; known: {sorted(BUILTINS)}")
            params = spec.get("params", {}) or {}
            if not isinstance(params, dict):
                raise doc.error(path + ("params",), "params must be a mapping")
            return builtin_graph(name, **params)
        if "file" in spec:
            p = Path(spec["file"])
            if not p.is_absolute():
                p = base / p
            try:
                text = p.read_text()
            except OSError as exc:
                raise doc.error(path + ("file",), f"cannot read graph file: {exc}") from None
            return load_graph_text(text, str(p))
        if "edges" in spec:
            return _graph_from_mapping(doc, spec, path)
    except TypeError as exc:
        raise doc.error(path, f"bad graph parameters: {exc}") from None
    except GraphError as exc:
        raise doc.error(path, str(exc)) from None
    raise doc.error(path, "graph needs 'builtin', 'file' or an inline 'edges' list")


def _graph_from_mapping(doc: _Doc, spec, path) -> MetricGraph:
    edges = spec.get("edges")
    if not isinstance(edges, list) or not edges:
        raise doc.error(path + ("edges",), "edges must be a nonempty list of [tail, head, length]")
    triples = []
    for i, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 3):
            raise doc.error(path + ("edges", i), "each edge is [tail, head, length]")
        try:
            triples.append((int(e[0]), int(e[1]), float(e[2])))
        except (TypeError, ValueError):
            raise doc.error(path + ("edges", i), "edge entries must be numbers") from None
    try:
        return MetricGraph.from_edges(triples, spec.get("vertices"), name=str(spec.get("name", "graph")))
    except GraphError as exc:
        raise doc.error(path, str(exc)) from None


def load_graph_text(text: str, source: str = "<graph>") -> MetricGraph:
    """Graph file: ``{vertices: n, edges: [[tail, head, length], ...], name: ...}``."""
    doc = _Doc(text, source)
    if not isinstance(doc.data, dict):
        raise doc.error((), "graph file must be a mapping")
    return _graph_from_mapping(doc, doc.data, ())


# -- conditions -----------------------------------------------------------------

def _condition(doc: _Doc, spec, path):
    if isinstance(spec, str):
        s = spec.strip()
        if s == "kirchhoff":
            return Delta(0.0)
        if s == "anti_kirchhoff":
            return DeltaPrime(0.0)
        if s == "dirichlet":
            return Dirichlet()
        if ":" in s:
            kind, _, val = s.partition(":")
            try:
                x = float(val)
            except ValueError:
                raise doc.error(path, f"bad strength in {spec!r}") from None
            if kind.strip() == "delta":
                return Delta(x)
            if kind.strip() == "delta_prime":
                return DeltaPrime(x)
        raise doc.error(path, f"unknown condition {spec!r}; use one of {list(CONDITION_SHORTHANDS)}")
    if isinstance(spec, dict) and "type" in spec:
        kind = spec["type"]
        field_name = {"delta": "sigma", "delta_prime": "beta"}.get(kind)
        if field_name is not None:
            try:
                x = float(spec.get(field_name, 0.0))
                return Delta(x) if kind == "delta" else DeltaPrime(x)
            except (TypeError, ValueError, ConditionError) as exc:
                raise doc.error(path + (field_name,), f"{field_name}: {exc}") from None
        if kind in ("kirchhoff", "anti_kirchhoff", "dirichlet"):
            return _condition(doc, kind, path)
        raise doc.error(path + ("type",), f"unknown condition type {kind!r}")
    raise doc.error(path, "condition must be a shorthand string or a mapping with 'type'")


def _conditions(doc: _Doc, spec, path, g: MetricGraph) -> VertexConditionSet:
    if isinstance(spec, dict) and ("default" in spec or "vertices" in spec):
        default = _condition(doc, spec["default"], path + ("default",)) if "default" in spec else None
        per = {}
        for v, c in (spec.get("vertices") or {}).items():
            if not isinstance(v, int) or not 0 <= v < g.n_vertices:
                raise doc.error(path + ("vertices", v), f"unknown vertex {v!r}")
            per[v] = _condition(doc, c, path + ("vertices", v))
        try:
            return VertexConditionSet.from_mapping(g, per, default)
        except ConditionError as exc:
            raise doc.error(path, str(exc)) from None
    return VertexConditionSet.uniform(g, _condition(doc, spec, path))


# -- potential ------------------------------------------------------------------

def _edge_potential(doc: _Doc, spec, path, rng: np.random.Generator) -> EdgePotential:
    try:
        if spec is None:
            return Zero()
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return Zero() if spec == 0 else Constant(float(spec))
        if isinstance(spec, dict):
            kind = spec.get("type")
            if kind == "zero":
                return Zero()
            if kind == "constant":
                return Constant(float(spec["value"]))
            if kind == "piecewise":
                return PiecewiseConstant(tuple(spec["breakpoints"]), tuple(spec["values"]))
            if kind == "sampled":
                return Sampled(tuple(spec["values"]), int(spec.get("order", 1)))
            if kind == "random":
                n = int(spec.get("pieces", 8))
                amp = float(spec.get("amplitude", 1.0))
                if n < 1 or not math.isfinite(amp):
                    raise PotentialError("random potential needs pieces >= 1 and finite amplitude")
                return Sampled(tuple(amp * rng.uniform(-1.0, 1.0, n)), 0)
            raise doc.error(path + ("type",), f"unknown potential type {kind!r}")
    except KeyError as exc:
        raise doc.error(path, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError, PotentialError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise doc.error(path, str(exc)) from None
    raise doc.error(path, "potential must be a number or a mapping with 'type'")


def _potential(doc: _Doc, spec, path, g: MetricGraph, seed: int) -> Potential:
    rng = np.random.default_rng(seed)
    if isinstance(spec, dict) and ("default" in spec or "edges" in spec):
        default = _edge_potential(doc, spec.get("default"), path + ("default",), rng)
        per = {}
        for e, p in (spec.get("edges") or {}).items():
            if not isinstance(e, int) or not 0 <= e < g.n_edges:
                raise doc.error(path + ("edges", e), f"unknown edge {e!r}")
            per[e] = _edge_potential(doc, p, path + ("edges", e), rng)
        q = Potential(default, per)
    else:
        q = Potential(_edge_potential(doc, spec, path, rng))
    try:
        q.validate(g)
    except PotentialError as exc:
        raise doc.error(path, str(exc)) from None
    return q


# -- scenario -------------------------------------------------------------------

def _target(doc: _Doc, spec, path, g: MetricGraph):
    if isinstance(spec, dict) and "vertex" in spec:
        v = spec["vertex"]
        if not isinstance(v, int) or not 0 <= v < g.n_vertices:
            raise doc.error(path + ("vertex",), f"unknown vertex {v!r}")
        return v
    if isinstance(spec, dict) and "edge" in spec:
        try:
            p = GraphPoint(int(spec["edge"]), float(spec.get("x", 0.0)))
            g.check_point(p)
        except (GraphError, TypeError, ValueError) as exc:
            raise doc.error(path, str(exc)) from None
        return p
    raise doc.error(path, "target must be {vertex: v} or {edge: e, x: position}")


def _check_knobs(doc: _Doc, exp: str, raw: dict, path) -> dict:
    knobs = dict(DEFAULTS[exp])
    for k, v in (raw or {}).items():
        if k not in knobs and k not in ("window", "cutoff", "n_max"):
            raise doc.error(path + (k,), f"unknown knob {k!r} for experiment {exp!r}; known: {sorted(knobs)}")
        default = knobs.get(k)
        if isinstance(default, bool) and not isinstance(v, bool):
            raise doc.error(path + (k,), f"{k} must be true or false")
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise doc.error(path + (k,), f"{k} must be a number")
        if isinstance(default, list) and not isinstance(v, list):
            v = [v]
        knobs[k] = v
    if "n_max" in knobs and (not isinstance(knobs["n_max"], int) or knobs["n_max"] < 1):
        raise doc.error(path + ("n_max",), "n_max must be a positive integer")
    return knobs


def parse_scenario(text: str, source: str = "<config>", base: Path | None = None, seed: int = 0) -> Scenario:
    doc = _Doc(text, source)
    d = doc.data
    if not isinstance(d, dict):
        raise doc.error((), "config must be a mapping")
    allowed = {"experiment", "graph", "conditions", "conditions_a", "conditions_b", "potential", "knobs",
               "target", "seed", "name"}
    for k in d:
        if k not in allowed:
            raise doc.error((k,), f"unknown top-level key {k!r}; allowed: {sorted(allowed)}")
    exp = d.get("experiment")
    if exp not in EXPERIMENTS:
        raise doc.error(("experiment",), f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")
    base = base or Path(".")
    if exp == "isospectral" and "graph" not in d:
        g = None
    else:
        if "graph" not in d:
            raise doc.error((), "missing 'graph'")
        g = _graph(doc, d["graph"], ("graph",), base)
    if "conditions" in d and "conditions_a" in d:
        raise doc.error(("conditions",), "give either 'conditions' or 'conditions_a'")
    ca_key = "conditions_a" if "conditions_a" in d else "conditions"
    ca = _conditions(doc, d[ca_key], (ca_key,), g) if ca_key in d and g is not None else None
    cb = _conditions(doc, d["conditions_b"], ("conditions_b",), g) if "conditions_b" in d and g is not None else None
    cfg_seed = d.get("seed", seed)
    if not isinstance(cfg_seed, int):
        raise doc.error(("seed",), "seed must be an integer")
    q = _potential(doc, d.get("potential"), ("potential",), g, cfg_seed) if g is not None else Potential()
    knobs = _check_knobs(doc, exp, d.get("knobs"), ("knobs",))
    target = _target(doc, d["target"], ("target",), g) if "target" in d else None
    sc = Scenario(exp, g, ca, cb, q, knobs, target, source, d)
    _validate(doc, sc)
    return sc


def _validate(doc: _Doc, sc: Scenario):
    exp = sc.experiment
    need_a = exp in ("spectrum", "compare", "weyl", "heat", "hadamard")
    if need_a and sc.conditions_a is None:
        raise doc.error((), f"experiment {exp!r} needs 'conditions' (or 'conditions_a')")
    if exp in ("compare", "hadamard") and sc.conditions_b is None:
        raise doc.error((), f"experiment {exp!r} needs 'conditions_b'")
    if exp in ("weyl", "heat") and sc.target is None:
        raise doc.error((), f"experiment {exp!r} needs a 'target'")
    if exp == "hadamard":
        for key, c in (("conditions_a", sc.conditions_a), ("conditions_b", sc.conditions_b)):
            if not all(isinstance(x, DeltaPrime) and x.beta > 0 for x in c.conditions):
                raise doc.error((key,), "hadamard needs delta' conditions with positive strengths")
    if exp in ("divergence", "bipartite") and sc.graph is None:
        raise doc.error((), "missing 'graph'")
    if "window" in sc.knobs:
        w = sc.knobs["window"]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, (int, float)) for x in w) and w[1] > w[0]):
            raise doc.error(("knobs", "window"), "window must be [lo, hi] with hi > lo")


def load_scenario(path: str | Path, seed: int = 0) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, str(p)) from None
    return parse_scenario(text, str(p), p.parent, seed)
