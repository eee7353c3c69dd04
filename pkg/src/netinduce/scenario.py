"""Scenario files and the method dispatcher behind the command line.

A scenario is a UTF-8 JSON document::

    {
      "version": 1,
      "name": "pigou",
      "edges": [{"tail": "s", "head": "t", "coefficients": [0, 1]}, ...],
      "commodities": [{"source": "s", "sink": "t", "demand": 1.0}],
      "params": {"U": 4, "r": 1, "Uprime": null, "eps": 1e-12, "delta": 0.01, "alpha": 0.5},
      "target": [[0.5, 0.5]],          # per commodity, or null
      "tolls": [0, 0],                 # optional, used by `solve`
      "seed": 0,                       # hidden-toll generator seed when target is null
      "method": "ellipsoid",
      "require_standard": true
    }

When ``target`` is null it is generated as the equilibrium under hidden grid
tolls drawn from ``seed``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Commodity, DirectedGraph, Flow, RoutingGame, validate_flow
from .ellipsoid import induce_tolls_approx, induce_tolls_linear
from .equilibrium import solve_epsilon_equilibrium
from .generators import make_rng, random_grid_tolls
from .latency import PolyLatency, StandardnessParams, check_standard
from .linear1c import induce_tolls_linear1c
from .oracle import StackelbergOracle, TollOracle
from .sepa import decompose_graph, default_uprime, induce_stackelberg_sepa, induce_tolls_sepa

SCHEMA_VERSION = 1
METHODS = ("ellipsoid", "ellipsoid-approx", "sepa", "linear1c", "stackelberg-sepa")
DEFAULT_PARAMS = {"U": 4.0, "r": 1, "Uprime": None, "eps": 1e-12, "delta": 1e-2, "alpha": 0.5}


class ScenarioError(ValueError):
    def __init__(self, message: str, problems=()):
        self.problems = list(problems)
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class IncompatibleMethod(ValueError):
    pass


@dataclass
class Scenario:
    game: RoutingGame
    params: dict
    target: Flow
    tolls: np.ndarray
    seed: int
    method: Optional[str] = None
    name: str = ""
    hidden_tolls: Optional[np.ndarray] = None
    require_standard: bool = True


def _field(obj, key, where, problems, kind=None, default=...):
    if key not in obj:
        if default is ...:
            problems.append(f"{where}.{key}: missing")
        return None if default is ... else default
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        problems.append(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
        return None
    return val


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be an object")
    problems: list[str] = []
    version = _field(doc, "version", "scenario", problems, int)
    if version is not None and version != SCHEMA_VERSION:
        problems.append(f"scenario.version: unsupported version {version} (expected {SCHEMA_VERSION})")
    edges_doc = _field(doc, "edges", "scenario", problems, list) or []
    coms_doc = _field(doc, "commodities", "scenario", problems, list) or []
    params = dict(DEFAULT_PARAMS)
    params.update(_field(doc, "params", "scenario", problems, dict, default={}) or {})
    edges, lats = [], []
    for j, e in enumerate(edges_doc):
        where = f"edges[{j}]"
        if not isinstance(e, dict):
            problems.append(f"{where}: expected object")
            continue
        tail = _field(e, "tail", where, problems)
        head = _field(e, "head", where, problems)
        coeffs = _field(e, "coefficients", where, problems, list)
        if tail is None or head is None or coeffs is None:
            continue
        if not coeffs or not all(isinstance(c, (int, float)) for c in coeffs):
            problems.append(f"{where}.coefficients: need a nonempty list of numbers")
            continue
        if any(c < 0 for c in coeffs):
            problems.append(f"{where}.coefficients: negative coefficient")
            continue
        edges.append((tail, head))
        lats.append(PolyLatency([float(c) for c in coeffs]))
    coms = []
    for j, c in enumerate(coms_doc):
        where = f"commodities[{j}]"
        if not isinstance(c, dict):
            problems.append(f"{where}: expected object")
            continue
        src = _field(c, "source", where, problems)
        snk = _field(c, "sink", where, problems)
        dem = _field(c, "demand", where, problems, (int, float))
        if src is None or snk is None or dem is None:
            continue
        if dem <= 0:
            problems.append(f"{where}.demand: must be positive, got {dem}")
            continue
        coms.append((src, snk, float(dem)))
    method = doc.get("method")
    if method is not None and method not in METHODS:
        problems.append(f"scenario.method: unknown method {method!r}; choose from {', '.join(METHODS)}")
    if problems:
        raise ScenarioError(f"{source}: invalid scenario", problems)
    if not edges:
        raise ScenarioError(f"{source}: invalid scenario", ["scenario.edges: empty"])
    if not coms:
        raise ScenarioError(f"{source}: invalid scenario", ["scenario.commodities: empty"])

    nodes = doc.get("nodes")
    try:
        graph = DirectedGraph(nodes, edges) if nodes else DirectedGraph.from_edges(edges)
        commodities = tuple(Commodity(s, t, d) for s, t, d in coms)
        game = RoutingGame(graph, commodities, tuple(lats))
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"{source}: invalid network: {exc}") from None

    require_standard = bool(doc.get("require_standard", True))
    U, r = float(params["U"]), int(params["r"])
    if require_standard:
        sp = StandardnessParams(U, r, game.total_demand)
        bad = [f"edges[{j}]: {p}" for j, l in enumerate(lats) for p in check_standard(l, sp)]
        if bad:
            raise ScenarioError(f"{source}: latencies are not standard", bad)

    seed = int(doc.get("seed", 0))
    tolls = np.asarray(doc.get("tolls") or np.zeros(game.m), float)
    if tolls.shape != (game.m,):
        raise ScenarioError(f"{source}: invalid scenario", [f"scenario.tolls: expected {game.m} entries"])
    hidden = None
    if doc.get("target") is None:
        hidden = random_grid_tolls(make_rng(seed), game.m, U)
        target = solve_epsilon_equilibrium(game, hidden, 1e-14).flow
    else:
        arr = np.asarray(doc["target"], float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.shape != (game.k, game.m):
            raise ScenarioError(f"{source}: invalid scenario", [f"scenario.target: expected shape ({game.k}, {game.m}), got {arr.shape}"])
        target = Flow(arr)
        report = validate_flow(game, target)
        if not report.feasible:
            raise ScenarioError(f"{source}: target flow is infeasible", report.violations)
    return Scenario(game, params, target, tolls, seed, method, doc.get("name", ""), hidden, require_standard)


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"{p}: no such file")
    return parse_scenario(p.read_text(encoding="utf-8"), str(p))


@dataclass
class MethodResult:
    method: str
    verdict: str
    tolls: Optional[np.ndarray] = None
    flow: Optional[Flow] = None          # Stackelberg flow for stackelberg-sepa
    queries: int = 0
    linf_error: float = float("nan")
    runtime_ms: float = 0.0
    trace_path: Optional[str] = None
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == "found"

    def summary(self) -> dict:
        out = {
            "method": self.method,
            "verdict": self.verdict,
            "queries": self.queries,
            "linf_error": None if np.isnan(self.linf_error) else self.linf_error,
            "runtime_ms": round(self.runtime_ms, 3),
        }
        if self.tolls is not None:
            out["tolls"] = [float(x) for x in self.tolls]
        if self.flow is not None:
            out["stackelberg_flow"] = [float(x) for x in self.flow.aggregate]
        if self.trace_path:
            out["trace"] = self.trace_path
        if self.notes:
            out["notes"] = self.notes
        return out


def _check_compatible(sc: Scenario, method: str):
    game = sc.game
    if method not in METHODS:
        raise IncompatibleMethod(f"unknown method {method!r}")
    if method in ("sepa", "stackelberg-sepa"):
        try:
            decompose_graph(game.graph)
        except ValueError as exc:
            raise IncompatibleMethod(f"{method} needs a series-parallel graph: {exc}") from None
    if method in ("linear1c", "stackelberg-sepa") and game.k != 1:
        raise IncompatibleMethod(f"{method} needs a single commodity")
    if method in ("ellipsoid", "sepa", "linear1c") and game.degree > 1:
        raise IncompatibleMethod(f"{method} needs affine latencies; use ellipsoid-approx")


def run_method(sc: Scenario, method: str, *, trace: Optional[str] = None) -> MethodResult:
    """Run one induction method on the scenario's hidden game and re-check the answer
    with one fresh, uncounted solve."""
    _check_compatible(sc, method)
    game, p = sc.game, sc.params
    U = float(p["U"])
    net = game.network
    t0 = time.perf_counter()
    notes = []
    if method == "stackelberg-sepa":
        oracle = StackelbergOracle(game, float(p["alpha"]))
        tree = decompose_graph(game.graph)
        res = induce_stackelberg_sepa(tree, sc.target, float(p["alpha"]), oracle)
        ms = 1000 * (time.perf_counter() - t0)
        err = float("nan")
        if res.found:
            h = oracle.verify(res.g) + res.g
            err = float(np.max(np.abs(h.aggregate - sc.target.aggregate)))
        if res.note:
            notes.append(res.note)
        out = MethodResult(method, "found" if res.found else "none", None, res.g, res.queries, err, ms, notes=notes)
    else:
        if method == "ellipsoid":
            oracle = TollOracle(game, eps=float(p["eps"]), U=U)
            res = induce_tolls_linear(net, sc.target, oracle, U)
            verdict, tolls, queries = res.verdict, res.tolls, res.queries
            notes += [res.note] if res.note else []
        elif method == "ellipsoid-approx":
            oracle = TollOracle(game, eps=float(p["eps"]), U=U)
            res = induce_tolls_approx(net, sc.target, oracle, U, int(p["r"]), float(p["delta"]))
            verdict, tolls, queries = res.verdict, res.tolls, res.queries
            notes += [res.note] if res.note else []
        elif method == "sepa":
            tree = decompose_graph(game.graph)
            oracle = TollOracle(game, eps=min(float(p["eps"]), 1e-14), U=U)
            Up = p.get("Uprime") or default_uprime(U, game.m, U, game.total_demand)
            res = induce_tolls_sepa(tree, sc.target, oracle, int(Up))
            verdict = "found" if res.found else "infeasible"
            tolls, queries = (res.float_tolls() if res.tolls is not None else None), res.queries
            notes += [res.note] if res.note else []
        else:
            oracle = TollOracle(game, eps=min(float(p["eps"]), 1e-14), research=True, U=U)
            res = induce_tolls_linear1c(oracle, sc.target, U=U)
            verdict, tolls, queries = "found", res.tolls, res.queries
            notes += res.notes
        ms = 1000 * (time.perf_counter() - t0)
        err = float("nan")
        if tolls is not None:
            err = float(np.max(np.abs(oracle.verify(tolls).aggregate - sc.target.aggregate)))
        out = MethodResult(method, verdict, None if tolls is None else np.asarray(tolls, float), None, queries, err, ms, notes=notes)
    if trace:
        Path(trace).write_text(oracle.log.to_csv(), encoding="utf-8")
        out.trace_path = str(trace)
    return out
