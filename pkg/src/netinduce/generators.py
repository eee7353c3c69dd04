"""Random and fixed instances: parallel links, series-parallel graphs, small DAGs, Braess."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Commodity, DirectedGraph, Flow, Network, RoutingGame, enumerate_paths
from .latency import PolyLatency


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator so every experiment is replayable from one 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def pigou(demand: float = 1.0) -> RoutingGame:
    g = DirectedGraph(["s", "t"], [("s", "t"), ("s", "t")])
    return RoutingGame(g, (Commodity("s", "t", demand),), (PolyLatency((0, 1)), PolyLatency((1, 1))))


def parallel_links(latencies, demand: float = 1.0) -> RoutingGame:
    g = DirectedGraph(["s", "t"], [("s", "t")] * len(latencies))
    lats = tuple(l if isinstance(l, PolyLatency) else PolyLatency(l) for l in latencies)
    return RoutingGame(g, (Commodity("s", "t", demand),), lats)


BRAESS_EDGES = [("s", "u"), ("s", "v"), ("u", "v"), ("u", "t"), ("v", "t")]


def braess_graph() -> DirectedGraph:
    """Edges: 0 s→u, 1 s→v, 2 u→v (bridge), 3 u→t, 4 v→t."""
    return DirectedGraph(["s", "u", "v", "t"], BRAESS_EDGES)


def classic_braess(demand: float = 1.0) -> RoutingGame:
    lats = [(0, 1), (1,), (0,), (1,), (0, 1)]
    return RoutingGame(braess_graph(), (Commodity("s", "t", demand),), tuple(PolyLatency(c) for c in lats))


@dataclass(frozen=True)
class BraessParams:
    d1: float
    d2: float

    @property
    def a(self) -> float:
        return 1.0 + (self.d1 + self.d2) / 2.0

    @property
    def b(self) -> float:
        return self.d1 * self.d2 / 4.0

    @property
    def sigma(self) -> float:
        return self.d1 + self.d2

    @property
    def delta(self) -> float:
        return self.d2 - self.d1


def braess_instance(d1: float, d2: float, demand: Optional[float] = None) -> RoutingGame:
    """Braess game whose bridge carries flow exactly for demands in ``(d1, d2)``.

    Outer edges ``x² + x``, cross edges ``a x``, bridge constant ``b`` with
    ``a = 1 + (d1 + d2)/2`` and ``b = d1 d2 / 4``.
    """
    if not (d2 > d1 >= 1):
        raise ValueError(f"need d2 > d1 >= 1, got d1={d1}, d2={d2}")
    p = BraessParams(d1, d2)
    d = (d1 + d2) / 2.0 if demand is None else demand
    lats = (
        PolyLatency((0, 1, 1)),   # s→u
        PolyLatency((0, p.a)),    # s→v
        PolyLatency((p.b,)),      # u→v
        PolyLatency((0, p.a)),    # u→t
        PolyLatency((0, 1, 1)),   # v→t
    )
    return RoutingGame(braess_graph(), (Commodity("s", "t", d),), lats)


def random_standard_latency(rng: np.random.Generator, U: float, r: int, max_coef: Optional[float] = None) -> PolyLatency:
    """Coefficients on the 1/U grid in [0, U] (or [0, max_coef]) with slope at least 1/U."""
    top = int(round(U * (U if max_coef is None else max_coef)))
    coeffs = [int(rng.integers(0, top + 1)) / U for _ in range(r + 1)]
    coeffs[1] = int(rng.integers(1, top + 1)) / U
    return PolyLatency(coeffs)


def random_series_parallel(rng: np.random.Generator, m: int) -> DirectedGraph:
    """Grow a two-terminal series-parallel graph from one ``s→t`` edge by random
    subdivisions and duplications until it has ``m`` edges."""
    if m < 1:
        raise ValueError("m must be positive")
    edges = [("s", "t")]
    nodes = ["s", "t"]
    while len(edges) < m:
        idx = int(rng.integers(len(edges)))
        u, v = edges[idx]
        if rng.random() < 0.5:
            w = f"v{len(nodes) - 1}"
            nodes.append(w)
            edges[idx] = (u, w)
            edges.insert(idx + 1, (w, v))
        else:
            edges.insert(idx + 1, (u, v))
    return DirectedGraph(nodes, edges)


def random_dag(rng: np.random.Generator, n: int, m: int) -> DirectedGraph:
    """A DAG on ``0..n-1`` with a Hamiltonian spine so node 0 reaches node n-1."""
    if m < n - 1:
        raise ValueError("need at least n-1 edges for the spine")
    edges = [(i, i + 1) for i in range(n - 1)]
    while len(edges) < m:
        u, v = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        edges.append((u, v))
    return DirectedGraph(list(range(n)), edges)


def random_commodities(rng, graph: DirectedGraph, k: int, U: float, s=None, t=None, max_demand: float = 2.0):
    """``k`` commodities with demands on the 1/U grid; the first uses (s, t) when given."""
    out = []
    reachable_pairs = []
    for u in graph.nodes:
        for v in graph.nodes:
            if u != v and enumerate_paths(graph, u, v, limit=1):
                reachable_pairs.append((u, v))
    for i in range(k):
        if i == 0 and s is not None:
            a, b = s, t
        else:
            a, b = reachable_pairs[int(rng.integers(len(reachable_pairs)))]
        demand = int(rng.integers(1, int(max_demand * U) + 1)) / U
        out.append(Commodity(a, b, demand))
    return tuple(out)


def random_game(rng, graph: DirectedGraph, commodities, U: float, r: int = 1, max_coef: Optional[float] = None) -> RoutingGame:
    lats = tuple(random_standard_latency(rng, U, r, max_coef) for _ in range(graph.m))
    return RoutingGame(graph, tuple(commodities), lats)


def random_grid_path_flow(rng, net: Network, U: float, max_paths: int = 4) -> Flow:
    """A feasible flow whose path weights are multiples of 1/U, split over a few random paths."""
    out = np.zeros((net.k, net.m))
    for i, com in enumerate(net.commodities):
        paths = enumerate_paths(net.graph, com.source, com.sink, limit=200)
        units = int(round(com.demand * U))
        chosen = rng.choice(len(paths), size=min(max_paths, len(paths)), replace=False)
        cuts = np.sort(rng.integers(0, units + 1, size=len(chosen) - 1))
        parts = np.diff(np.concatenate([[0], cuts, [units]]))
        for p, w in zip(chosen, parts):
            for e in paths[p]:
                out[i, e] += w / U
    return Flow(out)


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent replayable stream for one (seed, keys...) cell of an experiment grid."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


def random_grid_tolls(rng, m: int, U: float, top: Optional[float] = None) -> np.ndarray:
    """Tolls on the 1/U grid in ``[0, top]`` (default ``[0, U]``)."""
    hi = int(round(U * (U if top is None else top)))
    return rng.integers(0, hi + 1, size=m) / U
