"""Graphs, commodities, multicommodity flows and the path operations built on them.

Edges are addressed by integer id (their position in ``DirectedGraph.edges``),
never by endpoint pair, so parallel links are first-class.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from .latency import PolyLatency

Node = Hashable
Path = tuple[int, ...]


class NegativeCycleError(ValueError):
    pass


class CyclicSupportError(ValueError):
    pass


@dataclass(frozen=True)
class DirectedGraph:
    nodes: tuple
    edges: tuple[tuple[Node, Node], ...]

    def __init__(self, nodes: Iterable[Node], edges: Iterable[tuple[Node, Node]]):
        nodes = tuple(nodes)
        edges = tuple((u, v) for u, v in edges)
        known = set(nodes)
        if len(known) != len(nodes):
            raise ValueError("duplicate node ids")
        for idx, (u, v) in enumerate(edges):
            if u not in known or v not in known:
                raise ValueError(f"edge {idx} ({u!r}, {v!r}) references an unknown node")
            if u == v:
                raise ValueError(f"edge {idx} is a self-loop at {u!r}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[Node, Node]]) -> "DirectedGraph":
        edges = list(edges)
        nodes: list = []
        for u, v in edges:
            for w in (u, v):
                if w not in nodes:
                    nodes.append(w)
        return cls(nodes, edges)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def tail(self, e: int) -> Node:
        return self.edges[e][0]

    def head(self, e: int) -> Node:
        return self.edges[e][1]

    @cached_property
    def out_edges(self) -> dict[Node, tuple[int, ...]]:
        out: dict = {v: [] for v in self.nodes}
        for idx, (u, _) in enumerate(self.edges):
            out[u].append(idx)
        return {v: tuple(es) for v, es in out.items()}

    @cached_property
    def in_edges(self) -> dict[Node, tuple[int, ...]]:
        inc: dict = {v: [] for v in self.nodes}
        for idx, (_, v) in enumerate(self.edges):
            inc[v].append(idx)
        return {v: tuple(es) for v, es in inc.items()}

    def topological_order(self, edge_subset: Optional[Iterable[int]] = None) -> Optional[list]:
        """Kahn order of the nodes restricted to ``edge_subset``; None if it has a cycle."""
        es = range(self.m) if edge_subset is None else sorted(set(edge_subset))
        indeg = {v: 0 for v in self.nodes}
        succ: dict = {v: [] for v in self.nodes}
        for e in es:
            u, v = self.edges[e]
            indeg[v] += 1
            succ[u].append(v)
        queue = [v for v in self.nodes if indeg[v] == 0]
        order = []
        while queue:
            u = queue.pop(0)
            order.append(u)
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        return order if len(order) == self.n else None

    def is_acyclic(self, edge_subset: Optional[Iterable[int]] = None) -> bool:
        return self.topological_order(edge_subset) is not None


@dataclass(frozen=True)
class Commodity:
    source: Node
    sink: Node
    demand: float

    def __post_init__(self):
        if not self.demand > 0:
            raise ValueError(f"commodity demand must be positive, got {self.demand}")
        if self.source == self.sink:
            raise ValueError("commodity source and sink coincide")


@dataclass(frozen=True)
class Network:
    """A graph with its commodities: everything an algorithm is allowed to see."""

    graph: DirectedGraph
    commodities: tuple[Commodity, ...]

    def __post_init__(self):
        object.__setattr__(self, "commodities", tuple(self.commodities))
        if not self.commodities:
            raise ValueError("at least one commodity is required")
        known = set(self.graph.nodes)
        for c in self.commodities:
            if c.source not in known or c.sink not in known:
                raise ValueError(f"commodity {c} references an unknown node")

    @property
    def k(self) -> int:
        return len(self.commodities)

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def total_demand(self) -> float:
        return float(sum(c.demand for c in self.commodities))

    @property
    def demands(self) -> np.ndarray:
        return np.array([c.demand for c in self.commodities], dtype=float)

    @property
    def network(self) -> "Network":
        return Network(self.graph, self.commodities)


class LatencyTable:
    """Vectorized evaluation of one polynomial latency per edge (or resource).

    Subclasses provide ``latencies`` and ``m``.
    """

    @property
    def degree(self) -> int:
        return max(l.degree for l in self.latencies)

    @cached_property
    def coefficient_matrix(self) -> np.ndarray:
        """``C[e, j]`` is the coefficient of ``x^j`` on edge ``e``."""
        r = self.degree
        C = np.zeros((self.m, r + 1))
        for e, l in enumerate(self.latencies):
            C[e, : l.degree + 1] = l.coefficients
        return C

    def edge_costs(self, f: np.ndarray, tolls: Optional[np.ndarray] = None) -> np.ndarray:
        """``l_e(f_e) + τ_e`` for the aggregate edge vector ``f``."""
        C = self.coefficient_matrix
        acc = np.zeros(self.m)
        for j in range(C.shape[1] - 1, -1, -1):
            acc = acc * f + C[:, j]
        return acc if tolls is None else acc + tolls

    def edge_slopes(self, f: np.ndarray) -> np.ndarray:
        C = self.coefficient_matrix
        acc = np.zeros(self.m)
        for j in range(C.shape[1] - 1, 0, -1):
            acc = acc * f + j * C[:, j]
        return acc


@dataclass(frozen=True)
class RoutingGame(Network, LatencyTable):
    """A nonatomic routing game: network plus one polynomial latency per edge."""

    latencies: tuple[PolyLatency, ...] = field(default=())

    def __post_init__(self):
        super().__post_init__()
        lats = tuple(l if isinstance(l, PolyLatency) else PolyLatency(l) for l in self.latencies)
        if len(lats) != self.graph.m:
            raise ValueError(f"expected {self.graph.m} latencies, got {len(lats)}")
        object.__setattr__(self, "latencies", lats)

    def with_latencies(self, latencies: Sequence[PolyLatency]) -> "RoutingGame":
        return RoutingGame(self.graph, self.commodities, tuple(latencies))


@dataclass(frozen=True)
class Flow:
    """Per-commodity edge vectors, shape ``(k, m)``."""

    per_commodity: np.ndarray

    def __init__(self, per_commodity):
        arr = np.array(per_commodity, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise ValueError("flow must be a (k, m) array")
        arr.setflags(write=False)
        object.__setattr__(self, "per_commodity", arr)

    @classmethod
    def single(cls, edge_flows: Sequence[float]) -> "Flow":
        return cls(np.asarray(edge_flows, dtype=float)[None, :])

    @classmethod
    def zeros(cls, k: int, m: int) -> "Flow":
        return cls(np.zeros((k, m)))

    @property
    def aggregate(self) -> np.ndarray:
        return self.per_commodity.sum(axis=0)

    @property
    def k(self) -> int:
        return self.per_commodity.shape[0]

    @property
    def m(self) -> int:
        return self.per_commodity.shape[1]

    def __add__(self, other: "Flow") -> "Flow":
        return Flow(self.per_commodity + other.per_commodity)

    def __sub__(self, other: "Flow") -> "Flow":
        return Flow(self.per_commodity - other.per_commodity)

    def linf(self, other: "Flow") -> float:
        """Max edge difference of the aggregate vectors."""
        return float(np.max(np.abs(self.aggregate - other.aggregate), initial=0.0))

    def value(self, net: Network, commodity: int = 0) -> float:
        """Net outflow of commodity ``commodity`` at its source."""
        s = net.commodities[commodity].source
        fi = self.per_commodity[commodity]
        g = net.graph
        return float(sum(fi[e] for e in g.out_edges[s]) - sum(fi[e] for e in g.in_edges[s]))

    def is_acyclic(self, net: Network, tol: float = 0.0) -> bool:
        return all(
            net.graph.is_acyclic(np.flatnonzero(self.per_commodity[i] > tol)) for i in range(self.k)
        )


@dataclass(frozen=True)
class PathDecomposition:
    entries: tuple[tuple[int, Path, float], ...]

    def edge_loads(self, k: int, m: int) -> np.ndarray:
        out = np.zeros((k, m))
        for i, path, w in self.entries:
            for e in path:
                out[i, e] += w
        return out

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class FlowReport:
    violations: list[str] = field(default_factory=list)
    residuals: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.feasible


def feasibility_tol(net: Network) -> float:
    return 1e-9 * max(1.0, net.total_demand)


def node_imbalance(graph: DirectedGraph, vec: np.ndarray) -> dict:
    """Net outflow at every node for one edge vector."""
    out = {}
    for v in graph.nodes:
        out[v] = float(sum(vec[e] for e in graph.out_edges[v]) - sum(vec[e] for e in graph.in_edges[v]))
    return out


def validate_flow(net: Network, f: Flow, tol: Optional[float] = None) -> FlowReport:
    """Check nonnegativity, conservation and demands; report every violation."""
    if f.per_commodity.shape != (net.k, net.m):
        raise ValueError(f"flow has shape {f.per_commodity.shape}, expected {(net.k, net.m)}")
    tol = feasibility_tol(net) if tol is None else tol
    report = FlowReport()
    for i, com in enumerate(net.commodities):
        fi = f.per_commodity[i]
        for e in np.flatnonzero(fi < -tol):
            report.violations.append(f"commodity {i}: negative flow {fi[e]:.3g} on edge {e}")
        for v, bal in node_imbalance(net.graph, fi).items():
            want = com.demand if v == com.source else -com.demand if v == com.sink else 0.0
            residual = bal - want
            report.residuals[(i, v)] = residual
            if abs(residual) > tol:
                if v == com.source:
                    what = f"source outflow {bal:g} != {com.demand:g}"
                elif v == com.sink:
                    what = f"sink inflow {-bal:g} != {com.demand:g}"
                else:
                    what = f"conservation residual {residual:.3g}"
                report.violations.append(f"commodity {i}: node {v!r}: {what}")
    return report


def _support(vec: np.ndarray, tol: float) -> list[int]:
    return [int(e) for e in np.flatnonzero(vec > tol)]


def _find_cycle(graph: DirectedGraph, edges: Sequence[int]) -> Optional[list[int]]:
    """Some directed cycle (as an edge list) inside ``edges``, lowest ids explored first."""
    out: dict = {}
    for e in sorted(edges):
        out.setdefault(graph.tail(e), []).append(e)
    state: dict = {}
    for root in graph.nodes:
        if state.get(root):
            continue
        stack = [(root, iter(out.get(root, ())))]
        path_edges: list[int] = []
        on_stack = {root: 0}
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                state[node] = 2
                on_stack.pop(node, None)
                if path_edges:
                    path_edges.pop()
                continue
            w = graph.head(nxt)
            if w in on_stack:
                return path_edges[on_stack[w]:] + [nxt]
            if state.get(w) == 2:
                continue
            state[w] = 1
            on_stack[w] = len(path_edges) + 1
            path_edges.append(nxt)
            stack.append((w, iter(out.get(w, ()))))
    return None


def acyclic_reduce(net: Network, f: Flow, tol: float = 0.0) -> Flow:
    """Cancel flow around flow-carrying cycles of each commodity."""
    arr = np.array(f.per_commodity, dtype=float)
    for i in range(arr.shape[0]):
        while True:
            cycle = _find_cycle(net.graph, _support(arr[i], tol))
            if cycle is None:
                break
            j = min(cycle, key=lambda e: (arr[i, e], e))
            w = arr[i, j]
            arr[i, cycle] -= w
            arr[i, j] = 0.0
            arr[i] = np.maximum(arr[i], 0.0)
    return Flow(arr)


def path_decompose(net: Network, f: Flow, tol: Optional[float] = None) -> PathDecomposition:
    """Split each commodity into at most ``m`` weighted paths that reproduce its edge loads."""
    tol = feasibility_tol(net) if tol is None else tol
    g = net.graph
    entries = []
    for i, com in enumerate(net.commodities):
        r = np.array(f.per_commodity[i], dtype=float)
        if not g.is_acyclic(_support(r, tol)):
            raise CyclicSupportError(f"commodity {i} has a cyclic support")
        remaining = com.demand
        while remaining > tol:
            path = _support_path(g, r, com.source, com.sink, tol)
            if path is None:
                break
            w = min(r[e] for e in path)
            bottleneck = min(path, key=lambda e: (r[e], e))
            for e in path:
                r[e] -= w
            r[bottleneck] = 0.0
            remaining -= w
            entries.append((i, tuple(path), float(w)))
    return PathDecomposition(tuple(entries))


def _support_path(graph: DirectedGraph, r: np.ndarray, s: Node, t: Node, tol: float) -> Optional[list[int]]:
    # DFS over the (acyclic) support, lowest edge id first, with backtracking.
    stack = [(s, iter(sorted(e for e in graph.out_edges[s] if r[e] > tol)))]
    path: list[int] = []
    dead = set()
    while stack:
        node, it = stack[-1]
        if node == t:
            return path
        nxt = next(it, None)
        if nxt is None:
            dead.add(node)
            stack.pop()
            if path:
                path.pop()
            continue
        w = graph.head(nxt)
        if w in dead:
            continue
        path.append(nxt)
        stack.append((w, iter(sorted(e for e in graph.out_edges[w] if r[e] > tol))))
    return None


def _distances(graph: DirectedGraph, costs: np.ndarray, origin: Node, reverse: bool = False) -> dict:
    """Shortest distances from (or, with ``reverse``, to) ``origin``.

    Dijkstra for nonnegative costs, Bellman-Ford otherwise.
    """
    inf = float("inf")
    dist = {v: inf for v in graph.nodes}
    dist[origin] = 0.0
    adj = graph.in_edges if reverse else graph.out_edges
    other = graph.tail if reverse else graph.head
    if np.all(costs >= 0):
        heap = [(0.0, 0, origin)]
        order = {v: idx for idx, v in enumerate(graph.nodes)}
        done = set()
        while heap:
            d, _, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for e in adj[u]:
                w = other(e)
                nd = d + costs[e]
                if nd < dist[w]:
                    dist[w] = nd
                    heapq.heappush(heap, (nd, order[w], w))
        return dist
    for _ in range(graph.n):
        changed = False
        for e in range(graph.m):
            a, b = (graph.head(e), graph.tail(e)) if reverse else (graph.tail(e), graph.head(e))
            if dist[a] < inf and dist[a] + costs[e] < dist[b] - 1e-15:
                dist[b] = dist[a] + costs[e]
                changed = True
        if not changed:
            return dist
    raise NegativeCycleError("edge costs contain a negative cycle")


def _tie_tol(costs: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.sum(np.abs(costs))))


def min_cost_path(net: Network, edge_costs: np.ndarray, commodity: int) -> tuple[Path, float]:
    """Cheapest ``s_i``-``t_i`` path; ties go to the lexicographically smallest edge-id sequence."""
    costs = np.asarray(edge_costs, dtype=float)
    com = net.commodities[commodity]
    g = net.graph
    ds = _distances(g, costs, com.source)
    dt = _distances(g, costs, com.sink, reverse=True)
    D = ds[com.sink]
    if D == float("inf"):
        raise ValueError(f"sink {com.sink!r} unreachable from {com.source!r}")
    tol = _tie_tol(costs)
    path: list[int] = []
    node = com.source
    seen = {node}
    while node != com.sink:
        step = None
        for e in sorted(g.out_edges[node]):
            w = g.head(e)
            if w in seen or dt[w] == float("inf"):
                continue
            if abs(ds[node] + costs[e] + dt[w] - D) <= tol:
                step = e
                break
        if step is None:
            raise RuntimeError("shortest-path reconstruction failed (zero-cost cycle?)")
        path.append(step)
        node = g.head(step)
        seen.add(node)
    return tuple(path), float(sum(costs[e] for e in path))


def shortest_path_edges(net: Network, edge_costs: np.ndarray, commodity: int) -> frozenset[int]:
    """Edges lying on some minimum-cost ``s_i``-``t_i`` path."""
    costs = np.asarray(edge_costs, dtype=float)
    com = net.commodities[commodity]
    g = net.graph
    ds = _distances(g, costs, com.source)
    dt = _distances(g, costs, com.sink, reverse=True)
    D = ds[com.sink]
    if D == float("inf"):
        raise ValueError(f"sink {com.sink!r} unreachable from {com.source!r}")
    tol = _tie_tol(costs)
    return frozenset(
        e
        for e in range(g.m)
        if ds[g.tail(e)] < float("inf")
        and dt[g.head(e)] < float("inf")
        and abs(ds[g.tail(e)] + costs[e] + dt[g.head(e)] - D) <= tol
    )


def max_cost_support_path(
    net: Network, edge_costs: np.ndarray, f: Flow, commodity: int, tol: float = 0.0
) -> Optional[tuple[Path, float]]:
    """Most expensive ``s_i``-``t_i`` path inside the (acyclic) support of ``f^i``."""
    g = net.graph
    com = net.commodities[commodity]
    support = _support(f.per_commodity[commodity], tol)
    order = g.topological_order(support)
    if order is None:
        raise CyclicSupportError(f"commodity {commodity} has a cyclic support")
    sup = set(support)
    # best[v] = (cost, path) of the most expensive support path from v to the sink
    best: dict = {com.sink: (0.0, ())}
    for v in reversed(order):
        if v == com.sink:
            continue
        cand = None
        for e in sorted(g.out_edges[v]):
            if e not in sup or g.head(e) not in best:
                continue
            c, p = best[g.head(e)]
            c = c + edge_costs[e]
            if cand is None or c > cand[0]:
                cand = (c, (e,) + p)
        if cand is not None:
            best[v] = cand
    if com.source not in best:
        return None
    c, p = best[com.source]
    return p, float(c)


def find_violating_path_pair(
    net: Network,
    edge_costs: np.ndarray,
    f: Flow,
    margin: float = 0.0,
    support_tol: float = 0.0,
) -> Optional[tuple[int, Path, Path]]:
    """A commodity ``i`` and paths ``P`` (flow-carrying), ``Q`` with ``cost(P) > cost(Q) + margin``.

    None certifies that every flow-carrying path is (within ``margin``) a cheapest one.
    """
    costs = np.asarray(edge_costs, dtype=float)
    for i in range(net.k):
        found = max_cost_support_path(net, costs, f, i, support_tol)
        if found is None:
            continue
        P, cP = found
        Q, cQ = min_cost_path(net, costs, i)
        if cP > cQ + margin:
            return i, P, Q
    return None


def path_cost(path: Iterable[int], edge_costs: np.ndarray) -> float:
    return float(sum(edge_costs[e] for e in path))


def enumerate_paths(graph: DirectedGraph, s: Node, t: Node, limit: int = 100_000) -> list[Path]:
    """All simple ``s``-``t`` paths (for small test graphs and brute-force checks)."""
    out: list[Path] = []

    def walk(node, seen, path):
        if len(out) >= limit:
            return
        if node == t:
            out.append(tuple(path))
            return
        for e in graph.out_edges[node]:
            w = graph.head(e)
            if w not in seen:
                seen.add(w)
                path.append(e)
                walk(w, seen, path)
                path.pop()
                seen.discard(w)

    walk(s, {s}, [])
    return out
