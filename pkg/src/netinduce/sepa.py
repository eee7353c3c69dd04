"""Series-parallel graphs: decomposition trees, toll normal forms, labelings,
discriminating and good pairs, and the two binary-search style induction loops
(tolls via sign queries, Stackelberg flows via equilibrium queries).

Tree computations are written over plain Python numbers so they run
unchanged on ``fractions.Fraction`` for exact label arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DirectedGraph, Flow, Network, feasibility_tol
from .latency import grid_value


class NotSeriesParallelError(ValueError):
    def __init__(self, message: str, witness: Sequence[tuple] = ()):
        super().__init__(message)
        self.witness = list(witness)


@dataclass(eq=False)
class SepaNode:
    kind: str                                  # "leaf", "series" or "parallel"
    source: object
    sink: object
    edges: tuple[int, ...]
    left: Optional["SepaNode"] = None
    right: Optional["SepaNode"] = None
    edge: Optional[int] = None
    index: int = -1                            # position among parallel nodes, bottom-up

    @property
    def key(self) -> int:
        return self.edges[0]

    def children(self) -> tuple:
        return () if self.kind == "leaf" else (self.left, self.right)

    def __repr__(self) -> str:
        return to_text(self)


@dataclass
class SepaTree:
    root: SepaNode
    graph: DirectedGraph
    parallel_nodes: list = field(default_factory=list)   # bottom-up (post-order)

    @property
    def source(self):
        return self.root.source

    @property
    def sink(self):
        return self.root.sink

    def nodes(self) -> list:
        out = []

        def walk(h):
            for c in h.children():
                walk(c)
            out.append(h)

        walk(self.root)
        return out

    @cached_property
    def _node_ids(self) -> frozenset:
        return frozenset(id(h) for h in self.nodes())

    def contains(self, h: SepaNode) -> bool:
        return id(h) in self._node_ids

    def source_edges(self, h: SepaNode) -> list[int]:
        return [e for e in h.edges if self.graph.tail(e) == h.source]

    def to_text(self) -> str:
        return to_text(self.root)


def to_text(h: SepaNode) -> str:
    if h.kind == "leaf":
        return str(h.edge)
    tag = "S" if h.kind == "series" else "P"
    return f"{tag}({to_text(h.left)},{to_text(h.right)})"


def _leaf(graph: DirectedGraph, e: int) -> SepaNode:
    u, v = graph.edges[e]
    return SepaNode("leaf", u, v, (e,), edge=e)


def _join(kind: str, a: SepaNode, b: SepaNode) -> SepaNode:
    edges = tuple(sorted(a.edges + b.edges))
    if kind == "series":
        return SepaNode(kind, a.source, b.sink, edges, a, b)
    return SepaNode(kind, a.source, a.sink, edges, a, b)


def decompose(graph: DirectedGraph, s, t) -> SepaTree:
    """Decomposition tree by repeated reductions.

    Series reductions go first (the one holding the lowest edge id), then
    parallel reductions (the two lowest-keyed parallel virtual edges, the lower
    key becoming the left branch).  A graph that gets stuck before shrinking to
    a single ``s→t`` edge is rejected with the stuck graph as witness.
    """
    if graph.m == 0:
        raise NotSeriesParallelError("graph has no edges")
    live: list[SepaNode] = [_leaf(graph, e) for e in range(graph.m)]
    used_nodes = {u for u, _ in graph.edges} | {v for _, v in graph.edges}
    if s not in used_nodes or t not in used_nodes:
        raise NotSeriesParallelError("terminal without incident edges")
    while len(live) > 1:
        ins: dict = {}
        outs: dict = {}
        for h in live:
            outs.setdefault(h.source, []).append(h)
            ins.setdefault(h.sink, []).append(h)
        series = []
        for v in set(ins) | set(outs):
            if v in (s, t):
                continue
            if len(ins.get(v, ())) == 1 and len(outs.get(v, ())) == 1:
                a, b = ins[v][0], outs[v][0]
                if a is not b:
                    series.append((min(a.key, b.key), a, b))
        if series:
            _, a, b = min(series, key=lambda z: z[0])
            live = [h for h in live if h is not a and h is not b] + [_join("series", a, b)]
            continue
        groups: dict = {}
        for h in live:
            groups.setdefault((h.source, h.sink), []).append(h)
        pairs = []
        for hs in groups.values():
            if len(hs) >= 2:
                hs = sorted(hs, key=lambda h: h.key)
                pairs.append((hs[0].key, hs[0], hs[1]))
        if pairs:
            _, a, b = min(pairs, key=lambda z: z[0])
            live = [h for h in live if h is not a and h is not b] + [_join("parallel", a, b)]
            continue
        witness = sorted((h.source, h.sink) for h in live)
        raise NotSeriesParallelError(
            f"not two-terminal series-parallel between {s!r} and {t!r}; irreducible core {witness}", witness
        )
    root = live[0]
    if root.source != s or root.sink != t:
        raise NotSeriesParallelError(f"reduces to a single edge {root.source!r}->{root.sink!r}, not {s!r}->{t!r}")
    tree = SepaTree(root, graph)
    for h in tree.nodes():
        if h.kind == "parallel":
            h.index = len(tree.parallel_nodes)
            tree.parallel_nodes.append(h)
    return tree


# ---------------------------------------------------------------------------
# Tolls, canonical tolls and labelings.


def min_path_toll(tree: SepaTree, h: SepaNode, tolls: Sequence) -> object:
    """Smallest total toll over ``s_H``-``t_H`` paths of ``H``."""
    if h.kind == "leaf":
        return tolls[h.edge]
    a = min_path_toll(tree, h.left, tolls)
    b = min_path_toll(tree, h.right, tolls)
    return a + b if h.kind == "series" else min(a, b)


def _min_path_tolls(tree: SepaTree, tolls: Sequence) -> dict:
    out = {}
    for h in tree.nodes():
        if h.kind == "leaf":
            out[id(h)] = tolls[h.edge]
        elif h.kind == "series":
            out[id(h)] = out[id(h.left)] + out[id(h.right)]
        else:
            out[id(h)] = min(out[id(h.left)], out[id(h.right)])
    return out


def equalizing_tolls(tree: SepaTree, edge_costs: Sequence) -> list:
    """Nonnegative tolls under which every ``s``-``t`` path has the same cost plus toll,
    with zero minimum path toll."""
    tolls = [0 * c for c in edge_costs]
    path_cost = {}
    for h in tree.nodes():
        if h.kind == "leaf":
            path_cost[id(h)] = edge_costs[h.edge]
        elif h.kind == "series":
            path_cost[id(h)] = path_cost[id(h.left)] + path_cost[id(h.right)]
        else:
            c1, c2 = path_cost[id(h.left)], path_cost[id(h.right)]
            cheap, gap = (h.left, c2 - c1) if c1 <= c2 else (h.right, c1 - c2)
            for e in tree.source_edges(cheap):
                tolls[e] += gap
            path_cost[id(h)] = max(c1, c2)
    return tolls


def canonicalize_tolls(tree: SepaTree, tolls: Sequence) -> list:
    """Same path tolls, with every source-leaving edge of every subgraph carrying at
    least that subgraph's minimum path toll.  Series joins move the downstream
    minimum onto the upstream source edges."""
    alpha = list(tolls)
    for h in tree.nodes():
        if h.kind != "series":
            continue
        delta = min_path_toll(tree, h.right, alpha)
        if delta == 0:
            continue
        for e in tree.source_edges(h.left):
            alpha[e] += delta
        for e in tree.source_edges(h.right):
            alpha[e] -= delta
    return alpha


def is_canonical(tree: SepaTree, alpha: Sequence, tol: float = 0.0) -> bool:
    mins = _min_path_tolls(tree, alpha)
    return all(alpha[e] >= mins[id(h)] - tol for h in tree.nodes() for e in tree.source_edges(h))


@dataclass
class Labeling:
    L: object
    diff: list                                  # indexed by parallel-node position

    def copy(self) -> "Labeling":
        return Labeling(self.L, list(self.diff))


def tolls_to_labeling(tree: SepaTree, alpha: Sequence) -> Labeling:
    mins = _min_path_tolls(tree, alpha)
    diff = [mins[id(h.left)] - mins[id(h.right)] for h in tree.parallel_nodes]
    return Labeling(mins[id(tree.root)], diff)


def labeling_to_tolls(tree: SepaTree, labeling: Labeling) -> list:
    """Zero start, then bottom-up over parallel joins add the positive part of the
    label to the left branch's source edges and the negative part to the right
    branch's, then add ``L`` to the edges leaving ``s``."""
    zero = 0 * labeling.L
    alpha = [zero] * tree.graph.m
    for h in tree.parallel_nodes:
        d = labeling.diff[h.index]
        for e in tree.source_edges(h.left):
            alpha[e] = alpha[e] + max(zero, d)
        for e in tree.source_edges(h.right):
            alpha[e] = alpha[e] + max(zero, -d)
    for e in tree.source_edges(tree.root):
        alpha[e] = alpha[e] + labeling.L
    return alpha


# ---------------------------------------------------------------------------
# Subgraph flow values, good pairs and discriminating pairs.


def _reach(graph: DirectedGraph) -> dict:
    out = {}
    for u in graph.nodes:
        seen = {u}
        stack = [u]
        while stack:
            x = stack.pop()
            for e in graph.out_edges[x]:
                w = graph.head(e)
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        out[u] = seen
    return out


def external_commodities(tree: SepaTree, h: SepaNode, net: Network, reach: Optional[dict] = None) -> list[int]:
    """Commodities with some ``s_i``-``t_i`` path through both ``s_H`` and ``t_H``."""
    reach = _reach(tree.graph) if reach is None else reach
    return [
        i
        for i, c in enumerate(net.commodities)
        if h.source in reach[c.source] and c.sink in reach[h.sink]
    ]


def subgraph_flow_value(tree: SepaTree, h: SepaNode, f: Flow, net: Network, reach: Optional[dict] = None) -> float:
    """Flow of the external commodities of ``H`` on the edges leaving ``s_H`` inside ``H``."""
    if not tree.contains(h):
        raise ValueError("node is not in this tree")
    src = tree.source_edges(h)
    return float(sum(f.per_commodity[i, src].sum() for i in external_commodities(tree, h, net, reach)))


@dataclass(frozen=True)
class PairResult:
    first: SepaNode      # over the target
    second: SepaNode     # at or under the target
    parent: SepaNode


def _parent_map(tree: SepaTree) -> dict:
    out = {}
    for h in tree.nodes():
        for c in h.children():
            out[id(c)] = h
    return out


def good_pair(tree: SepaTree, f: Flow, target: Flow, net: Network, tol: float) -> Optional[PairResult]:
    """A parallel join whose branches differ in flow value in opposite directions,
    found by the bottom-up trichotomy recursion; None when the flows agree."""
    reach = _reach(tree.graph)

    def value_sign(h):
        d = subgraph_flow_value(tree, h, f, net, reach) - subgraph_flow_value(tree, h, target, net, reach)
        return 1 if d > tol else -1 if d < -tol else 0

    def rec(h):
        if h.kind == "leaf":
            return None, value_sign(h)
        pl, sl = rec(h.left)
        if pl is not None:
            return pl, 0
        pr, sr = rec(h.right)
        if pr is not None:
            return pr, 0
        if h.kind == "parallel":
            if sl > 0 and sr < 0:
                return PairResult(h.left, h.right, h), 0
            if sr > 0 and sl < 0:
                return PairResult(h.right, h.left, h), 0
        return None, value_sign(h)

    pair, _ = rec(tree.root)
    return pair


def edge_classes(f: Flow, target: Flow, tol: float) -> np.ndarray:
    """+1 where ``f`` is over the target by more than ``tol``, -1 under, else 0."""
    d = f.aggregate - target.aggregate
    out = np.zeros(len(d), dtype=int)
    out[d > tol] = 1
    out[d < -tol] = -1
    return out


def is_discriminating(pair: PairResult, signs: np.ndarray) -> bool:
    """Strictly over on every edge of the first branch, at or under on every edge of the second."""
    if pair.parent.kind != "parallel":
        return False
    kids = {id(pair.parent.left), id(pair.parent.right)}
    if {id(pair.first), id(pair.second)} != kids:
        return False
    return all(signs[e] > 0 for e in pair.first.edges) and all(signs[e] <= 0 for e in pair.second.edges)


def discriminating_pairs_by_scan(tree: SepaTree, signs: np.ndarray) -> list[PairResult]:
    """Every discriminating pair, by a direct scan of the parallel joins (bottom-up order)."""
    out = []
    for h in tree.parallel_nodes:
        for a, b in ((h.left, h.right), (h.right, h.left)):
            p = PairResult(a, b, h)
            if is_discriminating(p, signs):
                out.append(p)
    return out


def find_discriminating_pair(tree: SepaTree, f: Flow, target: Flow, net: Network, tol: Optional[float] = None) -> PairResult:
    """Good pair from the trichotomy recursion, refined inside the over-target branch to
    the smallest subgraph mixing strictly-over and equal edges."""
    tol = feasibility_tol(net) if tol is None else tol
    signs = edge_classes(f, target, tol)
    if not np.any(signs):
        raise ValueError("flows agree within tolerance; no discriminating pair")
    pair = good_pair(tree, f, target, net, tol)
    if pair is not None:
        if is_discriminating(pair, signs):
            return pair
        refined = _refine(pair.first, signs)
        if refined is not None and is_discriminating(refined, signs):
            return refined
    # the recursion relies on exact conservation; with tolerance effects fall back to the scan
    found = discriminating_pairs_by_scan(tree, signs)
    if not found:
        raise ValueError("no discriminating pair within tolerance")
    return found[0]


def _refine(h: SepaNode, signs: np.ndarray) -> Optional[PairResult]:
    def mixed(x):
        vals = {int(signs[e] > 0) for e in x.edges}
        return len(vals) == 2

    node = h
    while node.kind != "leaf" and mixed(node):
        nxt = next((c for c in node.children() if mixed(c)), None)
        if nxt is None:
            break
        node = nxt
    if node.kind != "parallel" or not mixed(node):
        return None
    a, b = node.left, node.right
    if all(signs[e] > 0 for e in a.edges):
        return PairResult(a, b, node)
    return PairResult(b, a, node)


def discriminating_pair_from_signs(tree: SepaTree, signs: np.ndarray) -> Optional[PairResult]:
    found = discriminating_pairs_by_scan(tree, signs)
    return found[0] if found else None


# ---------------------------------------------------------------------------
# Toll induction by interval halving on the labels.


def default_uprime(U: float, m: int, K: float, total_demand: float) -> int:
    """``max{U², m K Σd}`` rounded up to a multiple of ``U²`` so the ``1/U²`` grid sits inside
    the ``1/U'`` grid."""
    U2 = int(round(U * U))
    raw = max(U * U, m * K * total_demand)
    return int(math.ceil(raw / U2 - 1e-12)) * U2


def query_cap(m: int, Uprime: float) -> int:
    """``M = m log2(8 m U'^2)``."""
    return int(math.ceil(m * math.log2(8 * m * Uprime * Uprime)))


@dataclass
class SepaTollResult:
    verdict: str
    tolls: Optional[list]
    labeling: Labeling
    queries: int
    cap: int
    intervals: list
    history: list = field(default_factory=list)    # (labeling, pair index or None) per query
    note: str = ""

    @property
    def found(self) -> bool:
        return self.verdict == "found"

    def float_tolls(self) -> np.ndarray:
        return np.array([float(x) for x in self.tolls])


def _grid_point(lo: Fraction, hi: Fraction, Uprime: int) -> Fraction:
    k = math.ceil(lo * Uprime)
    cand = Fraction(k, Uprime)
    if cand > hi:
        # the interval missed the grid (an invalid interval); stay at the nearest grid value
        cand = Fraction(round(((lo + hi) / 2) * Uprime), Uprime)
    return cand


def induce_tolls_sepa(
    tree: SepaTree,
    target: Flow,
    oracle,
    Uprime: int,
    *,
    tol: Optional[float] = None,
    on_iteration: Optional[Callable] = None,
) -> SepaTollResult:
    """Binary search on the labels of the parallel joins, driven by sign queries.

    ``oracle.sign_query(tolls, target, tol)`` must return per-edge signs of
    ``f(τ) - f*``.  The base label stays 0.
    """
    Uprime = int(Uprime)
    m = tree.graph.m
    if tol is None:
        tol = min(1e-7, 0.25 / Uprime)
    if tol >= 1.0 / (2 * Uprime):
        raise ValueError(f"sign tolerance {tol:g} must be below 1/(2U') = {1 / (2 * Uprime):g}")
    bound = Fraction(m * Uprime)
    nH = len(tree.parallel_nodes)
    lo = [-bound] * nH
    hi = [bound] * nH
    lab = Labeling(Fraction(0), [Fraction(0)] * nH)
    cap = query_cap(m, Uprime)
    history = []
    start = oracle.count
    for _ in range(cap + 1):
        alpha = labeling_to_tolls(tree, lab)
        signs = oracle.sign_query([float(a) for a in alpha], target, tol)
        if not np.any(signs):
            history.append((lab.copy(), None))
            return SepaTollResult("found", alpha, lab, oracle.count - start, cap,
                                  list(zip(lo, hi)), history)
        pair = discriminating_pair_from_signs(tree, signs)
        if pair is None:
            history.append((lab.copy(), None))
            return SepaTollResult("stalled", alpha, lab, oracle.count - start, cap, list(zip(lo, hi)), history,
                                  note="no strictly-over branch outside the dead band")
        h = pair.parent
        history.append((lab.copy(), h.index))
        if pair.first is h.left:
            lo[h.index] = lab.diff[h.index]
        else:
            hi[h.index] = lab.diff[h.index]
        if hi[h.index] - lo[h.index] < Fraction(1, Uprime):
            lab.diff[h.index] = _grid_point(lo[h.index], hi[h.index], Uprime)
        else:
            lab.diff[h.index] = (lo[h.index] + hi[h.index]) / 2
        if on_iteration is not None:
            on_iteration(lab.copy(), list(zip(lo, hi)), h.index)
    return SepaTollResult("cap-exceeded", labeling_to_tolls(tree, lab), lab, oracle.count - start, cap,
                          list(zip(lo, hi)), history, note="query cap exceeded")


# ---------------------------------------------------------------------------
# Stackelberg induction.


def min_saturating_flow(tree: SepaTree, target: Flow, saturated) -> Flow:
    """Least-value ``s``-``t`` flow with ``g_e = f*_e`` on ``saturated`` and ``0 <= g <= f*`` elsewhere.

    Each subgraph's feasible values form an interval: a leaf gives ``[f*_e, f*_e]``
    or ``[0, f*_e]``, series joins intersect, parallel joins add.
    """
    fstar = target.aggregate
    sat = set(saturated)
    iv = {}
    for h in tree.nodes():
        if h.kind == "leaf":
            e = h.edge
            iv[id(h)] = (fstar[e], fstar[e]) if e in sat else (0.0, fstar[e])
        else:
            (a1, b1), (a2, b2) = iv[id(h.left)], iv[id(h.right)]
            iv[id(h)] = (max(a1, a2), min(b1, b2)) if h.kind == "series" else (a1 + a2, b1 + b2)
    g = np.zeros(tree.graph.m)

    def assign(h, v):
        if h.kind == "leaf":
            g[h.edge] = v
        elif h.kind == "series":
            assign(h.left, v)
            assign(h.right, v)
        else:
            lo1, hi1 = iv[id(h.left)]
            lo2, hi2 = iv[id(h.right)]
            v1 = min(hi1, max(lo1, v - hi2))
            assign(h.left, v1)
            assign(h.right, v - v1)

    assign(tree.root, iv[id(tree.root)][0])
    return Flow.single(g)


@dataclass
class StackelbergResult:
    verdict: str                   # "found" or "none"
    g: Optional[Flow]
    queries: int
    saturated: list
    min_value: float
    note: str = ""

    @property
    def found(self) -> bool:
        return self.verdict == "found"


def induce_stackelberg_sepa(tree: SepaTree, target: Flow, alpha: float, oracle, *, tol: Optional[float] = None) -> StackelbergResult:
    """Least-value Stackelberg flow inducing ``target``, or a ``none`` verdict when that
    least value exceeds ``alpha * d``."""
    net: Network = oracle.network
    d = net.commodities[0].demand
    tol = 1e-7 * max(1.0, d) if tol is None else tol
    sat: set = set()
    start = oracle.count
    while True:
        g = min_saturating_flow(tree, target, sat)
        value = g.value(net)
        if value > alpha * d + feasibility_tol(net):
            return StackelbergResult("none", None, oracle.count - start, sorted(sat), value,
                                     note=f"least inducing value {value:g} exceeds alpha*d = {alpha * d:g}")
        response = oracle.query(g)
        h = Flow(response.per_commodity + g.per_commodity)
        if float(np.max(np.abs(h.aggregate - target.aggregate))) <= tol:
            return StackelbergResult("found", g, oracle.count - start, sorted(sat), value)
        pair = good_pair(tree, h, target, net, tol)
        if pair is None:
            return StackelbergResult("none", None, oracle.count - start, sorted(sat), value,
                                     note="response differs from target but no good pair within tolerance")
        new = set(pair.second.edges) - sat
        if not new:
            return StackelbergResult("none", None, oracle.count - start, sorted(sat), value,
                                     note="good pair adds no new saturated edge")
        sat |= new


def grid_inducing_tolls(tree: SepaTree, game, target: Flow, U: int) -> list:
    """Exact equalizing tolls at the target's edge costs, for affine latencies and a
    target on the ``1/U`` grid; every such toll lies on the ``1/U²`` grid."""
    costs = []
    for l, x in zip(game.latencies, target.aggregate):
        b, a = (list(l.coefficients) + [0.0, 0.0])[:2]
        costs.append(grid_value(b, U) + grid_value(a, U) * grid_value(x, U))
    return equalizing_tolls(tree, costs)


def graph_terminals(graph: DirectedGraph) -> tuple:
    """The unique node without incoming edges and the unique node without outgoing edges."""
    sources = [v for v in graph.nodes if not graph.in_edges[v] and graph.out_edges[v]]
    sinks = [v for v in graph.nodes if not graph.out_edges[v] and graph.in_edges[v]]
    if len(sources) != 1 or len(sinks) != 1:
        raise NotSeriesParallelError(f"need exactly one source and one sink, found {sources} and {sinks}")
    return sources[0], sinks[0]


def decompose_graph(graph: DirectedGraph) -> SepaTree:
    return decompose(graph, *graph_terminals(graph))
