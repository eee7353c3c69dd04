"""Toll induction for single-commodity games with affine latencies.

Two steps.  First grow the equilibrium support to every edge of the target's
support by pushing negative tolls onto flowless edges one at a time, each by a
bisection on that edge's toll.  Then, with full support, the equilibrium flow
is affine in the tolls; probe each edge once to learn the map and solve for
the tolls that reach the target.  The final tolls are made nonnegative by
shifting tolls across topological cuts of the support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CyclicSupportError, DirectedGraph, Flow, _distances
from .latency import k_constant

# reported constant in the query bound c * m^2 * log2(3 m lmax(d))
QUERY_CONSTANT = 2.0


@dataclass(frozen=True)
class SensitivityScale:
    K: float
    d: float

    def kappa(self, x: float) -> float:
        """Toll step that moves the equilibrium by at most ``x`` in max norm."""
        return x * x / (self.K * self.d)


def query_bound(m: int, lmax: float, c: float = QUERY_CONSTANT) -> float:
    return c * m * m * math.log2(3 * m * lmax)


def _oracle_setup(oracle, U: Optional[float]):
    net = oracle.network
    if net.k != 1:
        raise ValueError("single-commodity games only")
    U = U if U is not None else getattr(oracle, "U", None)
    if U is None:
        raise ValueError("a bound U on the latency coefficients is required")
    d = net.commodities[0].demand
    return net, float(U), d, U * d + U


def _min_path_toll(net, tolls: np.ndarray, through: Optional[int] = None) -> float:
    com = net.commodities[0]
    g = net.graph
    if through is None:
        return _distances(g, tolls, com.source)[com.sink]
    u, w = g.edges[through]
    return _distances(g, tolls, com.source)[u] + tolls[through] + _distances(g, tolls, com.sink, reverse=True)[w]


def grow_support(
    oracle,
    tolls,
    r: int,
    delta: float,
    lmax_bound: float,
    *,
    K: float,
    current: Optional[Flow] = None,
    keep=(),
) -> tuple[np.ndarray, Flow]:
    """Lower the toll on ``r`` until ``f_r`` lies in ``[δ/3, 2δ/3]``.

    Bisection over ``[N, 0]`` where ``N`` is low enough to route all demand
    through ``r``.  Returns the new tolls and the flow they induce.  Edges in
    ``keep`` must stay at ``δ/3`` or more.
    """
    tolls = np.asarray(tolls, float).copy()
    f = oracle.query(tolls) if current is None else current
    if f.aggregate[r] >= delta / 3:
        return tolls, f
    net = oracle.network
    d = net.commodities[0].demand
    N = _min_path_toll(net, tolls) - _min_path_toll(net, tolls, r) - net.m * lmax_bound
    kappa = SensitivityScale(K, d).kappa(delta / 3)
    budget = int(math.ceil(math.log2(max(2.0, -N / kappa)))) + 2
    lo, hi = N, 0.0
    for _ in range(budget):
        mid = (lo + hi) / 2
        trial = tolls.copy()
        trial[r] += mid
        f = oracle.query(trial)
        fr = f.aggregate[r]
        if fr < delta / 3:
            hi = mid
        elif fr > 2 * delta / 3:
            lo = mid
        else:
            low = [e for e in keep if f.aggregate[e] < delta / 3]
            if low:
                raise ArithmeticError(f"edges {low} fell below delta/3 while growing edge {r}")
            return trial, f
    raise ArithmeticError(f"bisection on edge {r} did not find the flow band; oracle precision too low")


@dataclass
class SupportResult:
    tolls: np.ndarray
    flow: Flow
    queries: int
    rounds: int
    edges: list


def full_support_tolls(oracle, target: Optional[Flow] = None, *, U: Optional[float] = None) -> SupportResult:
    """Tolls (possibly negative) under which every edge of the target's support carries
    at least ``d/3^m``.  Edges the target leaves empty get a toll large enough to stay empty."""
    net, U, d, lmax = _oracle_setup(oracle, U)
    K = k_constant(1, U, d)
    m = net.m
    start = oracle.count
    tolls = np.zeros(m)
    if target is None:
        active = list(range(m))
    else:
        active = [e for e in range(m) if target.aggregate[e] > 0]
        tolls[[e for e in range(m) if e not in active]] = m * m * 2.0**m * lmax
    f = oracle.query(tolls)
    i = 1
    S = [e for e in active if f.aggregate[e] >= d / 3**i]
    rounds = 0
    while len(S) < len(active):
        r = min(e for e in active if e not in S)
        tolls, f = grow_support(oracle, tolls, r, d / 3**i, lmax, K=K, current=f, keep=S)
        rounds += 1
        i += 1
        S = [e for e in active if f.aggregate[e] >= d / 3**i]
    return SupportResult(tolls, f, oracle.count - start, rounds, active)


def estimate_beta(oracle, tau1, f_min: float, *, K: float, current: Optional[Flow] = None, edges=None) -> np.ndarray:
    """Flow response per unit toll, one probe per edge in ``edges``.

    Column ``e'`` is ``(f(τ¹ + κ 1_e') - f(τ¹)) / κ`` with ``κ = κ(f_min/2)``.
    """
    net = oracle.network
    d = net.commodities[0].demand
    tau1 = np.asarray(tau1, float)
    base = oracle.query(tau1) if current is None else current
    edges = range(net.m) if edges is None else edges
    kappa = SensitivityScale(K, d).kappa(f_min / 2)
    beta = np.zeros((net.m, net.m))
    for e in edges:
        probe = tau1.copy()
        probe[e] += kappa
        f = oracle.query(probe)
        if np.any(f.aggregate[list(edges)] <= 0):
            raise ArithmeticError(f"probe on edge {e} emptied an edge; f_min overestimated")
        beta[:, e] = (f.aggregate - base.aggregate) / kappa
    return beta


def make_tolls_nonnegative(graph: DirectedGraph, tolls, support) -> np.ndarray:
    """Same equilibrium, no negative tolls.

    For each negative edge ``(u, w)`` on the support, add its magnitude to every
    off-support edge and to every support edge leaving the set of nodes up to
    ``u`` in a topological order of the support.  Every used path crosses that
    cut exactly once, so used paths all shift equally and others by at least as
    much.  Negative edges off the support are simply raised to zero.
    """
    tau = np.asarray(tolls, float).copy()
    support = set(support)
    order = graph.topological_order(support)
    if order is None:
        raise CyclicSupportError("support has a cycle")
    pos = {v: j for j, v in enumerate(order)}
    for e in range(graph.m):
        if tau[e] >= 0:
            continue
        shift = -tau[e]
        if e not in support:
            tau[e] = 0.0
            continue
        cut = pos[graph.tail(e)]
        for x in range(graph.m):
            if x not in support or (pos[graph.tail(x)] <= cut < pos[graph.head(x)]):
                tau[x] += shift
        tau[e] = 0.0    # exact zero rather than a rounding residue
    return tau


@dataclass
class Linear1cResult:
    tolls: np.ndarray
    raw_tolls: np.ndarray
    queries: int
    support_queries: int
    beta: np.ndarray
    residual: float
    bound: float
    refinements: int = 0
    notes: list = field(default_factory=list)

    @property
    def constant(self) -> float:
        """``queries / (m^2 log2(3 m lmax))``, comparable to ``QUERY_CONSTANT``."""
        return self.queries * QUERY_CONSTANT / self.bound if self.bound > 0 else float("nan")


def induce_tolls_linear1c(
    oracle,
    target: Flow,
    *,
    U: Optional[float] = None,
    residual_tol: Optional[float] = None,
    match_tol: float = 1e-9,
    max_refinements: int = 3,
) -> Linear1cResult:
    """Full support, affine response map, one linear solve; then a confirming query.

    If the confirming query misses the target by more than ``match_tol`` the
    solve is repeated from the new point (each repeat costs one more query).
    """
    net, U, d, lmax = _oracle_setup(oracle, U)
    K = k_constant(1, U, d)
    start = oracle.count
    sup = full_support_tolls(oracle, target, U=U)
    active = sup.edges
    f1 = sup.flow
    f_min = float(np.min(f1.aggregate[active]))
    beta = estimate_beta(oracle, sup.tolls, f_min, K=K, current=f1, edges=active)
    B = beta[np.ix_(active, active)]
    residual_tol = 1e-8 * d if residual_tol is None else residual_tol
    tau = sup.tolls.copy()
    f = f1
    notes = []
    residual = 0.0
    refinements = 0
    for attempt in range(max_refinements + 1):
        rhs = target.aggregate[active] - f.aggregate[active]
        step, *_ = np.linalg.lstsq(B, rhs, rcond=1e-9)
        residual = float(np.max(np.abs(B @ step - rhs))) if len(rhs) else 0.0
        if residual > residual_tol:
            raise ArithmeticError(f"linear solve residual {residual:.3g} exceeds {residual_tol:.3g}; response map ill-conditioned")
        tau[active] += step
        f = oracle.query(tau)
        if float(np.max(np.abs(f.aggregate - target.aggregate))) <= match_tol:
            break
        if attempt < max_refinements:
            refinements += 1
    else:
        notes.append("confirming query still off target after refinement")
    if net.graph.is_acyclic():
        support = range(net.m)
    else:
        support = [e for e in range(net.m) if f.aggregate[e] > 0]
    out = make_tolls_nonnegative(net.graph, tau, support)
    queries = oracle.count - start
    return Linear1cResult(out, tau, queries, sup.queries, beta, residual, query_bound(net.m, lmax), refinements, notes)
