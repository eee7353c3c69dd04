"""Ellipsoid search over (latency coefficients, tolls) that induces a target flow.

The unknown point is the hidden game's coefficient vector together with some
inducing toll vector.  The search never sees the latencies; it learns about
them only through separating halfspaces:

* box and slope cuts keep the center a plausible standard latency;
* a *target* cut (no query needed) fires when the target is not an
  equilibrium of the candidate game under the candidate tolls;
* otherwise the candidate tolls are queried, and the response either
  certifies success or yields a *response* cut on the latency slots only,
  because the true latencies must make the response an equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    Flow,
    Network,
    max_cost_support_path,
    min_cost_path,
    path_decompose,
)
from .latency import PolyLatency, k_constant

ETA = 1e-9
WORK = np.longdouble

PROVENANCES = ("nonnegativity", "box", "slope", "constraint-set", "case1", "case2", "approx-case")


@dataclass(frozen=True)
class VariableLayout:
    """``r + 1`` coefficient slots per edge followed by one toll slot per edge."""

    m: int
    r: int

    @property
    def n_v(self) -> int:
        return self.m * (self.r + 2)

    @property
    def n_coef(self) -> int:
        return self.m * (self.r + 1)

    def coef(self, e: int, j: int) -> int:
        return e * (self.r + 1) + j

    def toll(self, e: int) -> int:
        return self.n_coef + e

    def pack(self, coefficients, tolls) -> np.ndarray:
        C = np.zeros((self.m, self.r + 1))
        for e, c in enumerate(coefficients):
            c = c.coefficients if isinstance(c, PolyLatency) else c
            if len(c) > self.r + 1:
                raise ValueError(f"edge {e} has degree above {self.r}")
            C[e, : len(c)] = c
        return np.concatenate([C.ravel(), np.asarray(tolls, dtype=float)])

    def unpack(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return x[: self.n_coef].reshape(self.m, self.r + 1), x[self.n_coef:]

    def latencies(self, x) -> list[PolyLatency]:
        C, _ = self.unpack(x)
        return [PolyLatency(np.maximum(row, 0.0)) for row in C]


@dataclass(frozen=True)
class Halfspace:
    """``normal · x <= offset``."""

    normal: np.ndarray
    offset: float
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not np.any(self.normal != 0):
            raise ValueError("halfspace normal must be nonzero")

    def value(self, x) -> float:
        return float(np.asarray(self.normal, dtype=float) @ np.asarray(x, dtype=float))

    def violation(self, x) -> float:
        return self.value(x) - self.offset

    def satisfied_by(self, x, tol: float = 0.0) -> bool:
        return self.violation(x) <= tol


class EllipsoidState:
    """``{c + B u : |u| <= 1}`` kept in factored form, extended precision.

    The shape matrix ``A = B B^T`` is symmetric positive semidefinite by
    construction, which is the robust form of re-symmetrizing ``A`` after
    every step.
    """

    def __init__(self, center, factor):
        self.center = np.asarray(center, dtype=WORK)
        self.factor = np.asarray(factor, dtype=WORK)
        self.iteration = 0

    @classmethod
    def ball(cls, center, radius: float) -> "EllipsoidState":
        n = len(center)
        return cls(center, np.eye(n, dtype=WORK) * WORK(radius))

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def shape(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def log_volume(self) -> float:
        """Log of the volume up to the dimension-only unit-ball constant."""
        sign, logdet = np.linalg.slogdet(self.factor.astype(float))
        return float(logdet) if sign != 0 else float("-inf")

    def cut(self, normal) -> None:
        """Central cut keeping ``{x : normal · x <= normal · center}``.

        With ``p = B^T a / |B^T a|`` this is the usual update
        ``c' = c - B p / (n + 1)``, ``A' = n²/(n²-1) (A - 2/(n+1) B p p^T B^T)``.
        """
        a = np.asarray(normal, dtype=WORK)
        n = WORK(self.n)
        v = self.factor.T @ a
        norm = np.sqrt(v @ v)
        if not norm > 0:
            raise FloatingPointError("ellipsoid degenerated (zero width along the cut normal)")
        p = v / norm
        Bp = self.factor @ p
        self.center = self.center - Bp / (n + 1)
        scale = n / np.sqrt(n * n - 1)
        self.factor = scale * self.factor + (n / (n + 1) - scale) * np.outer(Bp, p)
        self.iteration += 1

    def center_float(self) -> np.ndarray:
        return self.center.astype(float)


@dataclass
class TraceRecord:
    iteration: int
    provenance: str
    log_volume: float
    queries: int


@dataclass
class InductionResult:
    verdict: str                       # "found" or "infeasible"
    tolls: Optional[np.ndarray]
    queries: int
    iterations: int
    cuts: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    candidate: Optional[np.ndarray] = None
    note: str = ""
    response: Optional[object] = None

    @property
    def found(self) -> bool:
        return self.verdict == "found"


def iteration_cap(n_v: int, U: float, m: int, radius: Optional[float] = None) -> int:
    """``2 n (n + 1) ln(R / r_min)`` with ``R = √n U`` and ``r_min = 1/(4 U² m)``."""
    R = math.sqrt(n_v) * U if radius is None else radius
    r_min = 1.0 / (4.0 * U * U * m)
    return int(math.ceil(2 * n_v * (n_v + 1) * math.log(R / r_min)))


# ---------------------------------------------------------------------------
# The structure the search works over: a network or explicit strategy sets.


class _NetworkStructure:
    def __init__(self, net: Network, support_tol: float):
        self.net = net
        self.m = net.m
        self.k = net.k
        self.total_demand = net.total_demand
        self.support_tol = support_tol

    @property
    def n_strategies(self) -> int:
        return self.m * self.k

    def loads(self, response: Flow) -> np.ndarray:
        return response.aggregate

    def worst_pair(self, costs: np.ndarray, response: Flow):
        """(P, Q, cost(P) - cost(Q)) for the commodity with the largest violation, or None."""
        best = None
        for i in range(self.k):
            found = max_cost_support_path(self.net, costs, response, i, self.support_tol)
            if found is None:
                continue
            P, cP = found
            Q, cQ = min_cost_path(self.net, costs, i)
            if best is None or cP - cQ > best[2]:
                best = (P, Q, cP - cQ)
        return best

    def first_pair(self, costs: np.ndarray, response: Flow, margin: float):
        for i in range(self.k):
            found = max_cost_support_path(self.net, costs, response, i, self.support_tol)
            if found is None:
                continue
            P, cP = found
            Q, cQ = min_cost_path(self.net, costs, i)
            if cP > cQ + margin:
                return P, Q, cP - cQ
        return None

    def decomposition(self, response: Flow):
        return [(i, P, w) for i, P, w in path_decompose(self.net, response, tol=self.support_tol).entries]

    def shortest(self, i: int, costs: np.ndarray):
        return min_cost_path(self.net, costs, i)

    def demand_weighted_min(self, costs: np.ndarray) -> float:
        return sum(c.demand * min_cost_path(self.net, costs, i)[1] for i, c in enumerate(self.net.commodities))

    def max_toll_used_path(self, tolls: np.ndarray, target: Flow):
        best = None
        for i in range(self.k):
            found = max_cost_support_path(self.net, tolls, target, i, self.support_tol)
            if found is not None and (best is None or found[1] > best[1]):
                best = found
        return best


class _StrategyStructure:
    """Explicit strategy sets; responses are ``congestion.Assignment`` objects."""

    def __init__(self, m: int, strategies, demands, support_tol: float):
        self.m = m
        self.k = len(strategies)
        self.strategies = [list(S) for S in strategies]
        self.demands = np.asarray(demands, dtype=float)
        self.total_demand = float(self.demands.sum())
        self.support_tol = support_tol
        self.inc = []
        for S in self.strategies:
            A = np.zeros((len(S), m))
            for j, P in enumerate(S):
                A[j, list(P)] = 1.0
            self.inc.append(A)

    @property
    def n_strategies(self) -> int:
        return sum(len(S) for S in self.strategies)

    def loads(self, response) -> np.ndarray:
        return sum(w @ A for w, A in zip(response.weights, self.inc))

    def _pairs(self, costs, response):
        for i, (w, A) in enumerate(zip(response.weights, self.inc)):
            pc = A @ costs
            used = [j for j in range(len(w)) if w[j] > self.support_tol]
            if not used:
                continue
            p = max(used, key=lambda j: (pc[j], -j))
            q = int(np.argmin(pc))
            yield tuple(self.strategies[i][p]), tuple(self.strategies[i][q]), float(pc[p] - pc[q])

    def worst_pair(self, costs, response):
        best = None
        for P, Q, v in self._pairs(costs, response):
            if best is None or v > best[2]:
                best = (P, Q, v)
        return best

    def first_pair(self, costs, response, margin):
        for P, Q, v in self._pairs(costs, response):
            if v > margin:
                return P, Q, v
        return None

    def decomposition(self, response):
        out = []
        for i, w in enumerate(response.weights):
            for j, x in enumerate(w):
                if x > self.support_tol:
                    out.append((i, tuple(self.strategies[i][j]), float(x)))
        return out

    def shortest(self, i, costs):
        pc = self.inc[i] @ costs
        q = int(np.argmin(pc))
        return tuple(self.strategies[i][q]), float(pc[q])

    def demand_weighted_min(self, costs) -> float:
        return float(sum(d * np.min(A @ costs) for d, A in zip(self.demands, self.inc)))

    def max_toll_used_path(self, tolls, target):
        best = None
        for P, _, _ in self._pairs(tolls, target):
            val = float(sum(tolls[e] for e in P))
            if best is None or val > best[1]:
                best = (P, val)
        return best


# ---------------------------------------------------------------------------
# Separation.


def _candidate_costs(layout: VariableLayout, x: np.ndarray, loads: np.ndarray, with_tolls: bool = True) -> np.ndarray:
    C, t = layout.unpack(x)
    acc = np.zeros(layout.m)
    for j in range(layout.r, -1, -1):
        acc = acc * loads + C[:, j]
    return acc + t if with_tolls else acc


def _path_difference_normal(layout: VariableLayout, P, Q, loads: np.ndarray, tolls_too: bool) -> np.ndarray:
    """Coefficient of each slot in ``cost(P) - cost(Q)`` at edge loads ``loads``."""
    a = np.zeros(layout.n_v)
    for sign, path in ((1.0, P), (-1.0, Q)):
        for e in path:
            for j in range(layout.r + 1):
                a[layout.coef(e, j)] += sign * loads[e] ** j
            if tolls_too:
                a[layout.toll(e)] += sign
    return a


def box_cut(layout: VariableLayout, x: np.ndarray, U: float, toll_bound: float) -> Optional[Halfspace]:
    for i, v in enumerate(x):
        if v < 0:
            a = np.zeros(layout.n_v)
            a[i] = -1.0
            return Halfspace(a, 0.0, "nonnegativity")
    for i, v in enumerate(x):
        top = U if i < layout.n_coef else toll_bound
        if v > top:
            a = np.zeros(layout.n_v)
            a[i] = 1.0
            return Halfspace(a, float(top), "box")
    return None


def slope_cut(layout: VariableLayout, x: np.ndarray, U: float) -> Optional[Halfspace]:
    for e in range(layout.m):
        i = layout.coef(e, 1)
        if x[i] < 1.0 / U:
            a = np.zeros(layout.n_v)
            a[i] = -1.0
            return Halfspace(a, -1.0 / U, "slope")
    return None


def separation_case1(layout: VariableLayout, structure, x: np.ndarray, target, margin: float = ETA) -> Optional[Halfspace]:
    """Cut from a target path pair that is not an equilibrium pair for the candidate.

    The cut ``l_P(f*) + τ(P) <= l_Q(f*) + τ(Q)`` is linear in both latency
    coefficients and tolls.  None means the target is an equilibrium of the
    candidate game (up to ``margin``).
    """
    loads = structure.loads(target)
    costs = _candidate_costs(layout, x, loads)
    pair = structure.first_pair(costs, target, margin)
    if pair is None:
        return None
    P, Q, _ = pair
    a = _path_difference_normal(layout, P, Q, loads, tolls_too=True)
    return Halfspace(a, margin / 2, "case1")


def separation_case2(layout: VariableLayout, structure, x: np.ndarray, response, margin: float = ETA) -> Optional[Halfspace]:
    """Cut from the oracle response: only the latency slots are variables, the candidate tolls are constants."""
    loads = structure.loads(response)
    costs = _candidate_costs(layout, x, loads)
    pair = structure.first_pair(costs, response, margin)
    if pair is None:
        return None
    P, Q, _ = pair
    return _case2_halfspace(layout, x, P, Q, loads, margin / 2)


def _case2_halfspace(layout, x, P, Q, loads, slack) -> Halfspace:
    _, t = layout.unpack(x)
    a = _path_difference_normal(layout, P, Q, loads, tolls_too=False)
    offset = float(sum(t[e] for e in Q) - sum(t[e] for e in P)) + slack
    return Halfspace(a, offset, "case2")


def approx_cut(layout: VariableLayout, structure, x: np.ndarray, response, eps: float) -> Optional[Halfspace]:
    """Weighted response cut ``x_R (l_R(g) + τ(R) - l_Q(g) - τ(Q)) <= ε Σd`` on the latency slots."""
    loads = structure.loads(response)
    costs = _candidate_costs(layout, x, loads)
    budget = eps * structure.total_demand
    _, t = layout.unpack(x)
    best = None
    for i, R, w in structure.decomposition(response):
        Q, D = structure.shortest(i, costs)
        excess = w * (float(sum(costs[e] for e in R)) - D)
        if excess > budget and (best is None or excess > best[0]):
            best = (excess, R, Q, w)
    if best is None:
        return None
    _, R, Q, w = best
    a = w * _path_difference_normal(layout, R, Q, loads, tolls_too=False)
    offset = budget - w * float(sum(t[e] for e in R) - sum(t[e] for e in Q))
    return Halfspace(a, offset, "approx-case")


# ---------------------------------------------------------------------------
# Toll constraint separation oracles.


class UntollableEdges:
    """``τ_e = 0`` for every ``e`` in ``F``."""

    def __init__(self, edges: Sequence[int], tol: float = 1e-10):
        self.edges = sorted(set(edges))
        self.tol = tol

    def __call__(self, layout: VariableLayout, tolls: np.ndarray, structure, target) -> Optional[Halfspace]:
        for e in self.edges:
            if tolls[e] > self.tol:
                a = np.zeros(layout.n_v)
                a[layout.toll(e)] = 1.0
                return Halfspace(a, 0.0, "constraint-set")
        return None

    def project(self, tolls: np.ndarray) -> np.ndarray:
        out = np.array(tolls, dtype=float)
        out[self.edges] = 0.0
        return out


class TollBudget:
    """Total toll on every target-carrying path is at most ``B``.

    Separated by a longest-path computation over the acyclic target support.
    """

    def __init__(self, budget: float, tol: float = 1e-8):
        self.budget = budget
        self.tol = tol

    def __call__(self, layout: VariableLayout, tolls: np.ndarray, structure, target) -> Optional[Halfspace]:
        found = structure.max_toll_used_path(np.asarray(tolls, float), target)
        if found is None or found[1] <= self.budget + self.tol:
            return None
        a = np.zeros(layout.n_v)
        for e in found[0]:
            a[layout.toll(e)] += 1.0
        return Halfspace(a, float(self.budget), "constraint-set")

    def project(self, tolls: np.ndarray) -> np.ndarray:
        return np.array(tolls, dtype=float)


# ---------------------------------------------------------------------------
# The search loop.


def _run(
    structure,
    layout: VariableLayout,
    target,
    oracle,
    U: float,
    *,
    mode: str,
    eps: float = 0.0,
    accept_tol: float = 1e-7,
    toll_bound: Optional[float] = None,
    constraints: Sequence[Callable] = (),
    max_iterations: Optional[int] = None,
    on_cut: Optional[Callable[[Halfspace], None]] = None,
) -> InductionResult:
    toll_bound = U if toll_bound is None else toll_bound
    n = layout.n_v
    upper = np.array([U] * layout.n_coef + [toll_bound] * layout.m)
    radius = math.sqrt(n) * max(U, toll_bound)
    state = EllipsoidState.ball(upper / 2, radius)
    cap = iteration_cap(n, U, layout.m, radius) if max_iterations is None else max_iterations
    target_loads = structure.loads(target)
    start_queries = oracle.count
    cuts: list[Halfspace] = []
    trace: list[TraceRecord] = []

    def record(h: Halfspace):
        cuts.append(h)
        if on_cut is not None:
            on_cut(h)
        try:
            state.cut(h.normal)
        except FloatingPointError:
            return False
        trace.append(TraceRecord(state.iteration, h.provenance, state.log_volume(), oracle.count - start_queries))

    for _ in range(cap):
        x = state.center_float()
        C, tolls = layout.unpack(x)
        h = box_cut(layout, x, U, toll_bound) or slope_cut(layout, x, U)
        if h is None:
            for con in constraints:
                h = con(layout, tolls, structure, target)
                if h is not None:
                    break
        if h is None:
            h = separation_case1(layout, structure, x, target)
        if h is not None:
            if record(h) is False:
                break
            continue

        query_tolls = tolls
        for con in constraints:
            if hasattr(con, "project"):
                query_tolls = con.project(query_tolls)
        g = oracle.query(query_tolls)
        loads = structure.loads(g)
        if mode == "linear":
            if float(np.max(np.abs(loads - target_loads))) <= accept_tol:
                return InductionResult("found", query_tolls, oracle.count - start_queries, state.iteration,
                                       cuts, trace, x, response=g)
            h = separation_case2(layout, structure, x, g)
            if h is None:
                # response and target are both (near) candidate equilibria: cut on the largest violation
                pair = structure.worst_pair(_candidate_costs(layout, x, loads), g)
                if pair is None or pair[2] <= 0:
                    return InductionResult("infeasible", None, oracle.count - start_queries, state.iteration,
                                           cuts, trace, x, note="stalled: response is a candidate equilibrium")
                h = _case2_halfspace(layout, x, pair[0], pair[1], loads, pair[2] / 2)
        else:
            costs = _candidate_costs(layout, x, loads)
            slack = float(loads @ costs - structure.demand_weighted_min(costs))
            if slack <= structure.n_strategies * eps * structure.total_demand:
                return InductionResult("found", query_tolls, oracle.count - start_queries, state.iteration,
                                       cuts, trace, x, response=g)
            h = approx_cut(layout, structure, x, g, eps)
            if h is None:
                return InductionResult("infeasible", None, oracle.count - start_queries, state.iteration,
                                       cuts, trace, x, note="no path with excess above eps*sum(d)")
        if record(h) is False:
            break
    else:
        return InductionResult("infeasible", None, oracle.count - start_queries, state.iteration, cuts, trace,
                               state.center_float(), note="iteration cap reached")
    return InductionResult("infeasible", None, oracle.count - start_queries, state.iteration, cuts, trace,
                           state.center_float(), note="ellipsoid degenerated below working precision")


def induce_tolls_linear(
    net: Network,
    target: Flow,
    oracle,
    U: float,
    *,
    accept_tol: float = 1e-7,
    toll_bound: Optional[float] = None,
    max_iterations: Optional[int] = None,
    on_cut=None,
) -> InductionResult:
    """Tolls inducing ``target`` in a game with hidden standard affine latencies."""
    structure = _NetworkStructure(net, support_tol=1e-10 * max(1.0, net.total_demand))
    return _run(structure, VariableLayout(net.m, 1), target, oracle, U, mode="linear", accept_tol=accept_tol,
                toll_bound=toll_bound, max_iterations=max_iterations, on_cut=on_cut)


def approx_oracle_eps(delta: float, K: float, n_strategies: int, total_demand: float, floor: float = 1e-14) -> tuple[float, float]:
    """``ε = δ² / (K m k Σd)`` and the value actually used after flooring."""
    eps = delta * delta / (K * n_strategies * total_demand)
    return eps, max(eps, floor)


def induce_tolls_approx(
    net: Network,
    target: Flow,
    oracle,
    U: float,
    r: int,
    delta: float,
    *,
    toll_bound: Optional[float] = None,
    max_iterations: Optional[int] = None,
    on_cut=None,
) -> InductionResult:
    """Tolls whose equilibrium is within ``2δ`` of ``target`` for hidden standard degree-``r`` latencies.

    Sets ``oracle.eps`` to ``δ² / (K m k Σd)``.
    """
    K = k_constant(r, U, net.total_demand)
    eps, used = approx_oracle_eps(delta, K, net.m * net.k, net.total_demand)
    oracle.eps = used
    structure = _NetworkStructure(net, support_tol=1e-12 * max(1.0, net.total_demand))
    result = _run(structure, VariableLayout(net.m, r), target, oracle, U, mode="approx", eps=used,
                  toll_bound=toll_bound, max_iterations=max_iterations, on_cut=on_cut)
    if used != eps:
        result.note = (result.note + f"; oracle eps floored from {eps:.3g} to {used:.3g}").lstrip("; ")
    return result


def induce_tolls_constrained(
    net: Network,
    target: Flow,
    oracle,
    U: float,
    constraints: Sequence[Callable],
    *,
    accept_tol: float = 1e-7,
    toll_bound: Optional[float] = None,
    max_iterations: Optional[int] = None,
    on_cut=None,
) -> InductionResult:
    """As ``induce_tolls_linear``, checking the toll constraint oracles before anything else."""
    structure = _NetworkStructure(net, support_tol=1e-10 * max(1.0, net.total_demand))
    return _run(structure, VariableLayout(net.m, 1), target, oracle, U, mode="linear", accept_tol=accept_tol,
                toll_bound=toll_bound, constraints=constraints, max_iterations=max_iterations, on_cut=on_cut)


def induce_assignment_congestion(
    m: int,
    strategies,
    demands,
    target,
    oracle,
    U: float,
    *,
    accept_tol: float = 1e-7,
    toll_bound: Optional[float] = None,
    max_iterations: Optional[int] = None,
    on_cut=None,
) -> InductionResult:
    """Tolls inducing a target assignment of a congestion game with explicit strategy sets."""
    if any(len(S) == 0 for S in strategies):
        raise ValueError("empty strategy set")
    structure = _StrategyStructure(m, strategies, demands, support_tol=1e-10 * max(1.0, float(np.sum(demands))))
    return _run(structure, VariableLayout(m, 1), target, oracle, U, mode="linear", accept_tol=accept_tol,
                toll_bound=toll_bound, max_iterations=max_iterations, on_cut=on_cut)
