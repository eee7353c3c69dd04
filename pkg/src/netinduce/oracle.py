"""Counted query oracles around a hidden routing game.

Induction algorithms get an oracle and a ``Network`` (graph plus commodities)
and nothing else: the latencies stay in ``_hidden``.  Test harnesses may read
``_hidden`` to check cuts and intervals against the truth.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Commodity, Flow, Network, RoutingGame, node_imbalance, validate_flow
from .equilibrium import (
    epsilon_to_linf_bound,
    is_parallel_links,
    solve_epsilon_equilibrium,
    solve_exact_parallel_links,
    total_slack,
)
from .generators import parallel_links
from .latency import PolyLatency, k_constant


class QueryRejected(ValueError):
    """Raised for inputs the oracle refuses; rejected queries are not counted."""


def digest(arr) -> str:
    a = np.ascontiguousarray(np.asarray(arr, dtype=float))
    return hashlib.sha256(a.tobytes()).hexdigest()[:16]


@dataclass
class QueryLog:
    entries: list = field(default_factory=list)   # (kind, input digest, response digest)

    @property
    def count(self) -> int:
        return len(self.entries)

    def append(self, kind: str, query, response):
        self.entries.append((kind, digest(query), digest(response)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "kind", "input_digest", "response_digest", "cumulative"])
        for idx, (kind, qd, rd) in enumerate(self.entries):
            w.writerow([idx, kind, qd, rd, idx + 1])
        return buf.getvalue()


def game_constant(game: RoutingGame, U: float) -> float:
    return k_constant(max(game.degree, 1), U, game.total_demand)


class TollOracle:
    """Toll query → ε-equilibrium of the hidden game (exact water-filling when ``eps == 0``)."""

    def __init__(self, hidden: RoutingGame, eps: float = 1e-12, research: bool = False, U: Optional[float] = None):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        if eps == 0 and not (is_parallel_links(hidden) and hidden.degree <= 1):
            raise ValueError("exact mode is only available for affine parallel-link games")
        self._hidden = hidden
        self.eps = eps
        self.research = research
        self.U = U
        self.log = QueryLog()
        self.history: list[tuple[np.ndarray, Flow]] = []

    @property
    def network(self) -> Network:
        return self._hidden.network

    @property
    def count(self) -> int:
        return self.log.count

    def _check(self, tolls) -> np.ndarray:
        t = np.asarray(tolls, dtype=float)
        if t.shape != (self._hidden.m,):
            raise ValueError(f"toll vector has shape {t.shape}, expected ({self._hidden.m},)")
        if not self.research and np.any(t < 0):
            raise QueryRejected("negative tolls need an oracle in research mode")
        return t

    def _solve(self, t: np.ndarray) -> Flow:
        if self.eps == 0:
            return solve_exact_parallel_links(self._hidden, t)
        return solve_epsilon_equilibrium(self._hidden, t, self.eps).flow

    def query(self, tolls) -> Flow:
        t = self._check(tolls)
        f = self._solve(t)
        self.log.append("toll", t, f.per_commodity)
        self.history.append((t.copy(), f))
        return f

    def verify(self, tolls) -> Flow:
        """Uncounted confirming solve, for harness-side checks only."""
        return self._solve(self._check(tolls))

    def default_sign_tol(self, U: Optional[float] = None) -> float:
        U = U if U is not None else (self.U if self.U is not None else 1.0)
        K = game_constant(self._hidden, U)
        return max(1e-6, 2 * epsilon_to_linf_bound(K, self.eps, self._hidden.total_demand))

    def sign_query(self, tolls, target: Flow, tol: Optional[float] = None) -> np.ndarray:
        """Per-edge sign of ``f(τ) - f*`` with a dead band: ``+1`` over, ``-1`` under, 0 within ``tol``."""
        tol = self.default_sign_tol() if tol is None else tol
        f = self.query(tolls)
        return sign_vector(f.aggregate - target.aggregate, tol)


def sign_vector(diff: np.ndarray, tol: float) -> np.ndarray:
    out = np.zeros(len(diff), dtype=int)
    out[diff > tol] = 1
    out[diff < -tol] = -1
    return out


class StackelbergOracle:
    """Stackelberg query: the leader fixes ``g``; the rest of the demand equilibrates on ``x ↦ l_e(x + g_e)``."""

    def __init__(self, hidden: RoutingGame, alpha: float, eps: float = 1e-13):
        if hidden.k != 1:
            raise ValueError("Stackelberg routing is single-commodity")
        if not 0 <= alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        self._hidden = hidden
        self.alpha = alpha
        self.eps = eps
        self.log = QueryLog()

    @property
    def network(self) -> Network:
        return self._hidden.network

    @property
    def count(self) -> int:
        return self.log.count

    @property
    def demand(self) -> float:
        return self._hidden.commodities[0].demand

    def _solve(self, g: Flow) -> Flow:
        game = self._hidden
        gv = g.aggregate
        if np.any(gv < -1e-12):
            raise QueryRejected("Stackelberg flow has negative entries")
        gv = np.maximum(gv, 0.0)
        value = Flow(gv).value(game)
        tol = 1e-9 * max(1.0, game.total_demand)
        # the leader's flow may have any value up to alpha*d; check conservation against that value
        com = game.commodities[0]
        for v, bal in node_imbalance(game.graph, gv).items():
            want = value if v == com.source else -value if v == com.sink else 0.0
            if abs(bal - want) > tol:
                raise QueryRejected(f"Stackelberg flow violates conservation at {v!r}")
        if value > self.alpha * com.demand + tol:
            raise QueryRejected(f"Stackelberg flow value {value:g} exceeds alpha*d = {self.alpha * com.demand:g}")
        residual = com.demand - value
        if residual <= tol:
            return Flow.zeros(1, game.m)
        shifted = tuple(l.shifted(x) for l, x in zip(game.latencies, gv))
        sub = RoutingGame(game.graph, (Commodity(com.source, com.sink, residual),), shifted)
        return solve_epsilon_equilibrium(sub, None, self.eps).flow

    def query(self, g) -> Flow:
        g = g if isinstance(g, Flow) else Flow.single(g)
        f = self._solve(g)
        self.log.append("stackelberg", g.per_commodity, f.per_commodity)
        return f

    def verify(self, g) -> Flow:
        g = g if isinstance(g, Flow) else Flow.single(g)
        return self._solve(g)


def adversary_game(perm: dict, m: int, demand: Optional[float] = None) -> RoutingGame:
    """``m`` parallel links, link ``i`` with delay ``x/m + 2(perm[i] - 1)``."""
    lats = [PolyLatency((2.0 * (perm[i] - 1), 1.0 / m)) for i in range(m)]
    return parallel_links(lats, float(m) if demand is None else demand)


class AdversaryOracle:
    """Adaptive toll oracle that commits to the hidden permutation one link per query."""

    def __init__(self, m: int):
        if m < 2:
            raise ValueError("adversary needs at least two links")
        self.m = m
        self.assigned: dict[int, int] = {}
        self.log = QueryLog()
        self.history: list[tuple[np.ndarray, Flow]] = []
        self.research = False
        self.eps = 0.0
        self.U = float(2 * m)

    @property
    def network(self) -> Network:
        return adversary_game({i: i + 1 for i in range(self.m)}, self.m).network

    @property
    def count(self) -> int:
        return self.log.count

    def target(self) -> Flow:
        return Flow.single(np.ones(self.m))

    def _completion(self) -> dict:
        perm = dict(self.assigned)
        rank = len(perm)
        for e in range(self.m):
            if e not in perm:
                rank += 1
                perm[e] = rank
        return perm

    def query(self, tolls) -> Flow:
        t = np.asarray(tolls, dtype=float)
        if t.shape != (self.m,):
            raise ValueError(f"toll vector has shape {t.shape}, expected ({self.m},)")
        free = [e for e in range(self.m) if e not in self.assigned]
        if free:
            lowest = min(t[e] for e in free)
            pick = min(e for e in free if t[e] == lowest)
            self.assigned[pick] = len(self.assigned) + 1
        f = solve_exact_parallel_links(adversary_game(self._completion(), self.m), t)
        self.log.append("adversary", t, f.per_commodity)
        self.history.append((t.copy(), f))
        return f

    def sign_query(self, tolls, target: Flow, tol: float = 1e-9) -> np.ndarray:
        f = self.query(tolls)
        return sign_vector(f.aggregate - target.aggregate, tol)

    def verify(self, tolls) -> Flow:
        return solve_exact_parallel_links(adversary_game(self._completion(), self.m), np.asarray(tolls, float))

    def hidden_game(self) -> RoutingGame:
        return adversary_game(self._completion(), self.m)


@dataclass
class ConsistencyReport:
    permutation: dict
    mismatches: list

    @property
    def consistent(self) -> bool:
        return not self.mismatches


def adversary_consistency(state: AdversaryOracle) -> ConsistencyReport:
    """Fix one permutation extending the committed ranks and replay every logged query against it."""
    if not state.history:
        raise ValueError("no queries to replay")
    sigma = state._completion()
    game = adversary_game(sigma, state.m)
    bad = []
    for j, (t, f) in enumerate(state.history):
        again = solve_exact_parallel_links(game, t)
        if not np.array_equal(again.per_commodity, f.per_commodity):
            bad.append(j)
    return ConsistencyReport(sigma, bad)


def check_response(game: RoutingGame, tolls, f: Flow, eps: float) -> list[str]:
    """Feasibility plus gap-certificate check for one oracle response."""
    problems = list(validate_flow(game, f).violations)
    slack = total_slack(game, tolls, f)
    if slack > eps * game.total_demand + 1e-12 * max(1.0, game.total_demand):
        problems.append(f"slack {slack:.3g} exceeds eps*sum(d)")
    return problems
