"""Nonatomic congestion games with explicit strategy sets.

A player type ``i`` splits demand ``d_i`` over its listed strategies, each a
set of resources.  Network routing is the special case where strategies are
paths, so the same equilibrium machinery applies with no column generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LatencyTable
from .equilibrium import _equilibrate, _PathState, _polish_linear
from .latency import PolyLatency
from .oracle import QueryLog, QueryRejected


@dataclass(frozen=True)
class CongestionGame(LatencyTable):
    latencies: tuple[PolyLatency, ...]
    strategies: tuple[tuple[tuple[int, ...], ...], ...]
    demand_list: tuple[float, ...]

    def __post_init__(self):
        lats = tuple(l if isinstance(l, PolyLatency) else PolyLatency(l) for l in self.latencies)
        object.__setattr__(self, "latencies", lats)
        strategies = tuple(tuple(tuple(sorted(set(P))) for P in S) for S in self.strategies)
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "demand_list", tuple(float(d) for d in self.demand_list))
        if len(strategies) != len(self.demand_list):
            raise ValueError("one demand per player type is required")
        for i, S in enumerate(strategies):
            if not S:
                raise ValueError(f"player type {i} has an empty strategy set")
            for P in S:
                if any(not 0 <= r < len(lats) for r in P):
                    raise ValueError(f"strategy {P} of type {i} uses an unknown resource")
        if any(d <= 0 for d in self.demand_list):
            raise ValueError("demands must be positive")

    @property
    def m(self) -> int:
        return len(self.latencies)

    @property
    def k(self) -> int:
        return len(self.strategies)

    @property
    def demands(self) -> np.ndarray:
        return np.array(self.demand_list)

    @property
    def total_demand(self) -> float:
        return float(sum(self.demand_list))

    @property
    def n_strategies(self) -> int:
        return sum(len(S) for S in self.strategies)

    def incidence(self, i: int) -> np.ndarray:
        """Rows are strategies of type ``i``, columns resources."""
        A = np.zeros((len(self.strategies[i]), self.m))
        for j, P in enumerate(self.strategies[i]):
            A[j, list(P)] = 1.0
        return A


@dataclass(frozen=True)
class Assignment:
    """Strategy weights per player type."""

    weights: tuple[np.ndarray, ...]

    def loads(self, game: CongestionGame) -> np.ndarray:
        out = np.zeros(game.m)
        for i, w in enumerate(self.weights):
            out += w @ game.incidence(i)
        return out


def assignment_slack(game: CongestionGame, tolls, a: Assignment) -> float:
    t = np.zeros(game.m) if tolls is None else np.asarray(tolls, float)
    loads = a.loads(game)
    c = game.edge_costs(loads, t)
    best = sum(d * float(np.min(game.incidence(i) @ c)) for i, d in enumerate(game.demand_list))
    return float(loads @ c - best)


def solve_congestion_equilibrium(game: CongestionGame, tolls=None, eps: float = 1e-12, max_rounds: int = 10_000) -> Assignment:
    t = np.zeros(game.m) if tolls is None else np.asarray(tolls, float)
    state = _PathState(game)
    c0 = game.edge_costs(np.zeros(game.m), t)
    for i, S in enumerate(game.strategies):
        costs = game.incidence(i) @ c0
        best = int(np.argmin(costs))
        for j, P in enumerate(S):
            state.add(i, P, game.demand_list[i] if j == best else 0.0)
    target = eps * game.total_demand
    best, stalled = None, 0
    for _ in range(max_rounds):
        _equilibrate(state, t, sweeps=25, spread_tol=max(1e-3 * eps, 1e-15))
        if game.degree <= 1:
            polished = _polish_linear(state, t)
            if polished is not None:
                state.x = polished
                state.recompute()
        a = _state_assignment(game, state)
        slack = assignment_slack(game, t, a)
        stalled = stalled + 1 if best is not None and slack >= 0.999 * best[0] else 0
        if best is None or slack < best[0]:
            best = (slack, a)
        if slack <= 1e-3 * target or (slack <= target and stalled >= 5) or stalled >= 100:
            break
    return best[1]


def _state_assignment(game: CongestionGame, state: _PathState) -> Assignment:
    out = []
    for i, S in enumerate(game.strategies):
        w = np.zeros(len(S))
        for P, v in zip(state.paths[i], state.x[i]):
            w[S.index(P)] += max(v, 0.0)
        out.append(w)
    return Assignment(tuple(out))


class CongestionOracle:
    """Toll query → ε-equilibrium assignment of a hidden congestion game."""

    def __init__(self, hidden: CongestionGame, eps: float = 1e-12):
        self._hidden = hidden
        self.eps = eps
        self.log = QueryLog()

    @property
    def strategies(self):
        return self._hidden.strategies

    @property
    def demands(self) -> np.ndarray:
        return self._hidden.demands

    @property
    def m(self) -> int:
        return self._hidden.m

    @property
    def count(self) -> int:
        return self.log.count

    def query(self, tolls) -> Assignment:
        t = np.asarray(tolls, dtype=float)
        if t.shape != (self._hidden.m,):
            raise ValueError(f"toll vector has shape {t.shape}, expected ({self._hidden.m},)")
        if np.any(t < 0):
            raise QueryRejected("tolls must be nonnegative")
        a = solve_congestion_equilibrium(self._hidden, t, self.eps)
        self.log.append("toll", t, np.concatenate(a.weights))
        return a

    def verify(self, tolls) -> Assignment:
        return solve_congestion_equilibrium(self._hidden, np.asarray(tolls, float), self.eps)

