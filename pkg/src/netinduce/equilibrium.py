"""Ground-truth equilibrium computation.

The general solver works in path space: each commodity keeps a small set of
paths (new ones enter as shortest paths under the current costs) and flow is
moved from expensive paths onto the cheapest one by projected Newton steps.
The stopping rule is the slack

    Σ_e f_e (l_e(f_e) + τ_e) - Σ_i d_i D^i

which is also the conditional-gradient duality gap, so every returned flow
carries its own ε-equilibrium certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Flow, RoutingGame, acyclic_reduce, min_cost_path, validate_flow

MAX_ROUNDS = 100_000


@dataclass(frozen=True)
class EquilibriumResult:
    flow: Flow
    gap: float          # slack per unit of total demand
    iterations: int
    converged: bool = True


def _tolls(game: RoutingGame, tolls) -> np.ndarray:
    if tolls is None:
        return np.zeros(game.m)
    t = np.asarray(tolls, dtype=float)
    if t.shape != (game.m,):
        raise ValueError(f"toll vector has shape {t.shape}, expected ({game.m},)")
    return t


def beckmann_potential(game: RoutingGame, tolls, f: Flow) -> float:
    """``Σ_e ∫_0^{f_e} (l_e(x) + τ_e) dx``."""
    t = _tolls(game, tolls)
    x = np.maximum(f.aggregate, 0.0)
    return float(sum(l.integral(x[e]) for e, l in enumerate(game.latencies)) + t @ x)


def total_slack(game: RoutingGame, tolls, f: Flow) -> float:
    """``Σ_e f_e l^τ_e(f_e) - Σ_i d_i D^i(l^τ, f)``; nonnegative for feasible f."""
    t = _tolls(game, tolls)
    x = np.maximum(f.aggregate, 0.0)
    c = game.edge_costs(x, t)
    dist = sum(com.demand * min_cost_path(game, c, i)[1] for i, com in enumerate(game.commodities))
    return float(x @ c - dist)


def equilibrium_gap(game: RoutingGame, tolls, f: Flow) -> float:
    """The ε for which ``f`` is an ε-equilibrium (slack per unit demand)."""
    return total_slack(game, tolls, f) / game.total_demand


def epsilon_to_linf_bound(K: float, eps: float, total_demand: float) -> float:
    """Distance bound ``√(K ε Σd)`` between an ε-equilibrium and the true equilibrium."""
    if K < 0 or eps < 0 or total_demand < 0:
        raise ValueError("epsilon_to_linf_bound needs nonnegative inputs")
    return math.sqrt(K * eps * total_demand)


class _PathState:
    """Path flows for every commodity plus the aggregate edge vector."""

    def __init__(self, game: RoutingGame):
        self.game = game
        self.paths: list[list[tuple]] = [[] for _ in range(game.k)]
        self.rows: list[list[np.ndarray]] = [[] for _ in range(game.k)]
        self.x: list[list[float]] = [[] for _ in range(game.k)]
        self.f = np.zeros(game.m)

    def add(self, i: int, path: tuple, amount: float = 0.0) -> int:
        if path in self.paths[i]:
            j = self.paths[i].index(path)
        else:
            row = np.zeros(self.game.m)
            row[list(path)] = 1.0
            self.paths[i].append(path)
            self.rows[i].append(row)
            self.x[i].append(0.0)
            j = len(self.paths[i]) - 1
        self.x[i][j] += amount
        self.f += amount * self.rows[i][j]
        return j

    def shift(self, i: int, p: int, q: int, amount: float):
        self.x[i][p] -= amount
        self.x[i][q] += amount
        self.f += amount * (self.rows[i][q] - self.rows[i][p])

    def prune(self):
        for i in range(len(self.paths)):
            keep = [j for j, v in enumerate(self.x[i]) if v > 0.0]
            self.paths[i] = [self.paths[i][j] for j in keep]
            self.rows[i] = [self.rows[i][j] for j in keep]
            self.x[i] = [self.x[i][j] for j in keep]

    def recompute(self):
        f = np.zeros(self.game.m)
        for i in range(len(self.paths)):
            for row, v in zip(self.rows[i], self.x[i]):
                f += v * row
        self.f = f

    def flow(self) -> Flow:
        out = np.zeros((self.game.k, self.game.m))
        for i in range(self.game.k):
            for row, v in zip(self.rows[i], self.x[i]):
                out[i] += v * row
        return Flow(np.maximum(out, 0.0))


def _equilibrate(state: _PathState, tolls: np.ndarray, sweeps: int, spread_tol: float):
    """Gauss-Seidel sweeps of Newton path shifts toward each commodity's cheapest path."""
    game = state.game
    for _ in range(sweeps):
        worst = 0.0
        for i in range(game.k):
            if len(state.paths[i]) < 2:
                continue
            c = game.edge_costs(state.f, tolls)
            pc = np.array([row @ c for row in state.rows[i]])
            q = int(np.argmin(pc))
            for p in np.argsort(-pc):
                p = int(p)
                if p == q or state.x[i][p] <= 0.0:
                    continue
                c = game.edge_costs(state.f, tolls)
                diff = state.rows[i][p] @ c - state.rows[i][q] @ c
                if diff <= 0.0:
                    continue
                worst = max(worst, diff)
                sym = np.abs(state.rows[i][p] - state.rows[i][q])
                slope = sym @ game.edge_slopes(state.f)
                step = state.x[i][p] if slope <= 0.0 else min(state.x[i][p], diff / slope)
                state.shift(i, p, q, step)
                if state.x[i][p] < 1e-300:
                    state.x[i][p] = 0.0
        if worst <= spread_tol:
            break


def _polish_linear(state: _PathState, tolls: np.ndarray) -> Optional[list[list[float]]]:
    """Solve the equal-cost conditions on the current active paths (linear latencies only)."""
    game = state.game
    C = game.coefficient_matrix
    a = C[:, 1] if C.shape[1] > 1 else np.zeros(game.m)
    b = C[:, 0] + tolls
    index = []
    for i in range(game.k):
        for j, v in enumerate(state.x[i]):
            if v > 0.0:
                index.append((i, j))
    n = len(index)
    if n == 0:
        return None
    R = np.array([state.rows[i][j] for i, j in index])
    # unknowns: path flows then one cost level per commodity
    A = np.zeros((n + game.k, n + game.k))
    rhs = np.zeros(n + game.k)
    A[:n, :n] = R @ (a[:, None] * R.T)
    for row, (i, _) in enumerate(index):
        A[row, n + i] = -1.0
        A[n + i, row] = 1.0
    rhs[:n] = -(R @ b)
    rhs[n:] = game.demands
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    x = sol[:n]
    if np.any(x < -1e-12 * max(1.0, game.total_demand)):
        return None
    out = [list(v) for v in state.x]
    for (i, j), v in zip(index, x):
        out[i][j] = max(float(v), 0.0)
    return out


def _is_linear(game: RoutingGame) -> bool:
    return game.degree <= 1


def solve_epsilon_equilibrium(
    game: RoutingGame,
    tolls=None,
    eps: float = 1e-9,
    *,
    start: str = "shortest",
    rng: Optional[np.random.Generator] = None,
    max_rounds: int = MAX_ROUNDS,
) -> EquilibriumResult:
    """Acyclic ε-equilibrium of ``game`` under ``tolls`` with a certified slack.

    ``start="random"`` seeds every commodity with several random paths (needs
    ``rng``); the returned aggregate is the same up to the closeness bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = _tolls(game, tolls)
    target = eps * game.total_demand
    state = _PathState(game)
    c0 = game.edge_costs(np.zeros(game.m), t)
    for i, com in enumerate(game.commodities):
        if start == "random":
            if rng is None:
                raise ValueError("random start needs an rng")
            weights = rng.dirichlet(np.ones(3))
            for w in weights:
                noise = c0 + rng.exponential(1.0, size=game.m)
                path, _ = min_cost_path(game, np.maximum(noise, 0.0), i)
                state.add(i, path, com.demand * float(w))
        else:
            path, _ = min_cost_path(game, c0, i)
            state.add(i, path, com.demand)

    best = None
    since_best = 0
    rounds = 0
    linear = _is_linear(game)
    while rounds < max_rounds:
        rounds += 1
        c = game.edge_costs(state.f, t)
        dist = 0.0
        for i, com in enumerate(game.commodities):
            path, cost = min_cost_path(game, c, i)
            dist += com.demand * cost
            state.add(i, path, 0.0)
        slack = float(state.f @ c - dist)
        if best is None or slack < 0.999 * best[0]:
            since_best = 0
        else:
            since_best += 1
        if best is None or slack < best[0]:
            best = (slack, [list(v) for v in state.x], [list(p) for p in state.paths], [list(r) for r in state.rows])
        # finish well inside the budget so downstream distance bounds have room;
        # a stalled run inside the budget is at the floating-point floor
        if slack <= 1e-3 * target or (slack <= target and since_best >= 10) or since_best >= 200:
            break
        spread = max(1e-3 * target / game.total_demand, 1e-15)
        _equilibrate(state, t, sweeps=25, spread_tol=spread)
        if linear and rounds % 3 == 0:
            polished = _polish_linear(state, t)
            if polished is not None:
                state.x = polished
                state.recompute()
        state.prune()
        state.recompute()

    slack, xs, paths, rows = best
    state.x, state.paths, state.rows = xs, paths, rows
    state.recompute()
    flow = acyclic_reduce(game, state.flow())
    gap = max(total_slack(game, t, flow), 0.0) / game.total_demand
    return EquilibriumResult(flow=flow, gap=gap, iterations=rounds, converged=gap <= eps)


def is_parallel_links(game: RoutingGame) -> bool:
    if game.k != 1:
        return False
    s, t = game.commodities[0].source, game.commodities[0].sink
    return all(u == s and v == t for u, v in game.graph.edges)


def solve_exact_parallel_links(game: RoutingGame, tolls=None, demand: Optional[float] = None) -> Flow:
    """Exact equilibrium on parallel ``s→t`` links with affine latencies, by water-filling.

    The common cost level λ solves ``Σ_e max(0, (λ - b_e - τ_e)/a_e) = d``.
    """
    if not is_parallel_links(game):
        raise ValueError("exact solver needs a single commodity on parallel s-t links")
    if game.degree > 1:
        raise ValueError("exact solver needs affine latencies")
    C = game.coefficient_matrix
    if C.shape[1] < 2 or np.any(C[:, 1] <= 0):
        raise ValueError("exact solver needs strictly increasing latencies")
    a = C[:, 1]
    base = C[:, 0] + _tolls(game, tolls)
    d = game.commodities[0].demand if demand is None else demand
    order = np.argsort(base, kind="stable")
    # add links in order of intercept until the next intercept is above the level
    inv_a = 0.0
    weighted = 0.0
    level = base[order[0]]
    for pos, e in enumerate(order):
        inv_a += 1.0 / a[e]
        weighted += base[e] / a[e]
        level = (d + weighted) / inv_a
        if pos + 1 == len(order) or level <= base[order[pos + 1]]:
            break
    f = np.maximum((level - base) / a, 0.0)
    # remove the rounding drift so the demand is met exactly on the support
    support = f > 0
    f[support] += (d - f.sum()) / support.sum()
    return Flow.single(f)


def assert_certified(game: RoutingGame, tolls, result: EquilibriumResult, eps: float):
    """Raise if ``result`` is not a feasible ε-equilibrium."""
    report = validate_flow(game, result.flow)
    if not report.feasible:
        raise AssertionError("; ".join(report.violations))
    slack = total_slack(game, tolls, result.flow)
    if slack > eps * game.total_demand:
        raise AssertionError(f"slack {slack:.3g} exceeds {eps * game.total_demand:.3g}")
