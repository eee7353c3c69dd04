"""Experiment drivers: query-count benchmarks and the adversary lower-bound runs."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Commodity, Flow, RoutingGame, enumerate_paths
from .ellipsoid import induce_tolls_linear, iteration_cap
from .equilibrium import solve_epsilon_equilibrium
from .generators import (
    parallel_links,
    random_dag,
    random_game,
    random_grid_path_flow,
    random_grid_tolls,
    random_series_parallel,
    random_standard_latency,
    trial_rng,
)
from .latency import k_constant
from .linear1c import induce_tolls_linear1c, query_bound
from .oracle import AdversaryOracle, TollOracle, adversary_consistency
from .sepa import decompose_graph, default_uprime, induce_tolls_sepa, query_cap

FAMILIES = {
    "parallel-links": ("sepa", "linear1c", "ellipsoid"),
    "random-sepa": ("sepa", "ellipsoid"),
    "random-graphs": ("linear1c", "ellipsoid"),
}
CSV_COLUMNS = ["method", "m", "k", "trial", "queries", "linf_error", "runtime_ms", "verdict"]
BENCH_U = 4


@dataclass
class Instance:
    game: RoutingGame
    target: Flow
    U: int
    toll_bound: float


@dataclass
class Row:
    method: str
    m: int
    k: int
    trial: int
    queries: int
    linf_error: float
    runtime_ms: float
    verdict: str


def make_instance(family: str, m: int, rng) -> Instance:
    """Series-parallel families get a target on the 1/U grid with exact equalizing tolls;
    general graphs get the equilibrium of hidden grid tolls."""
    U = BENCH_U
    com = (Commodity("s", "t", 1.0),)
    if family == "parallel-links":
        game = parallel_links([random_standard_latency(rng, U, 1) for _ in range(m)], 1.0)
    elif family == "random-sepa":
        game = random_game(rng, random_series_parallel(rng, m), com, U)
    elif family == "random-graphs":
        n = max(2, min(m, 1 + m // 2))
        g = random_dag(rng, n, max(m, n - 1))
        game = random_game(rng, g, (Commodity(0, n - 1, 1.0),), U)
        tolls = random_grid_tolls(rng, game.m, U)
        return Instance(game, solve_epsilon_equilibrium(game, tolls, 1e-14).flow, U, float(U))
    else:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    target = random_grid_path_flow(rng, game, U)
    com0 = game.commodities[0]
    longest = max(len(p) for p in enumerate_paths(game.graph, com0.source, com0.sink))
    bound = float(longest * U * (game.total_demand + 1))
    return Instance(game, target, U, bound)


def theoretical_bound(method: str, inst: Instance) -> float:
    game, U = inst.game, inst.U
    d = game.total_demand
    if method == "sepa":
        return float(query_cap(game.m, default_uprime(U, game.m, k_constant(1, U, d), d)))
    if method == "linear1c":
        return query_bound(game.m, U * d + U)
    n = 3 * game.m
    return float(iteration_cap(n, U, game.m, np.sqrt(n) * max(U, inst.toll_bound)))


def run_one(method: str, inst: Instance) -> tuple[int, float, str]:
    game, U = inst.game, inst.U
    if method == "sepa":
        oracle = TollOracle(game, eps=1e-14, U=U)
        d = game.total_demand
        res = induce_tolls_sepa(decompose_graph(game.graph), inst.target, oracle,
                                default_uprime(U, game.m, k_constant(1, U, d), d))
        tolls, verdict = (res.float_tolls() if res.found else None), ("found" if res.found else res.verdict)
    elif method == "linear1c":
        oracle = TollOracle(game, eps=1e-14, research=True, U=U)
        try:
            res = induce_tolls_linear1c(oracle, inst.target, U=U)
            tolls, verdict = res.tolls, "found"
        except ArithmeticError:
            tolls, verdict = None, "error"
    elif method == "ellipsoid":
        oracle = TollOracle(game, eps=1e-13, U=U)
        res = induce_tolls_linear(game.network, inst.target, oracle, U, toll_bound=inst.toll_bound)
        tolls, verdict = res.tolls, res.verdict
    else:
        raise ValueError(f"unknown method {method!r}")
    err = float("nan")
    if tolls is not None:
        err = float(np.max(np.abs(oracle.verify(tolls).aggregate - inst.target.aggregate)))
    return oracle.count, err, verdict


def _cell(args) -> list[Row]:
    family, m, trial, seed = args
    inst = make_instance(family, m, trial_rng(seed, m, trial))
    rows = []
    for method in FAMILIES[family]:
        t0 = time.perf_counter()
        q, err, verdict = run_one(method, inst)
        rows.append(Row(method, inst.game.m, inst.game.k, trial, q, err, 1000 * (time.perf_counter() - t0), verdict))
    return rows


def run_adversary(m: int, method: str = "sepa") -> tuple[int, bool, str]:
    """Run one induction method against the adaptive adversary; returns
    (queries, replay consistent, verdict)."""
    adv = AdversaryOracle(m)
    target = adv.target()
    U = int(adv.U)
    d = float(m)
    if method == "sepa":
        tree = decompose_graph(adv.network.graph)
        res = induce_tolls_sepa(tree, target, adv, default_uprime(U, m, k_constant(1, U, d), d))
        verdict = "found" if res.found else res.verdict
    elif method == "ellipsoid":
        verdict = induce_tolls_linear(adv.network, target, adv, U).verdict
    elif method == "linear1c":
        induce_tolls_linear1c(adv, target, U=U)
        verdict = "found"
    else:
        raise ValueError(f"unknown method {method!r}")
    return adv.count, adversary_consistency(adv).consistent, verdict


def bench_suite(family: str, sizes, trials: int, seed: int, *, jobs: int = 1, adversary: bool = True) -> list[Row]:
    """One row per (size, trial, method), ordered by size, then trial, then method."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    cells = [(family, int(m), t, seed) for m in sizes for t in range(trials)]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_cell, cells))
    else:
        chunks = [_cell(c) for c in cells]
    rows = [r for chunk in chunks for r in chunk]
    if adversary and family == "parallel-links":
        for m in sizes:
            if int(m) < 2:
                continue
            t0 = time.perf_counter()
            q, consistent, verdict = run_adversary(int(m), "sepa")
            verdict = verdict if consistent else "inconsistent"
            rows.append(Row("adversary-sepa", int(m), 1, 0, q, float("nan"), 1000 * (time.perf_counter() - t0), verdict))
    return rows


def rows_to_csv(rows: list[Row], deterministic: bool = False) -> str:
    """CSV text; ``deterministic`` zeroes the wall-clock column so equal seeds give equal bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        ms = 0.0 if deterministic else r.runtime_ms
        w.writerow([r.method, r.m, r.k, r.trial, r.queries, f"{r.linf_error:.3e}", f"{ms:.3f}", r.verdict])
    return buf.getvalue()


def summarize(rows: list[Row], family: str, seed: int) -> list[dict]:
    """Mean and max queries per (method, m) next to the theoretical bound for that size."""
    out = []
    keys = sorted({(r.method, r.m) for r in rows})
    for method, m in keys:
        qs = [r.queries for r in rows if r.method == method and r.m == m]
        if method == "adversary-sepa":
            bound: Optional[float] = float(m)
        else:
            bound = theoretical_bound(method, make_instance(family, m, trial_rng(seed, m, 0)))
        out.append({"method": method, "m": m, "mean": float(np.mean(qs)), "max": int(max(qs)), "bound": bound})
    return out
