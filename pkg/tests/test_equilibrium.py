import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netinduce.core import Flow, validate_flow
from netinduce.equilibrium import (
    assert_certified,
    beckmann_potential,
    epsilon_to_linf_bound,
    solve_epsilon_equilibrium,
    solve_exact_parallel_links,
    total_slack,
)
from netinduce.generators import (
    braess_instance,
    classic_braess,
    make_rng,
    parallel_links,
    pigou,
    random_commodities,
    random_dag,
    random_game,
    random_grid_path_flow,
)
from netinduce.latency import PolyLatency
from netinduce.oracle import game_constant


def test_beckmann_examples():
    g = pigou()
    assert beckmann_potential(g, None, Flow.single([1, 0])) == pytest.approx(0.5)
    assert beckmann_potential(g, None, Flow.single([0, 1])) == pytest.approx(1.5)
    assert beckmann_potential(g, [1, 0], Flow.single([1, 0])) == pytest.approx(1.5)


def test_pigou_equilibrium():
    res = solve_epsilon_equilibrium(pigou(), None, 1e-6)
    np.testing.assert_allclose(res.flow.aggregate, [1, 0], atol=1e-3)
    assert_certified(pigou(), None, res, 1e-6)


def test_classic_braess_uses_bridge():
    res = solve_epsilon_equilibrium(classic_braess(), None, 1e-6)
    assert res.flow.aggregate[2] >= 1 - 1e-2


def _bridge_flow_by_bisection(a, b, d):
    """Symmetric equilibrium: outer flow y = (d + x)/2 on each outer edge, cross flow (d - x)/2.
    The bridge is used when outer(y) + b + outer(y) == outer(y) + a (d - x)/2."""
    outer = lambda y: y * y + y

    def excess(x):
        y = (d + x) / 2
        return outer(y) + b - a * (d - x) / 2

    if excess(0.0) >= 0:
        return 0.0
    lo, hi = 0.0, d
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if excess(mid) < 0 else (lo, mid)
    return lo


def test_braess_fixture_bridge_flow():
    game = braess_instance(2, 8, demand=5.0)
    res = solve_epsilon_equilibrium(game, None, 1e-8)
    oracle_value = _bridge_flow_by_bisection(6.0, 4.0, 5.0)
    assert oracle_value == pytest.approx(math.sqrt(153) - 12, abs=1e-9)
    assert res.flow.aggregate[2] == pytest.approx(oracle_value, abs=1e-3)


def test_exact_parallel_links_examples():
    np.testing.assert_array_equal(solve_exact_parallel_links(pigou()).aggregate, [1, 0])
    g = parallel_links([PolyLatency((0, 1)), PolyLatency((0, 1))], 2.0)
    np.testing.assert_allclose(solve_exact_parallel_links(g).aggregate, [1, 1])
    g = parallel_links([PolyLatency((2.0 * i, 1 / 3)) for i in range(3)], 3.0)
    np.testing.assert_allclose(solve_exact_parallel_links(g).aggregate, [3, 0, 0])


def test_exact_parallel_links_rejects_other_graphs():
    with pytest.raises(ValueError):
        solve_exact_parallel_links(classic_braess())


def test_epsilon_to_linf_bound_examples():
    assert epsilon_to_linf_bound(4, 1e-4, 1) == pytest.approx(0.02)
    assert epsilon_to_linf_bound(12, 3e-3, 3) == pytest.approx(0.3286, abs=1e-4)
    assert epsilon_to_linf_bound(4, 0, 1) == 0


def test_solver_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        solve_epsilon_equilibrium(pigou(), None, 0.0)


def _random_instance(seed, k=2, n=5, m=8):
    rng = make_rng(seed)
    g = random_dag(rng, n, m)
    coms = random_commodities(rng, g, k, 4)
    return rng, random_game(rng, g, coms, 4)


@given(st.integers(0, 10_000), st.sampled_from([1e-3, 1e-6, 1e-9]))
def test_gap_certificate(seed, eps):
    rng, game = _random_instance(seed)
    tolls = rng.integers(0, 5, size=game.m) / 4
    res = solve_epsilon_equilibrium(game, tolls, eps)
    assert validate_flow(game, res.flow).feasible
    assert res.flow.is_acyclic(game)
    assert total_slack(game, tolls, res.flow) <= eps * game.total_demand


@given(st.integers(0, 10_000))
def test_closeness_between_accuracies(seed):
    rng, game = _random_instance(seed)
    eps = 1e-4
    f1 = solve_epsilon_equilibrium(game, None, eps).flow
    f2 = solve_epsilon_equilibrium(game, None, eps / 100).flow
    K = game_constant(game, 4)
    assert np.max(np.abs(f1.aggregate - f2.aggregate)) <= 2 * epsilon_to_linf_bound(K, eps, game.total_demand)


@given(st.integers(0, 10_000))
def test_random_starts_agree(seed):
    rng, game = _random_instance(seed)
    eps = 1e-6
    f1 = solve_epsilon_equilibrium(game, None, eps).flow
    f2 = solve_epsilon_equilibrium(game, None, eps, start="random", rng=rng).flow
    K = game_constant(game, 4)
    assert np.max(np.abs(f1.aggregate - f2.aggregate)) <= 2 * epsilon_to_linf_bound(K, eps, game.total_demand)


def test_variational_inequality():
    for seed in range(10):
        rng, game = _random_instance(seed, k=1, n=4, m=6)
        tolls = rng.integers(0, 5, size=game.m) / 4
        f = solve_epsilon_equilibrium(game, tolls, 1e-9).flow
        c = game.edge_costs(f.aggregate, tolls)
        for _ in range(100):
            g = random_grid_path_flow(rng, game, 8)
            assert (f.aggregate - g.aggregate) @ c <= 1e-6


def test_exact_matches_epsilon_solver():
    rng = make_rng(5)
    for _ in range(20):
        m = int(rng.integers(2, 6))
        lats = [PolyLatency((int(rng.integers(0, 9)) / 4, int(rng.integers(1, 9)) / 4)) for _ in range(m)]
        game = parallel_links(lats, float(rng.integers(1, 4)))
        tolls = rng.integers(0, 9, size=m) / 4
        exact = solve_exact_parallel_links(game, tolls)
        eps = 1e-10
        approx = solve_epsilon_equilibrium(game, tolls, eps).flow
        K = game_constant(game, 4)
        assert np.max(np.abs(exact.aggregate - approx.aggregate)) <= epsilon_to_linf_bound(K, eps, game.total_demand)
