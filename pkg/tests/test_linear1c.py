import numpy as np
import pytest

from netinduce.core import Commodity, CyclicSupportError, DirectedGraph, Flow, node_imbalance
from netinduce.equilibrium import solve_epsilon_equilibrium
from netinduce.generators import make_rng, parallel_links, random_dag, random_game, random_grid_tolls, random_standard_latency
from netinduce.latency import PolyLatency, k_constant
from netinduce.linear1c import (
    QUERY_CONSTANT,
    SensitivityScale,
    estimate_beta,
    full_support_tolls,
    grow_support,
    induce_tolls_linear1c,
    make_tolls_nonnegative,
    query_bound,
)
from netinduce.oracle import TollOracle


def links(*lats, d=1.0):
    return parallel_links([PolyLatency(c) for c in lats], d)


def research(game, U=4, eps=1e-14):
    return TollOracle(game, eps=eps, research=True, U=U)


def test_kappa():
    s = SensitivityScale(4.0, 2.0)
    assert s.kappa(0) == 0
    assert s.kappa(1.0) == pytest.approx(1 / 8)
    assert s.kappa(2.0) > s.kappa(1.0)


def test_grow_support_example():
    game = links((0, 1), (2, 1))
    o = research(game, U=2, eps=0.0)
    delta = 1 / 3
    tolls, f = grow_support(o, np.zeros(2), 1, delta, 3.0, K=k_constant(1, 2, 1.0))
    assert -13 / 9 <= tolls[1] <= -11 / 9
    assert 1 / 9 <= f.aggregate[1] <= 2 / 9
    assert tolls[0] == 0


def test_grow_support_noop_when_already_used():
    game = links((0, 1), (2, 1))
    o = research(game, U=2, eps=0.0)
    tolls, f = grow_support(o, np.zeros(2), 0, 1 / 3, 3.0, K=2.0)
    assert o.count == 1
    np.testing.assert_array_equal(tolls, [0, 0])
    f0 = o.query([0, 0])
    tolls, _ = grow_support(o, np.zeros(2), 0, 1 / 3, 3.0, K=2.0, current=f0)
    assert o.count == 2


def test_bracket_endpoint_routes_everything():
    # N = 0 - 0 - m * lmax = -6 sends the whole demand through edge 2
    o = research(links((0, 1), (2, 1)), U=2, eps=0.0)
    assert o.query([0, -6]).aggregate[1] == pytest.approx(1.0)


def test_full_support_two_links():
    o = research(links((0, 1), (2, 1)), U=2)
    sup = full_support_tolls(o)
    assert np.all(sup.flow.aggregate >= 1 / 9)


def test_full_support_already_full_one_query():
    o = research(links((0, 1), (0, 1), d=2.0))
    sup = full_support_tolls(o)
    assert sup.queries == 1


def test_full_support_random_links_within_bound():
    for seed in range(5):
        rng = make_rng(seed)
        lats = [random_standard_latency(rng, 4, 1) for _ in range(4)]
        game = parallel_links(lats, 1.0)
        o = research(game)
        sup = full_support_tolls(o)
        assert np.all(sup.flow.aggregate >= 1 / 3**4)
        assert sup.queries <= query_bound(4, 4 * 1 + 4)


def test_beta_identical_links():
    o = research(links((0, 1), (0, 1), d=2.0))
    f1 = o.query([0, 0])
    beta = estimate_beta(o, np.zeros(2), float(f1.aggregate.min()), K=k_constant(1, 4, 2.0), current=f1)
    np.testing.assert_allclose(beta, [[-0.5, 0.5], [0.5, -0.5]], atol=1e-6)


def test_beta_single_path_is_zero():
    g = DirectedGraph(["s", "a", "t"], [("s", "a"), ("a", "t")])
    game = random_game(make_rng(0), g, (Commodity("s", "t", 1.0),), 4)
    o = research(game)
    beta = estimate_beta(o, np.zeros(2), 1.0, K=k_constant(1, 4, 1.0))
    np.testing.assert_allclose(beta, 0, atol=1e-9)


def _full_support_instance(seed, n=4, m=6):
    rng = make_rng(seed)
    g = random_dag(rng, n, m)
    game = random_game(rng, g, (Commodity(0, n - 1, 1.0),), 4)
    o = research(game)
    return rng, game, o


def test_beta_columns_are_circulations_and_linear():
    for seed in range(5):
        rng, game, o = _full_support_instance(seed)
        sup = full_support_tolls(o)
        f1 = sup.flow
        fmin = float(f1.aggregate.min())
        beta = estimate_beta(o, sup.tolls, fmin, K=k_constant(1, 4, 1.0), current=f1)
        for col in beta.T:
            assert max(abs(v) for v in node_imbalance(game.graph, col).values()) <= 1e-6
        # tolls small enough to keep every edge positive
        kappa = SensitivityScale(k_constant(1, 4, 1.0), 1.0).kappa(fmin / 2)
        for _ in range(5):
            tau = rng.uniform(-kappa, kappa, size=game.m) / game.m
            f = o.query(sup.tolls + tau)
            assert np.max(np.abs(f.aggregate - (f1.aggregate + beta @ tau))) <= 1e-4


def test_sensitivity_properties():
    tol = 1e-6
    for seed in range(20):
        rng = make_rng(seed)
        if seed % 2:
            game = parallel_links([random_standard_latency(rng, 4, 1) for _ in range(3)], 1.0)
        else:
            g = random_dag(rng, 4, 6)
            game = random_game(rng, g, (Commodity(0, 3, 1.0),), 4)
        K = k_constant(1, 4, 1.0)
        solve = lambda t: solve_epsilon_equilibrium(game, t, 1e-14).flow.aggregate
        f0 = solve(np.zeros(game.m))
        for _ in range(5):
            r = int(rng.integers(game.m))
            eps = float(rng.uniform(0.01, 0.5))
            one = np.zeros(game.m)
            one[r] = 1.0
            # (i) a kappa(eps) toll moves the flow by at most eps
            assert np.max(np.abs(solve(one * SensitivityScale(K, 1.0).kappa(eps)) - f0)) <= eps + tol
            d = float(rng.uniform(0.01, 2.0))
            # (iii) raising a toll never raises that edge's flow
            assert solve(one * d)[r] <= f0[r] + tol
            # (iv) the edge itself moves the most
            fm = solve(-one * d)
            assert abs(fm[r] - f0[r]) >= np.max(np.abs(fm - f0)) - 2 * tol


def test_identical_links_target():
    # equal costs 0.5 + t1 = 1.5 + t2
    o = research(links((0, 1), (0, 1), d=2.0))
    res = induce_tolls_linear1c(o, Flow.single([0.5, 1.5]), U=4)
    assert res.tolls[0] - res.tolls[1] == pytest.approx(1, abs=1e-6)
    assert min(res.tolls) >= 0
    np.testing.assert_allclose(o.verify(res.tolls).aggregate, [0.5, 1.5], atol=1e-6)


def test_offset_links_target():
    # l = (x, x+1): 0.5 + t1 = 2.5 + t2
    o = research(links((0, 1), (1, 1), d=2.0))
    res = induce_tolls_linear1c(o, Flow.single([0.5, 1.5]), U=4)
    assert res.tolls[0] - res.tolls[1] == pytest.approx(2, abs=1e-6)


def test_zero_toll_target_zero_step():
    game = links((0, 1), (0, 1), d=2.0)
    o = research(game)
    res = induce_tolls_linear1c(o, o.verify([0, 0]), U=4)
    np.testing.assert_allclose(res.raw_tolls, 0, atol=1e-9)


def test_hidden_toll_targets_parallel_links():
    for seed in range(5):
        rng = make_rng(seed)
        game = parallel_links([random_standard_latency(rng, 4, 1) for _ in range(3)], 1.0)
        target = solve_epsilon_equilibrium(game, random_grid_tolls(rng, 3, 4), 1e-14).flow
        o = research(game)
        res = induce_tolls_linear1c(o, target, U=4)
        assert np.max(np.abs(o.verify(res.tolls).aggregate - target.aggregate)) <= 1e-6
        assert res.queries <= res.bound
        assert res.bound == query_bound(3, 4 * 1 + 4, QUERY_CONSTANT)


def test_make_nonnegative_examples():
    g = DirectedGraph(["s", "t"], [("s", "t"), ("s", "t")])
    np.testing.assert_array_equal(make_tolls_nonnegative(g, [-1, 0], [0, 1]), [0, 1])
    np.testing.assert_array_equal(make_tolls_nonnegative(g, [2, 3], [0, 1]), [2, 3])


def test_make_nonnegative_rejects_cyclic_support():
    g = DirectedGraph(["s", "a", "b", "t"], [("s", "a"), ("a", "b"), ("b", "a"), ("b", "t")])
    with pytest.raises(CyclicSupportError):
        make_tolls_nonnegative(g, [0, -1, 0, 0], [0, 1, 2, 3])


def test_make_nonnegative_preserves_equilibrium():
    for seed in range(10):
        rng = make_rng(seed)
        g = random_dag(rng, 5, 8)
        game = random_game(rng, g, (Commodity(0, 4, 1.0),), 4)
        tau = rng.uniform(-2, 2, size=g.m)
        before = solve_epsilon_equilibrium(game, tau, 1e-14).flow.aggregate
        out = make_tolls_nonnegative(g, tau, range(g.m))
        assert np.all(out >= 0)
        neg = np.sum(np.abs(tau[tau < 0]))
        assert np.all(out <= tau + neg + 1e-12)
        after = solve_epsilon_equilibrium(game, out, 1e-14).flow.aggregate
        assert np.max(np.abs(after - before)) <= 1e-6
