import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netinduce.congestion import Assignment, CongestionGame, CongestionOracle, solve_congestion_equilibrium
from netinduce.core import Commodity, DirectedGraph, Flow, Network
from netinduce.ellipsoid import (
    ETA,
    EllipsoidState,
    Halfspace,
    TollBudget,
    UntollableEdges,
    VariableLayout,
    _NetworkStructure,
    induce_assignment_congestion,
    induce_tolls_approx,
    induce_tolls_constrained,
    induce_tolls_linear,
    iteration_cap,
    separation_case1,
    separation_case2,
)
from netinduce.equilibrium import solve_epsilon_equilibrium
from netinduce.generators import (
    make_rng,
    parallel_links,
    pigou,
    random_game,
    random_grid_path_flow,
    random_grid_tolls,
    random_series_parallel,
)
from netinduce.latency import PolyLatency
from netinduce.oracle import TollOracle
from netinduce.sepa import decompose_graph, grid_inducing_tolls

HALF = Flow.single([0.5, 0.5])


def pigou_structure():
    return _NetworkStructure(pigou().network, 1e-12)


def test_layout_round_trip():
    lay = VariableLayout(3, 2)
    assert lay.n_v == 12
    C = np.arange(9.0).reshape(3, 3)
    x = lay.pack(C, [7, 8, 9])
    C2, t = lay.unpack(x)
    np.testing.assert_array_equal(C2, C)
    np.testing.assert_array_equal(t, [7, 8, 9])


@given(st.lists(st.floats(0, 4), min_size=8, max_size=8))
def test_layout_round_trip_property(vals):
    lay = VariableLayout(2, 2)
    x = np.array(vals[:6] + vals[6:])
    C, t = lay.unpack(x)
    np.testing.assert_array_equal(lay.pack(C, t), x)


def test_case1_examples():
    lay = VariableLayout(2, 1)
    s = pigou_structure()
    assert separation_case1(lay, s, lay.pack([(0, 1), (0, 1)], [0, 0]), HALF) is None
    x = lay.pack([(0, 1), (0, 1)], [0, 1])
    h = separation_case1(lay, s, x, HALF)
    assert h.provenance == "case1"
    # a2/2 + b2 + t2 - (a1/2 + b1 + t1) <= eta/2
    expected = np.zeros(6)
    expected[[lay.coef(1, 1), lay.coef(1, 0), lay.toll(1)]] = [0.5, 1, 1]
    expected[[lay.coef(0, 1), lay.coef(0, 0), lay.toll(0)]] = [-0.5, -1, -1]
    np.testing.assert_allclose(h.normal, expected)
    assert h.offset == pytest.approx(ETA / 2)
    assert not h.satisfied_by(x)
    truth = lay.pack([(0, 1), (1, 1)], [1, 0])
    assert separation_case1(lay, s, truth, HALF) is None


def test_case2_examples():
    lay = VariableLayout(2, 1)
    s = pigou_structure()
    x = lay.pack([(0, 1), (0, 1)], [0, 0])
    g = Flow.single([1, 0])
    h = separation_case2(lay, s, x, g)
    assert h.provenance == "case2"
    # a1 + b1 - b2 <= eta/2, violated by the candidate (1 > 0)
    expected = np.zeros(6)
    expected[[lay.coef(0, 1), lay.coef(0, 0), lay.coef(1, 0)]] = [1, 1, -1]
    np.testing.assert_allclose(h.normal, expected)
    assert h.violation(x) > 0
    assert not np.any(h.normal[lay.n_coef:])
    # the candidate's own equilibrium gives no cut
    assert separation_case2(lay, s, x, HALF) is None
    one = Network(DirectedGraph(["s", "t"], [("s", "t")]), (Commodity("s", "t", 1.0),))
    lay1 = VariableLayout(1, 1)
    assert separation_case2(lay1, _NetworkStructure(one, 1e-12), lay1.pack([(3, 2)], [1]), Flow.single([1.0])) is None


def test_halfspace_rejects_zero_normal():
    with pytest.raises(ValueError):
        Halfspace(np.zeros(3), 0.0, "case1")


def test_pigou_linear_induction():
    o = TollOracle(pigou(), eps=1e-13, U=4)
    res = induce_tolls_linear(pigou().network, HALF, o, 4)
    assert res.found
    assert res.tolls[0] - res.tolls[1] == pytest.approx(1, abs=1e-6)
    np.testing.assert_allclose(o.verify(res.tolls).aggregate, [0.5, 0.5], atol=1e-6)


def test_zero_toll_target():
    o = TollOracle(pigou(), eps=1e-13, U=4)
    res = induce_tolls_linear(pigou().network, Flow.single([1, 0]), o, 4)
    assert res.found
    np.testing.assert_allclose(o.verify(res.tolls).aggregate, [1, 0], atol=1e-6)


def test_two_commodity_series_parallel():
    rng = make_rng(4)
    g = random_series_parallel(rng, 4)
    coms = (Commodity("s", "t", 1.0), Commodity("s", "t", 0.5))
    game = random_game(rng, g, coms, 4)
    hidden = random_grid_tolls(rng, game.m, 4)
    target = solve_epsilon_equilibrium(game, hidden, 1e-14).flow
    o = TollOracle(game, eps=1e-13, U=4)
    res = induce_tolls_linear(game.network, target, o, 4, toll_bound=8.0)
    assert res.found
    assert np.max(np.abs(o.verify(res.tolls).aggregate - target.aggregate)) <= 1e-6


def test_volume_decreases_and_cuts_hold_for_truth():
    """On series-parallel games with grid targets the exact equalizing tolls are a valid
    inducing point, so every case1/case2 cut must keep it."""
    for seed in range(4):
        rng = make_rng(100 + seed)
        g = random_series_parallel(rng, 4)
        game = random_game(rng, g, (Commodity("s", "t", 1.0),), 4)
        target = random_grid_path_flow(rng, game, 4)
        tree = decompose_graph(g)
        tstar = [float(t) for t in grid_inducing_tolls(tree, game, target, 4)]
        lay = VariableLayout(game.m, 1)
        truth = lay.pack(game.latencies, tstar)
        cuts = []
        o = TollOracle(game, eps=1e-14, U=4)
        bound = float(sum(tstar) + 4)
        res = induce_tolls_linear(game.network, target, o, 4, toll_bound=bound, on_cut=cuts.append)
        assert res.found
        for h in cuts:
            if h.provenance in ("case1", "case2"):
                assert h.satisfied_by(truth, tol=1e-6), h.provenance
        n = lay.n_v
        vols = [r.log_volume for r in res.trace]
        for a, b in zip(vols, vols[1:]):
            assert b - a <= -1 / (2 * (n + 1)) + 1e-9


def test_central_cut_volume_factor():
    rng = make_rng(0)
    st_ = EllipsoidState.ball(np.zeros(5), 2.0)
    for _ in range(50):
        before = st_.log_volume()
        st_.cut(rng.normal(size=5))
        assert st_.log_volume() - before <= -1 / (2 * 6)
        A = st_.shape.astype(float)
        assert np.allclose(A, A.T, atol=1e-9)
        assert np.all(np.linalg.eigvalsh(A) > 0)


def test_iteration_cap_formula():
    n, U, m = 6, 4, 2
    assert iteration_cap(n, U, m) == math.ceil(2 * n * (n + 1) * math.log(math.sqrt(n) * U * 4 * U * U * m))


def test_constrained_untollable():
    o = TollOracle(pigou(), eps=1e-13, U=4)
    res = induce_tolls_constrained(pigou().network, HALF, o, 4, [UntollableEdges([0])], max_iterations=3000)
    assert not res.found


def test_constrained_budget():
    o = TollOracle(pigou(), eps=1e-13, U=4)
    res = induce_tolls_constrained(pigou().network, HALF, o, 4, [TollBudget(1.0)])
    assert res.found
    assert max(res.tolls) <= 1 + 1e-6
    np.testing.assert_allclose(o.verify(res.tolls).aggregate, [0.5, 0.5], atol=1e-6)
    o = TollOracle(pigou(), eps=1e-13, U=4)
    res = induce_tolls_constrained(pigou().network, HALF, o, 4, [TollBudget(0.5)], max_iterations=3000)
    assert not res.found


def quad_pigou():
    return parallel_links([PolyLatency((0, 1, 1)), PolyLatency((1, 1))], 1.0)


def test_approx_quadratic_pigou():
    game = quad_pigou()
    target = solve_epsilon_equilibrium(game, [0.5, 0], 1e-14).flow
    delta = 1e-2
    o = TollOracle(game, eps=1e-6, U=4)
    res = induce_tolls_approx(game.network, target, o, 4, 2, delta)
    assert res.found
    assert np.max(np.abs(o.verify(res.tolls).aggregate - target.aggregate)) <= 2 * delta


def test_approx_huge_delta_accepts_quickly():
    game = quad_pigou()
    target = solve_epsilon_equilibrium(game, [0.5, 0], 1e-14).flow
    o = TollOracle(game, eps=1e-6, U=4)
    res = induce_tolls_approx(game.network, target, o, 4, 2, 10.0)
    assert res.found
    assert res.queries <= 3


def test_approx_agrees_with_linear():
    game = pigou()
    o1 = TollOracle(game, eps=1e-13, U=4)
    lin = induce_tolls_linear(game.network, HALF, o1, 4)
    delta = 1e-4
    o2 = TollOracle(game, eps=1e-6, U=4)
    app = induce_tolls_approx(game.network, HALF, o2, 4, 1, delta)
    assert app.found
    f1 = o1.verify(lin.tolls).aggregate
    f2 = o2.verify(app.tolls).aggregate
    assert np.max(np.abs(f1 - f2)) <= 2 * delta + 1e-6


def test_congestion_matches_network_version():
    lats = (PolyLatency((0, 1)), PolyLatency((1, 1)))
    cg = CongestionGame(lats, (((0,), (1,)),), (1.0,))
    target = Assignment((np.array([0.5, 0.5]),))
    o = CongestionOracle(cg, eps=1e-13)
    res = induce_assignment_congestion(2, cg.strategies, [1.0], target, o, 4)
    assert res.found
    assert res.tolls[0] - res.tolls[1] == pytest.approx(1, abs=1e-6)


def test_congestion_singleton_strategy():
    cg = CongestionGame((PolyLatency((1, 1)),), (((0,),),), (1.0,))
    o = CongestionOracle(cg, eps=1e-13)
    res = induce_assignment_congestion(1, cg.strategies, [1.0], Assignment((np.array([1.0]),)), o, 4)
    assert res.found
    np.testing.assert_allclose(o.verify(res.tolls).weights[0], [1.0])


def test_congestion_three_resources():
    lats = (PolyLatency((0, 1)), PolyLatency((0.5, 1)), PolyLatency((0, 2)))
    cg = CongestionGame(lats, (((0, 1), (2,)),), (1.0,))
    hidden = np.array([0.0, 0.0, 1.0])
    target = solve_congestion_equilibrium(cg, hidden, 1e-14)
    o = CongestionOracle(cg, eps=1e-13)
    res = induce_assignment_congestion(3, cg.strategies, [1.0], target, o, 4)
    assert res.found
    got = o.verify(res.tolls)
    np.testing.assert_allclose(got.loads(cg), target.loads(cg), atol=1e-6)


def test_congestion_rejects_empty_strategy_set():
    with pytest.raises(ValueError):
        induce_assignment_congestion(1, [[]], [1.0], None, None, 4)
