import numpy as np
import pytest

from netinduce.core import Flow
from netinduce.equilibrium import solve_epsilon_equilibrium
from netinduce.generators import braess_instance, make_rng, parallel_links, pigou
from netinduce.latency import PolyLatency
from netinduce.oracle import (
    AdversaryOracle,
    QueryRejected,
    StackelbergOracle,
    TollOracle,
    adversary_consistency,
    check_response,
)


def two_links(d):
    return parallel_links([PolyLatency((0, 1)), PolyLatency((1, 1))], d)


def test_toll_query_examples():
    o = TollOracle(pigou(), eps=0.0)
    np.testing.assert_allclose(o.query([0, 0]).aggregate, [1, 0])
    np.testing.assert_allclose(o.query([1, 0]).aggregate, [0.5, 0.5])
    np.testing.assert_allclose(o.query([3, 0]).aggregate, [0, 1])
    assert o.count == 3
    assert o.log.count == len(o.log.entries)


def test_toll_query_checks():
    o = TollOracle(pigou(), eps=1e-10)
    with pytest.raises(ValueError):
        o.query([0, 0, 0])
    with pytest.raises(QueryRejected):
        o.query([-1, 0])
    assert o.count == 0
    assert TollOracle(pigou(), eps=1e-10, research=True).query([-0.5, 0]).aggregate[0] == pytest.approx(1.0, abs=1e-4)


def test_exact_mode_needs_affine_parallel_links():
    with pytest.raises(ValueError):
        TollOracle(braess_instance(2, 8), eps=0.0)


def test_sign_query_examples():
    o = TollOracle(pigou(), eps=0.0)
    assert list(o.sign_query([0, 0], Flow.single([1, 0]))) == [0, 0]
    assert list(o.sign_query([0, 0], Flow.single([0.5, 0.5]))) == [1, -1]
    f = o.query([1, 0])
    assert list(o.sign_query([1, 0], f)) == [0, 0]


def test_stackelberg_query_examples():
    o = StackelbergOracle(two_links(2.0), alpha=0.5)
    np.testing.assert_allclose(o.query([0, 0]).aggregate, [1.5, 0.5], atol=1e-5)
    np.testing.assert_allclose(o.query([0, 0.75]).aggregate, [1.25, 0], atol=1e-5)
    with pytest.raises(QueryRejected):
        o.query([0, 1.5])
    assert o.count == 2


def test_stackelberg_min_flow_leaves_residual_on_shortest_paths():
    # target (1.25, 0.75): the minimal leader flow saturates the slower link
    game = two_links(2.0)
    o = StackelbergOracle(game, alpha=0.5)
    g = Flow.single([0, 0.75])
    f = o.query(g)
    np.testing.assert_allclose((f + g).aggregate, [1.25, 0.75], atol=1e-5)
    assert np.all(g.aggregate <= np.array([1.25, 0.75]) + 1e-12)


def test_adversary_examples():
    adv = AdversaryOracle(3)
    np.testing.assert_allclose(adv.query([0, 0, 0]).aggregate, [3, 0, 0])
    assert adv.assigned == {0: 1}
    f = adv.query([5, 0, 0])
    assert adv.assigned == {0: 1, 1: 2}
    assert f.aggregate[2] == 0
    rep = adversary_consistency(adv)
    assert rep.consistent
    assert rep.permutation[0] == 1 and rep.permutation[1] == 2


def test_adversary_single_query_consistent():
    adv = AdversaryOracle(4)
    adv.query([1, 2, 3, 4])
    assert adversary_consistency(adv).consistent


def test_adversary_unassigned_links_empty():
    for seed in range(20):
        rng = make_rng(seed)
        m = 5
        adv = AdversaryOracle(m)
        for j in range(m):
            f = adv.query(rng.integers(0, 12, size=m) / 2)
            for e in range(m):
                if e not in adv.assigned:
                    assert f.aggregate[e] == 0
        assert adversary_consistency(adv).consistent


def test_adversary_some_edge_empty_after_m_minus_1_queries():
    rng = make_rng(1)
    m = 6
    adv = AdversaryOracle(m)
    flows = [adv.query(rng.integers(0, 12, size=m) / 2).aggregate for _ in range(m - 1)]
    assert any(all(f[e] == 0 for f in flows) for e in range(m))


def test_random_replay_m5():
    rng = make_rng(7)
    adv = AdversaryOracle(5)
    for _ in range(4):
        adv.query(rng.uniform(0, 6, size=5))
    assert adversary_consistency(adv).consistent


def test_braess_parameters():
    from netinduce.generators import BraessParams

    p = BraessParams(2, 8)
    assert (p.a, p.b) == (6, 4)
    p = BraessParams(1, 3)
    assert (p.a, p.b) == (3, 0.75)
    with pytest.raises(ValueError):
        braess_instance(3, 2)


def test_braess_bridge_band():
    d1, d2 = 2.0, 8.0
    low = solve_epsilon_equilibrium(braess_instance(d1, d2, demand=1.9), None, 1e-10).flow.aggregate
    assert low[2] == pytest.approx(0, abs=1e-4)
    np.testing.assert_allclose(low[[0, 1]], [0.95, 0.95], atol=1e-4)
    for d, positive in ((d1 - 0.1, False), ((d1 + d2) / 2, True), (d2 + 0.1, False)):
        f = solve_epsilon_equilibrium(braess_instance(d1, d2, demand=d), None, 1e-10).flow.aggregate
        assert (f[2] > 1e-4) == positive
    # delta = 6 >= sqrt(2 sigma) = sqrt(20)
    mid = solve_epsilon_equilibrium(braess_instance(d1, d2), None, 1e-10).flow.aggregate
    assert mid[2] >= 1 / 12


def test_responses_certified_and_replayable():
    game = braess_instance(1, 3)
    o = TollOracle(game, eps=1e-9)
    rng = make_rng(0)
    for _ in range(5):
        t = rng.integers(0, 8, size=game.m) / 4
        f = o.query(t)
        assert check_response(game, t, f, o.eps) == []
    again = TollOracle(game, eps=1e-9)
    for t, f in o.history:
        again.query(t)
    assert again.log.entries == o.log.entries


def test_log_csv():
    o = TollOracle(pigou(), eps=0.0)
    o.query([0, 0])
    o.query([1, 0])
    lines = o.log.to_csv().splitlines()
    assert lines[0] == "index,kind,input_digest,response_digest,cumulative"
    assert lines[2].startswith("1,toll,") and lines[2].endswith(",2")
