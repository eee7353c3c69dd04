import pytest
from hypothesis import given
from hypothesis import strategies as st

from netinduce.generators import make_rng, random_standard_latency
from netinduce.latency import PolyLatency, StandardnessParams, check_standard, evaluate, k_constant


def test_evaluate_examples():
    assert evaluate(PolyLatency((1, 1)), 0.0) == 1.0
    assert evaluate(PolyLatency((0, 1, 1)), 2.0) == 6.0
    # cross edge of the d1=2, d2=8 Braess game has slope a = 1 + (2+8)/2 = 6
    assert evaluate(PolyLatency((0, 6)), 0.5) == 3.0


def test_evaluate_rejects_negative_flow():
    with pytest.raises(ValueError):
        evaluate(PolyLatency((0, 1)), -0.1)


def test_negative_coefficients_rejected():
    with pytest.raises(ValueError):
        PolyLatency((1, -1))


def test_check_standard_examples():
    p = StandardnessParams(U=4, r=1)
    assert check_standard(PolyLatency((0, 1)), p) == []
    bad = check_standard(PolyLatency((0, 0.3)), p)
    assert any("multiple of 1/4" in s for s in bad)
    flat = check_standard(PolyLatency((0, 0, 1)), StandardnessParams(U=4, r=2))
    assert any("slope" in s for s in flat)


def test_k_constant_examples():
    assert k_constant(1, 4, 1) == 4
    assert k_constant(2, 2, 3) == 12
    assert k_constant(1, 1, 1) == 2


def test_integral_and_derivative():
    l = PolyLatency((1, 2, 3))
    assert l.integral(2.0) == pytest.approx(2 + 4 + 8)
    assert l.derivative(1.0) == pytest.approx(2 + 6)


def test_shifted_matches_evaluation():
    l = PolyLatency((1, 2, 3))
    s = l.shifted(0.7)
    for x in (0.0, 0.3, 2.0):
        assert s(x) == pytest.approx(l(x + 0.7))


def test_standard_latency_bounds_on_random_samples():
    """Inverse continuity and doubling for every degree; Lipschitz for affine latencies."""
    rng = make_rng(11)
    for _ in range(1000):
        U = int(rng.integers(1, 6))
        r = int(rng.integers(1, 3))
        total = float(rng.integers(1, 4))
        K = k_constant(r, U, total)
        l = random_standard_latency(rng, U, r)
        x, y = rng.uniform(0, total, size=2)
        if r == 1:
            assert abs(l(x) - l(y)) <= K * abs(x - y) + 1e-12
        eps = float(rng.uniform(1e-3, 1.0))
        if (x - y) * (l(x) - l(y)) <= eps * eps / K:
            assert abs(x - y) <= eps + 1e-12
        assert l(2 * x) <= K * l(x) + 1e-12


def test_lipschitz_constant_too_small_for_quadratics():
    # l' = 1 + 2x reaches 5 at x = 2 while K = max{1, 4, 2*1*2} = 4; lower order
    # terms push the slope past r U (sum d)^(r-1)
    l = PolyLatency((1, 1, 1))
    K = k_constant(2, 1, 2.0)
    assert K == 4
    assert l.derivative(2.0) == 5.0 > K
    # the slope is still bounded by U * sum_j j (sum d)^(j-1)
    assert l.derivative(2.0) <= 1 * (1 + 2 * 2.0)


@given(st.lists(st.integers(0, 8), min_size=2, max_size=4), st.floats(0, 5))
def test_evaluate_is_horner(coeffs, x):
    l = PolyLatency([c / 4 for c in coeffs])
    expected = sum(c / 4 * x**j for j, c in enumerate(coeffs))
    assert l(x) == pytest.approx(expected, rel=1e-12, abs=1e-12)
