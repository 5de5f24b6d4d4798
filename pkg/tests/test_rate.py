import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectral_tails.rate import (
    calibrate_asymptotic_constant,
    lower_tail_exponent,
    phi,
    phi_derivative,
    psi,
    psi_asymptotic,
    rate_curve,
    transition_points,
    x_star,
)

from oracles import phi_exact, psi_exact, transition_exact

deltas = st.floats(min_value=1e-3, max_value=1e5, allow_nan=False)


@pytest.mark.parametrize("delta,k,expected", [(0.5, 2, 0.5), (3, 3, 3.0), (23, 4, 18.0)])
def test_phi_examples(delta, k, expected):
    assert phi(delta, k) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("delta,k", [(0.0, 2), (-1.0, 3), (1.0, 1), (1.0, 0)])
def test_phi_domain(delta, k):
    with pytest.raises(ValueError):
        phi(delta, k)


@pytest.mark.parametrize(
    "delta,value,mins", [(1, 1.0, (2,)), (3, 3.0, (2, 3)), (23, 18.0, (3, 4)), (0.5, 0.5, (2,))]
)
def test_psi_examples(delta, value, mins):
    prof = psi(delta)
    assert prof.psi == pytest.approx(value, abs=1e-12)
    assert prof.minimizers == mins
    assert prof.h == mins[0]


def test_x_star_at_three():
    assert 2.26 < psi(3).x_star < 2.76
    assert psi(3).x_star == pytest.approx(2.45, abs=0.01)
    assert abs(phi_derivative(3, psi(3).x_star)) < 1e-9


def test_psi_rejects_nonpositive():
    with pytest.raises(ValueError):
        psi(0)


@pytest.mark.parametrize("k", range(2, 12))
def test_transition_points_match_exact_solution(k):
    ladder = transition_points(k + 1)
    assert ladder.points[0] == 0
    assert ladder.delta_k(k) == pytest.approx(float(transition_exact(k)), abs=1e-9)
    assert ladder.delta_k(k) == 2 * k * (k - 1) ** 2 - 1


def test_ladder_examples_and_strictly_increasing():
    ladder = transition_points(8)
    assert ladder.points[1:4] == (3.0, 23.0, 71.0)
    assert all(b > a for a, b in zip(ladder.points, ladder.points[1:]))
    with pytest.raises(ValueError):
        transition_points(1)


def test_minimizers_between_and_at_transitions():
    ladder = transition_points(7)
    for k in range(2, 7):
        lo, hi = ladder.delta_k(k - 1), ladder.delta_k(k)
        for d in np.linspace(lo, hi, 9)[1:-1]:
            assert psi(d).minimizers == (k,)
        assert psi(hi).minimizers == (k, k + 1)


@settings(max_examples=300, deadline=None)
@given(deltas)
def test_psi_matches_exact_enumeration(delta):
    best, mins = psi_exact(Fraction(delta))
    prof = psi(delta)
    assert prof.psi == pytest.approx(float(best), rel=1e-12)
    assert set(mins) <= set(prof.minimizers)


@settings(max_examples=300, deadline=None)
@given(deltas)
def test_rate_profile_invariants(delta):
    prof = psi(delta)
    assert 1 <= len(prof.minimizers) <= 2
    if len(prof.minimizers) == 2:
        assert prof.minimizers[1] == prof.minimizers[0] + 1
    assert math.floor(prof.x_star) in prof.minimizers or math.ceil(prof.x_star) in prof.minimizers
    c = ((1 + delta) / 2) ** (1 / 3)
    assert c + 1 < prof.x_star < c + 1.5
    assert all(phi(delta, k) >= prof.psi * (1 - 1e-12) for k in range(2, 40))


@settings(max_examples=200, deadline=None)
@given(deltas, st.integers(min_value=3, max_value=60))
def test_discrete_convexity(delta, k):
    assert phi(delta, k - 1) + phi(delta, k + 1) - 2 * phi(delta, k) > 0


@pytest.mark.parametrize("k", range(2, 7))
def test_piecewise_linear_on_each_interval(k):
    ladder = transition_points(7)
    lo, hi = ladder.delta_k(k - 1), ladder.delta_k(k)
    ds = np.linspace(lo, hi, 100)[1:-1]
    ys = np.array([psi(d).psi for d in ds])
    coef = np.polyfit(ds, ys, 1)
    assert np.max(np.abs(np.polyval(coef, ds) - ys)) < 1e-10
    assert np.allclose(ys, [phi(d, k) for d in ds], rtol=0, atol=1e-12)


@pytest.mark.parametrize("k", range(2, 7))
def test_continuity_at_transitions(k):
    dk = transition_points(7).delta_k(k)
    assert abs(psi(dk - 1e-9).psi - psi(dk + 1e-9).psi) < 1e-6


def test_h_nondecreasing():
    hs = [psi(d).h for d in np.geomspace(1e-2, 1e5, 400)]
    assert all(b >= a for a, b in zip(hs, hs[1:]))


@pytest.mark.parametrize("delta", [0.1, 1, 10, 100, 10000])
def test_x_star_bracket_grid(delta):
    c = ((1 + delta) / 2) ** (1 / 3)
    assert c + 1 < x_star(delta) < c + 1.5


def test_asymptotic_reference():
    assert psi_asymptotic(1000) == pytest.approx(500 + 3 / 2 ** (5 / 3) * 100, rel=1e-12)
    assert psi_asymptotic(1000) == pytest.approx(594.49, abs=0.01)
    C = calibrate_asymptotic_constant(np.geomspace(1e2, 1e6, 60))
    assert math.isfinite(C) and C > 0
    for d in np.geomspace(1e2, 1e6, 17):
        assert abs(psi(d).psi - psi_asymptotic(d)) <= C * d ** (1 / 3) * (1 + 1e-9)


@pytest.mark.parametrize("delta", [0.1, 0.5, 0.99])
def test_lower_tail_exponent(delta):
    assert lower_tail_exponent(delta) == delta


@pytest.mark.parametrize("delta", [0, 1, -0.5, 1.5])
def test_lower_tail_exponent_domain(delta):
    with pytest.raises(ValueError):
        lower_tail_exponent(delta)


def test_rate_curve_and_serialisation():
    curve = rate_curve([1, 3, 23])
    assert [p.psi for p in curve] == pytest.approx([1, 3, 18])
    d = curve[1].to_dict()
    assert d["minimizers"] == [2, 3] and set(d) == {"delta", "psi", "minimizers", "h", "x_star"}


def test_phi_exact_agrees_with_float():
    for k in range(2, 20):
        assert phi(2.5, k) == pytest.approx(float(phi_exact(Fraction(5, 2), k)), rel=1e-15)
