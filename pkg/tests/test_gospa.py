import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gospa_mcts.gospa import GospaParams, gospa, rms_gospa, solve_assignment

from conftest import brute_force_sq_gospa

coord = st.floats(-30, 30, allow_nan=False, allow_infinity=False)
point_sets = st.lists(st.tuples(coord, coord), max_size=4)


def test_one_close_one_missed():
    g = gospa([(0, 0), (10, 0)], [(1, 0)], 10)
    assert g.sq_total == pytest.approx(51.0)
    assert g.loc_sq == pytest.approx(1.0)
    assert (g.missed_count, g.false_count) == (1, 0)
    assert g.assignment == [(0, 0)]


def test_empty_estimate_costs_half_c_squared_per_target():
    assert gospa([(0, 0)], [], 80).sq_total == pytest.approx(3200.0)
    assert gospa([], [], 80).sq_total == 0.0


def test_far_pair_counts_as_missed_plus_false():
    g = gospa([(0, 0)], [(100, 0)], 10)
    assert g.sq_total == pytest.approx(100.0)
    assert (g.missed_count, g.false_count, g.loc_sq) == (1, 1, 0.0)


def test_pair_exactly_at_cutoff_prefers_unassigned():
    g = gospa([(0, 0)], [(10, 0)], 10)
    assert g.sq_total == pytest.approx(100.0)
    assert g.assignment == []


def test_params_validation():
    with pytest.raises(ValueError):
        GospaParams(0.0)
    with pytest.raises(ValueError):
        GospaParams(10.0, p=1)
    with pytest.raises(ValueError):
        gospa([(np.nan, 0)], [], 10)


def test_solve_assignment_examples():
    assert solve_assignment([[1, 9], [9, 1]], 50) == [(0, 0), (1, 1)]
    assert solve_assignment([[100.0]], 50) == []
    assert solve_assignment([[0.0]], 50) == [(0, 0)]
    assert solve_assignment(np.zeros((0, 3)), 1.0) == []
    # Two optimal assignments: the lexicographically smallest is returned.
    assert solve_assignment([[1, 1], [1, 1]], 50) == [(0, 0), (1, 1)]


def test_rms_gospa():
    assert rms_gospa([25.0]) == pytest.approx(5.0)
    assert rms_gospa([9.0, 16.0, 0.0, 39.0]) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        rms_gospa([])
    with pytest.raises(ValueError):
        rms_gospa([-1.0])


@settings(max_examples=150, deadline=None)
@given(point_sets, point_sets)
def test_matches_brute_force(X, Y):
    g = gospa(X, Y, 10.0)
    assert g.sq_total == pytest.approx(brute_force_sq_gospa(X, Y, 10.0), abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(point_sets, point_sets)
def test_decomposition_identity(X, Y):
    c = 10.0
    g = gospa(X, Y, c)
    assert g.sq_total == pytest.approx(g.loc_sq + g.missed_sq(c) + g.false_sq(c), abs=1e-9)
    assert g.missed_count == len(X) - len(g.assignment)
    assert g.false_count == len(Y) - len(g.assignment)
    # Every assigned pair is strictly inside the cutoff.
    for i, j in g.assignment:
        assert np.sum((np.subtract(X[i], Y[j])) ** 2) < c**2


@settings(max_examples=100, deadline=None)
@given(point_sets, point_sets, point_sets)
def test_metric_axioms(X, Y, Z):
    d = lambda a, b: gospa(a, b, 10.0).total
    assert d(X, Y) == pytest.approx(d(Y, X), abs=1e-9)
    assert d(X, X) == pytest.approx(0.0, abs=1e-9)
    assert d(X, Z) <= d(X, Y) + d(Y, Z) + 1e-9
    assert d(X, Y) >= 0


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets, st.floats(-200, 200), st.floats(-200, 200))
def test_translation_invariance(X, Y, dx, dy):
    shift = lambda S: [(x + dx, y + dy) for x, y in S]
    assert gospa(shift(X), shift(Y), 10.0).sq_total == pytest.approx(gospa(X, Y, 10.0).sq_total, abs=1e-6)
