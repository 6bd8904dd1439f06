import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_repair.errors import InsufficientDataError, InvalidInputError
from manifold_repair.neighborhoods import (TRUNCATION, SpatialIndex, brute_force_range, fill_distance, make_plan,
                                           nearest_neighbor_distances, radius_multiplier_c1, range_query)


def test_fill_distance_grid():
    g = np.stack(np.meshgrid(np.arange(5.0), np.arange(4.0)), -1).reshape(-1, 2)
    assert fill_distance(g) == 1.0
    assert np.all(nearest_neighbor_distances(g) == 1.0)


def test_fill_distance_needs_two_points():
    with pytest.raises(InsufficientDataError):
        fill_distance(np.zeros((1, 2)))


@given(st.integers(2, 60), st.integers(1, 6), st.floats(0.0, 2.0), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_range_query_matches_brute_force(count, dim, radius, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (count, dim))
    idx = SpatialIndex(x)
    c = rng.uniform(-1, 1, dim)
    assert range_query(idx, c, radius) == [int(i) for i in brute_force_range(x, c, radius)]


def test_range_query_boundary_inclusive():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert range_query(SpatialIndex(x), [0.0, 0.0], 1.0) == [0, 1]


def test_query_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        SpatialIndex(np.zeros((3, 2))).query(np.zeros(3), 1.0)


def test_radius_multiplier_smallest_grid_value():
    p = np.arange(10.0).reshape(-1, 1)
    c, capped = radius_multiplier_c1(p, p[:5], 1.0, nu=2)
    # the 2nd neighbour (self included) is one spacing away
    assert c == 1.0 and not capped
    c, capped = radius_multiplier_c1(p, np.array([[100.0]]), 1.0, nu=1)
    assert capped and c == 20.0


def test_make_plan_scales_linearly():
    rng = np.random.default_rng(0)
    p = rng.uniform(0, 1, (200, 3))
    q = p[:60]
    a, b = make_plan(p, q), make_plan(3.0 * p, 3.0 * q)
    assert b.h1 == pytest.approx(3 * a.h1) and b.h2 == pytest.approx(3 * a.h2)
    assert a.radius_p == pytest.approx(TRUNCATION * a.h1)
    with pytest.raises(InvalidInputError):
        make_plan(q, p)
