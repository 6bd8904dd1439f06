import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_repair.errors import InsufficientDataError, InvalidInputError
from manifold_repair.metrics import (MetricsReport, approximation_order_sweep, compute_report, count_profile,
                                     coverage_probes, fit_slope, hole_coverage, quasi_uniformity)
from manifold_repair.mlop import OptimizerConfig
from manifold_repair.rmlop import HoleSpec
from manifold_repair.synth import GeneratorSpec, generate, punch_hole


def grid(k=10, h=1.0):
    return np.stack(np.meshgrid(np.arange(k) * h, np.arange(k) * h), -1).reshape(-1, 2)


def test_quasi_uniformity_examples():
    assert quasi_uniformity(grid()) == (1.0, 1.0)
    assert quasi_uniformity(np.array([[0.0, 0.0], [2.0, 0.0]]))[1] == 1.0
    with pytest.raises(InsufficientDataError):
        quasi_uniformity(np.zeros((1, 2)))


def test_nn_ratio_three_times_gap():
    x = np.array([[0.0], [1.0], [2.0], [3.0], [6.0]])  # last point 3 away, the rest 1 apart
    assert quasi_uniformity(x)[1] == 3.0


def test_count_profile_grid():
    prof = count_profile(grid(), h0=1.0, ks=(1,))
    assert prof["1"]["median"] == 5.0 and prof["1"]["max"] == 5


def test_filled_grid_coverage_small():
    h = 0.1
    g = grid(41, h) - 2.0
    hole = HoleSpec([0.0, 0.0], 1.0)
    cov = hole_coverage(g, hole, seed=1)
    assert cov <= h / math.sqrt(2) + 1e-12


def test_punched_hole_coverage_large():
    g = grid(61, 0.1) - 3.0
    hole = HoleSpec([0.0, 0.0], 1.0)
    q = punch_hole(g, hole)
    assert hole_coverage(q, hole, seed=0) >= 0.5 * hole.radius


def test_no_points_near_hole_is_capped():
    q = np.array([[10.0, 10.0], [11.0, 10.0]])
    hole = HoleSpec([0.0, 0.0], 1.0)
    assert hole_coverage(q, hole) == pytest.approx(0.9)
    assert coverage_probes(q, hole).shape == (0, 2)


def test_coverage_monotone_under_added_points():
    rng = np.random.default_rng(0)
    g = grid(41, 0.1) - 2.0
    hole = HoleSpec([0.0, 0.0], 1.0)
    q = punch_hole(g, hole).coords
    probes = coverage_probes(q, hole, seed=3)
    prev = hole_coverage(q, hole, probes=probes)
    for _ in range(10):
        q = np.vstack([q, rng.uniform(-0.9, 0.9, (3, 2))])
        cur = hole_coverage(q, hole, probes=probes)
        assert cur <= prev
        prev = cur


@given(st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-1, 1, (60, 2))
    hole = HoleSpec([0.0, 0.0], 0.5)
    probes = coverage_probes(q, hole, seed=1)
    perm = rng.permutation(60)
    assert quasi_uniformity(q) == quasi_uniformity(q[perm])
    assert hole_coverage(q, hole, probes=probes) == hole_coverage(q[perm], hole, probes=probes)


def test_coverage_validation():
    with pytest.raises(InvalidInputError):
        coverage_probes(np.zeros((3, 2)), HoleSpec([0.0, 0.0, 0.0], 1.0))
    with pytest.raises(InvalidInputError):
        coverage_probes(np.zeros((3, 2)), HoleSpec([0.0, 0.0], 1.0), grid_density=0)


def test_report_round_trip_and_fields():
    x = generate(GeneratorSpec("circle", 50, seed=0)).coords
    rep = compute_report(x, kind="circle", holes=[HoleSpec([1.0, 0.0, 0.0], 0.3)])
    assert rep.dist_to_truth["max"] < 1e-12
    assert len(rep.hole_coverage) == 1
    back = MetricsReport.from_json(rep.to_json())
    assert back == rep
    vals = [rep.fill_distance_q, rep.nn_ratio, rep.dist_to_truth["max"]] + rep.hole_coverage
    assert all(np.isfinite(v) and v >= 0 for v in vals)


def test_fit_slope_exact():
    h = np.array([0.1, 0.2, 0.4])
    assert fit_slope(h, 3 * h**2) == pytest.approx(2.0)


def test_sweep_deterministic_rows():
    cfg = OptimizerConfig(q_count=2, max_iters=3, seed=0)
    a = approximation_order_sweep("circle", [60, 60], cfg)
    assert a.rows[0] == a.rows[1]
    assert np.isnan(a.slope)
    with pytest.raises(InvalidInputError):
        approximation_order_sweep("circle", [60], cfg, q_fraction=0.0)
