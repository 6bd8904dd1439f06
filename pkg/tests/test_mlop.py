import numpy as np
import pytest

from manifold_repair.core import KernelParams
from manifold_repair.engine import Engine
from manifold_repair.errors import InvalidInputError, NumericalAbort
from manifold_repair.mlop import (OptimizerConfig, OptimizerState, RunLog, attraction_gradient, bb_step, check_finite,
                                  init_q, lambda_init, lambda_median, mlop_iterate, prepare, repulsion_gradient,
                                  run_mlop)
from manifold_repair.synth import GeneratorSpec, generate


@pytest.fixture(scope="module")
def plane():
    return generate(GeneratorSpec("plane_patch", 150, seed=1))


def test_init_q_distinct_rows_and_seeded(plane):
    a = init_q(plane, 40, seed=5).coords
    b = init_q(plane, 40, seed=5).coords
    assert np.array_equal(a, b)
    assert len({tuple(r) for r in a}) == 40
    assert {tuple(r) for r in a} <= {tuple(r) for r in plane.coords}
    with pytest.raises(InvalidInputError):
        init_q(plane, 151, 0)


def test_init_q_bias_prefers_weighted_rows(plane):
    w = np.zeros(plane.count) + 1e-12
    w[:20] = 1.0
    q = init_q(plane, 20, 0, bias=w).coords
    assert {tuple(r) for r in q} == {tuple(r) for r in plane.coords[:20]}


def test_lambda_init_examples():
    assert lambda_init(np.array([3.0, 4.0]), np.array([0.0, 2.5])) == -2.0
    assert lambda_init(np.array([1.0]), np.array([0.0])) == 0.0
    lam = lambda_median(np.array([[1.0], [3.0]]), np.array([[1.0], [1.0]]), 2)
    assert np.all(lam == -2.0)


def test_bb_step_examples():
    assert bb_step(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == 0.5
    assert bb_step(np.zeros(2), np.zeros(2), previous=0.3) == 0.3
    # displacement clipped to step_clip * h2
    g = bb_step(np.array([10.0]), np.array([1.0]), step_clip=0.5, h2=1.0, grad_norm=1.0)
    assert g == 0.5


def test_single_point_helpers_match_engine(plane):
    prm = KernelParams(h1=0.4, h2=0.3)
    q = plane.coords[:30]
    t = Engine(plane.coords, prm).terms(q)
    assert np.allclose(attraction_gradient(q[3], plane.coords, prm), t.attraction[3])
    assert np.allclose(repulsion_gradient(3, q, prm), t.repulsion[3])


def test_engine_threads_bitwise_identical(plane):
    prm = KernelParams(h1=0.4, h2=0.3)
    q = plane.coords[:100]
    a = Engine(plane.coords, prm, threads=1).terms(q, e3=True)
    b = Engine(plane.coords, prm, threads=3).terms(q, e3=True)
    for k in ("attraction", "repulsion", "e3"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_run_mlop_deterministic_and_logged(plane):
    cfg = OptimizerConfig(q_count=50, max_iters=5, seed=2)
    q1, log1 = run_mlop(plane, cfg)
    q2, _ = run_mlop(plane, cfg)
    assert np.array_equal(q1.coords, q2.coords)
    assert [r["iteration"] for r in log1.rows] == list(range(6))
    assert len(log1.grad_norm_history()) == 6


def test_zero_iterations_returns_q0(plane):
    cfg = OptimizerConfig(q_count=30, max_iters=0, seed=4)
    q, _ = run_mlop(plane, cfg)
    assert np.array_equal(q.coords, init_q(plane, 30, 4).coords)


def test_mlop_reduces_noise_on_a_line():
    # A 1-D manifold is where the literal attraction is a stable minimum.
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 10, 400))
    p = np.column_stack([t, rng.uniform(-0.05, 0.05, 400)])
    cfg = OptimizerConfig(q_count=100, max_iters=30, seed=1, eps_rel=1e-3)
    setup = prepare(p, cfg)
    q, _ = run_mlop(p, cfg, setup=setup)
    inner = (q.coords[:, 0] > 1) & (q.coords[:, 0] < 9)
    assert np.median(np.abs(q.coords[inner, 1])) < np.median(np.abs(setup.q0[:, 1]))


def test_iteration_does_not_mutate_input(plane):
    cfg = OptimizerConfig(q_count=40, seed=0)
    setup = prepare(plane, cfg)
    st = OptimizerState.start(setup.q0)
    before = st.q_curr.copy()
    nxt = mlop_iterate(st, setup.engine, cfg)
    assert np.array_equal(st.q_curr, before) and nxt.iter == 1
    assert np.all(nxt.lam <= 0)


def test_check_finite_raises_with_location():
    with pytest.raises(NumericalAbort) as exc:
        check_finite(np.array([[0.0], [np.nan]]), 7)
    assert exc.value.point_index == 1 and exc.value.iteration == 7


def test_config_validation():
    for bad in ({"q_count": 0}, {"q_count": 5, "step_clip": 0}, {"q_count": 5, "attraction": "x"},
                {"q_count": 5, "lambda_mode": "x"}, {"q_count": 5, "max_iters": -1}):
        with pytest.raises(InvalidInputError):
            OptimizerConfig(**bad)


def test_runlog_csv(tmp_path, plane):
    _, log = run_mlop(plane, OptimizerConfig(q_count=20, max_iters=2))
    path = tmp_path / "log.csv"
    log.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(RunLog.COLUMNS)
    assert len(lines) == 4


def test_sketch_used_in_high_dimension():
    p = generate(GeneratorSpec("cylinder2d", 200, seed=0, noise=0.0))
    setup = prepare(p, OptimizerConfig(q_count=50))
    assert setup.sketch is not None
    setup = prepare(p, OptimizerConfig(q_count=50, use_sketch=False))
    assert setup.sketch is None
