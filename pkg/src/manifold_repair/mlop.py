"""Gradient-descent resampling of a noisy cloud P into a quasi-uniform cloud Q.

The cost is the Gaussian-weighted H_eps attraction of Q to P plus a
balanced repulsion between Q points.  Each Q point carries its own balancing
factor (fixed at the first iteration) and its own Barzilai-Borwein step.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import KernelParams, PointCloud, as_coords
from .engine import Engine
from .errors import InvalidInputError, NumericalAbort
from .neighborhoods import NeighborhoodPlan, make_plan, nearest_neighbor_distances
from .sketch import SketchOperator, build_sketch, default_sketch_dim

log = logging.getLogger(__name__)

FIRST_STEP_FRACTION = 0.1
BB_DENOM_FLOOR = 1e-30


@dataclass(frozen=True)
class OptimizerConfig:
    q_count: int
    max_iters: int = 100
    grad_tol: float = 0.0
    seed: int = 0
    sketch_m: int | None = None
    use_sketch: bool = True
    step_clip: float = 0.5
    log_every: int = 1
    threads: int = 1
    eps_h: float = 0.1
    eps_rel: float | None = None
    bb_safeguard: bool = True
    attraction: str = "literal"
    lambda_mode: str = "per_point"

    def __post_init__(self):
        if self.q_count < 1:
            raise InvalidInputError("q_count must be positive")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be nonnegative")
        if not self.step_clip > 0:
            raise InvalidInputError("step_clip must be positive")
        if self.grad_tol < 0:
            raise InvalidInputError("grad_tol must be nonnegative")
        if self.attraction not in ("literal", "frozen"):
            raise InvalidInputError("attraction must be 'literal' or 'frozen'")
        if self.lambda_mode not in ("per_point", "median"):
            raise InvalidInputError("lambda_mode must be 'per_point' or 'median'")
        if self.log_every < 1:
            raise InvalidInputError("log_every must be positive")


@dataclass
class OptimizerState:
    q_curr: np.ndarray
    q_prev: np.ndarray | None = None
    grad_curr: np.ndarray | None = None
    grad_prev: np.ndarray | None = None
    lam: np.ndarray | None = None
    gamma: np.ndarray | None = None
    iter: int = 0
    starved: int = 0
    isolated: int = 0

    @classmethod
    def start(cls, q) -> "OptimizerState":
        return cls(q_curr=np.array(as_coords(q), dtype=np.float64, copy=True))


@dataclass
class RunLog:
    rows: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    COLUMNS = ("iteration", "median_grad_norm", "max_grad_norm", "median_nn_dist",
               "max_nn_dist", "wall_ms")

    def record(self, iteration, grad, q, t0):
        gn = np.linalg.norm(grad, axis=1) if grad is not None else np.zeros(1)
        nn = nearest_neighbor_distances(q) if q.shape[0] >= 2 else np.zeros(1)
        self.rows.append({
            "iteration": int(iteration),
            "median_grad_norm": float(np.median(gn)),
            "max_grad_norm": float(gn.max()),
            "median_nn_dist": float(np.median(nn)),
            "max_nn_dist": float(nn.max()),
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        })

    def extend(self, other: "RunLog", offset: int = 0):
        for row in other.rows:
            self.rows.append(dict(row, iteration=row["iteration"] + offset))

    def grad_norm_history(self):
        return [r["median_grad_norm"] for r in self.rows]

    def write_csv(self, path, extra_columns=()):
        cols = list(self.COLUMNS) + [c for c in extra_columns if c not in self.COLUMNS]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def init_q(p, i_count: int, seed: int, bias=None) -> PointCloud:
    """i_count distinct rows of P, drawn without replacement.

    ``bias`` optionally gives nonnegative per-row sampling weights.
    """
    x = as_coords(p)
    j = x.shape[0]
    if i_count > j:
        raise InvalidInputError(f"cannot draw {i_count} points from a cloud of {j}")
    if i_count < 1:
        raise InvalidInputError("i_count must be positive")
    rng = np.random.default_rng(seed)
    if bias is None:
        idx = rng.choice(j, size=i_count, replace=False)
    else:
        w = np.asarray(bias, dtype=np.float64)
        idx = rng.choice(j, size=i_count, replace=False, p=w / w.sum())
    return PointCloud(x[idx])


def _single_engine(p, params, sketch, truncate):
    return Engine(as_coords(p), params, sketch=sketch, truncate=truncate)


def attraction_gradient(qi, p, params: KernelParams, sketch: SketchOperator | None = None,
                        truncate: bool = True) -> np.ndarray:
    """Sum over P of (qi - p_j) * alpha_j, restricted to the truncation radius."""
    eng = _single_engine(p, params, sketch, truncate)
    return eng.terms(np.atleast_2d(qi), repulsion=False).attraction[0]


def repulsion_gradient(index: int, q, params: KernelParams, sketch: SketchOperator | None = None,
                       truncate: bool = True) -> np.ndarray:
    """Sum over the other Q points of (q_index - q_i) * beta_i."""
    q = as_coords(q)
    eng = Engine(q[:1], params, sketch=sketch, truncate=truncate)
    return eng.terms(q, attraction=False).repulsion[index]


def lambda_init(attr, rep) -> float:
    """Balancing factor -|attr| / |rep|; 0 for an isolated point."""
    na = float(np.linalg.norm(attr))
    nr = float(np.linalg.norm(rep))
    if nr == 0.0:
        return 0.0
    return -na / nr


def lambda_init_all(attr, rep):
    na = np.linalg.norm(attr, axis=1)
    nr = np.linalg.norm(rep, axis=1)
    lam = np.zeros_like(na)
    ok = nr > 0
    lam[ok] = -na[ok] / nr[ok]
    return lam, int((~ok).sum())


def lambda_median(attr, rep, count):
    """One shared factor -median|attr| / median|rep| for every point."""
    mr = float(np.median(np.linalg.norm(rep, axis=1)))
    ma = float(np.median(np.linalg.norm(attr, axis=1)))
    return np.full(count, -ma / mr if mr > 0 else 0.0)


def bb_step(dq, dg, step_clip: float = np.inf, h2: float = 1.0, previous: float = 0.0,
            grad_norm: float | None = None) -> float:
    """Barzilai-Borwein step <dq, dg> / <dg, dg> for one point.

    With ``grad_norm`` given, the step is clipped so the displacement
    |gamma| * grad_norm does not exceed ``step_clip * h2``.
    """
    dq = np.ravel(dq)
    dg = np.ravel(dg)
    den = float(np.dot(dg, dg))
    if den < BB_DENOM_FLOOR:
        return previous
    gamma = float(np.dot(dq, dg)) / den
    if grad_norm is not None and grad_norm > 0:
        limit = step_clip * h2 / grad_norm
        gamma = float(np.clip(gamma, -limit, limit))
    return gamma


def bb_steps(dq, dg, previous, step_clip, h2, grad, safeguard=True):
    """Vectorised :func:`bb_step` over all points.

    With ``safeguard`` a non-positive quotient (negative curvature along the
    last step, or a stalled point) keeps the previous step instead.
    """
    den = np.einsum("ij,ij->i", dg, dg)
    num = np.einsum("ij,ij->i", dq, dg)
    gamma = np.array(previous, dtype=np.float64, copy=True)
    ok = den >= BB_DENOM_FLOOR
    if safeguard:
        ok &= num > 0
    gamma[ok] = num[ok] / den[ok]
    return clip_steps(gamma, grad, step_clip, h2)


def clip_steps(gamma, grad, step_clip, h2):
    gn = np.linalg.norm(grad, axis=1)
    limit = np.full_like(gn, np.inf)
    nz = gn > 0
    limit[nz] = step_clip * h2 / gn[nz]
    return np.clip(gamma, -limit, limit)


def first_steps(grad, h2, count):
    gmax = float(np.linalg.norm(grad, axis=1).max()) if count else 0.0
    g0 = FIRST_STEP_FRACTION * h2 / gmax if gmax > 0 else 0.0
    return np.full(count, g0)


def cancelled(grad, scale, rel=1e-12):
    """Points whose summed gradient is rounding noise relative to its parts."""
    return np.linalg.norm(grad, axis=1) <= rel * scale


def check_finite(q_next, iteration):
    bad = ~np.isfinite(q_next).all(axis=1)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericalAbort(f"non-finite update for point {idx} at iteration {iteration}",
                             point_index=idx, iteration=iteration)


def mlop_iterate(state: OptimizerState, engine: Engine, config: OptimizerConfig) -> OptimizerState:
    """One gradient-descent step; returns the advanced state (input is not modified)."""
    q = state.q_curr
    t = engine.terms(q)
    lam = state.lam
    isolated = state.isolated
    if lam is None:
        lam, isolated = lambda_init_all(t.attraction, t.repulsion)
        if config.lambda_mode == "median":
            lam = lambda_median(t.attraction, t.repulsion, lam.shape[0])
        if isolated:
            log.warning("%d Q points have no repulsion neighbours; their balance factor is 0", isolated)
    # lam is negative; adding lam * rep subtracts |lam| * rep so that the Q-Q term repels.
    rep = lam[:, None] * t.repulsion
    grad = t.attraction + rep
    scale = np.linalg.norm(t.attraction, axis=1) + np.linalg.norm(rep, axis=1)
    starved = t.p_support == 0
    grad[starved | cancelled(grad, scale)] = 0.0
    h2 = engine.params.h2
    if state.grad_curr is None:
        gamma = first_steps(grad, h2, q.shape[0])
        gamma = clip_steps(gamma, grad, config.step_clip, h2)
    else:
        gamma = bb_steps(q - state.q_prev, grad - state.grad_curr, state.gamma,
                         config.step_clip, h2, grad, config.bb_safeguard)
    q_next = q - gamma[:, None] * grad
    check_finite(q_next, state.iter + 1)
    return OptimizerState(
        q_curr=q_next,
        q_prev=q,
        grad_curr=grad,
        grad_prev=state.grad_curr,
        lam=lam,
        gamma=gamma,
        iter=state.iter + 1,
        starved=int(starved.sum()),
        isolated=isolated,
    )


def resolve_eps(config: OptimizerConfig, h1: float) -> float:
    """Absolute H_eps parameter: ``eps_rel * h1**2`` when relative scaling is requested."""
    eps = config.eps_h if config.eps_rel is None else config.eps_rel * h1 * h1
    if 2.0 * eps >= h1 * h1:
        log.warning("eps_h=%.3g is too large for h1=%.3g: the attraction coefficient is negative "
                    "at every distance; consider eps_rel", eps, h1)
    return eps


@dataclass
class Setup:
    """Everything a run needs besides the iterate: plan, kernel params, sketch, engine."""

    p: np.ndarray
    q0: np.ndarray
    plan: NeighborhoodPlan
    params: KernelParams
    sketch: SketchOperator | None
    engine: Engine


def prepare(p, config: OptimizerConfig, q0=None) -> Setup:
    """Draw Q0 (unless given), build the sketch and choose kernel supports."""
    x = as_coords(p)
    if config.q_count > x.shape[0]:
        raise InvalidInputError(f"q_count {config.q_count} exceeds the number of input points {x.shape[0]}")
    q0 = as_coords(init_q(x, config.q_count, config.seed)) if q0 is None else as_coords(q0)
    sketch = None
    if config.use_sketch:
        m = config.sketch_m if config.sketch_m is not None else default_sketch_dim(x.shape[1], x.shape[0])
        if m is not None and m < x.shape[1]:
            sketch = build_sketch(x, m, config.seed)
    if sketch is not None:
        plan = make_plan(x @ sketch.s_matrix, q0 @ sketch.s_matrix)
    else:
        plan = make_plan(x, q0)
    params = KernelParams(h1=plan.h1, h2=plan.h2, eps_h=resolve_eps(config, plan.h1),
                          frozen_weights=config.attraction == "frozen")
    engine = Engine(x, params, sketch=sketch, threads=config.threads)
    return Setup(p=x, q0=np.array(q0, copy=True), plan=plan, params=params, sketch=sketch, engine=engine)


def run_mlop(p, config: OptimizerConfig, q0=None, setup: Setup | None = None):
    """Run MLOP to ``max_iters`` (or until the median gradient norm drops below ``grad_tol``).

    Returns ``(Q, RunLog)``.  On a numerical abort the exception carries the
    partial log as ``exc.run_log``.
    """
    setup = setup or prepare(p, config, q0=q0)
    runlog = RunLog(info={"h0_p": setup.plan.h0_p, "h0_q": setup.plan.h0_q, "h1": setup.plan.h1,
                          "h2": setup.plan.h2, "c1": setup.plan.c1, "nu": setup.plan.nu,
                          "sketch_m": setup.sketch.m if setup.sketch else None})
    state = OptimizerState.start(setup.q0)
    t0 = time.perf_counter()
    runlog.record(0, None, state.q_curr, t0)
    try:
        state = iterate_mlop(state, setup.engine, config, runlog, t0)
    except NumericalAbort as exc:
        exc.run_log = runlog
        raise
    runlog.info["starved_point_count"] = state.starved
    return PointCloud(state.q_curr), runlog


def iterate_mlop(state, engine, config, runlog, t0, iters=None):
    iters = config.max_iters if iters is None else iters
    for _ in range(iters):
        state = mlop_iterate(state, engine, config)
        med = float(np.median(np.linalg.norm(state.grad_curr, axis=1)))
        if state.iter % config.log_every == 0 or state.iter == iters:
            runlog.record(state.iter, state.grad_curr, state.q_curr, t0)
        if config.grad_tol > 0 and med < config.grad_tol:
            break
    return state


def with_iters(config: OptimizerConfig, iters: int) -> OptimizerConfig:
    return replace(config, max_iters=iters)
