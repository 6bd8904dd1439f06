"""Hole-aware resampling: MLOP plus a convex-hull attraction term gated by hole weights.

Each Q point carries a weight tau_bar in [0, 1] measuring its proximity to
the known hole(s).  Far from a hole the point follows the usual data
attraction and repulsion; near a hole the data term fades and the E3 term
pulls the point toward the weighted mean of its Q neighbours, which drags
the rim into the hole.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .core import KernelParams, PointCloud, as_coords
from .engine import Engine
from .errors import InvalidInputError
from .mlop import (OptimizerConfig, OptimizerState, RunLog, Setup, bb_steps, cancelled,
                   check_finite, clip_steps, first_steps, iterate_mlop, prepare, run_mlop)
from .neighborhoods import TRUNCATION

log = logging.getLogger(__name__)

RIM_STEP_FACTOR = 0.25


@dataclass(frozen=True)
class HoleSpec:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64, copy=True).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise InvalidInputError("hole center must be a non-empty finite vector")
        r = float(self.radius)
        if not (np.isfinite(r) and r > 0):
            raise InvalidInputError(f"hole radius must be positive, got {self.radius!r}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.size

    def to_json(self) -> dict:
        return {"center": [float(x) for x in self.center], "radius": self.radius}

    def __eq__(self, other):
        return (isinstance(other, HoleSpec) and self.radius == other.radius
                and np.array_equal(self.center, other.center))

    __hash__ = None


@dataclass(frozen=True)
class RepairWeights:
    tau_bar: np.ndarray
    eps_nb: float = 0.1
    degenerate: bool = False

    def __post_init__(self):
        if not 0 < self.eps_nb < 1:
            raise InvalidInputError("eps_nb must lie in (0, 1)")

    @property
    def rim(self) -> np.ndarray:
        """Points inside the eps-neighbourhood of the hole boundary."""
        return self.tau_bar > 1.0 - self.eps_nb


@dataclass(frozen=True)
class BalanceConstants:
    c1: float
    c2: float
    c3: float
    medians: tuple = field(default=(np.nan, np.nan, np.nan))

    def as_tuple(self):
        return (self.c1, self.c2, self.c3)


def _check_dims(q, holes):
    for h in holes:
        if h.dim != q.shape[1]:
            raise InvalidInputError(f"hole center has dimension {h.dim}, cloud has {q.shape[1]}")


def minmax(tau, eps_nb=0.1) -> RepairWeights:
    tau = np.asarray(tau, dtype=np.float64)
    lo, hi = tau.min(), tau.max()
    if not hi > lo:
        return RepairWeights(np.zeros_like(tau), eps_nb, degenerate=True)
    return RepairWeights((tau - lo) / (hi - lo), eps_nb)


def raw_tau(q, hole: HoleSpec) -> np.ndarray:
    d = as_coords(q) - hole.center
    return np.exp(-np.einsum("ij,ij->i", d, d) / hole.radius**2)


def hole_weights(q, hole: HoleSpec, eps_nb: float = 0.1) -> RepairWeights:
    """Min-max normalised Gaussian proximity exp(-|q - c|^2 / r^2)."""
    q = as_coords(q)
    _check_dims(q, [hole])
    return minmax(raw_tau(q, hole), eps_nb)


def multi_hole_weights(q, holes, eps_nb: float = 0.1, literal: bool = False) -> RepairWeights:
    """Combined weights for several holes.

    Default: product of the unnormalised per-hole weights, normalised once,
    so one hole gives exactly :func:`hole_weights`.  ``literal`` normalises
    each hole's weights before the product and renormalises afterwards.

    The product is accumulated in log space: exp(-sum_k |q - c_k|^2 / r_k^2).
    """
    q = as_coords(q)
    holes = list(holes)
    if not holes:
        raise InvalidInputError("at least one hole is required")
    _check_dims(q, holes)
    if len(holes) == 1:
        return hole_weights(q, holes[0], eps_nb)
    if literal:
        prod = np.ones(q.shape[0])
        for h in holes:
            prod = prod * minmax(raw_tau(q, h)).tau_bar
        return minmax(prod, eps_nb)
    expo = np.zeros(q.shape[0])
    for h in holes:
        d = q - h.center
        expo += np.einsum("ij,ij->i", d, d) / h.radius**2
    # Shift before exponentiating; min-max normalisation is invariant to the scale factor.
    return minmax(np.exp(-(expo - expo.min())), eps_nb)


# -- E3 ----------------------------------------------------------------------

def _q_kernel(q, h2, truncate=True):
    q = as_coords(q)
    diff = q[:, None, :] - q[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    w = np.exp(-sq / (h2 * h2))
    if truncate:
        w = np.where(sq <= (TRUNCATION * h2) ** 2, w, 0.0)
    np.fill_diagonal(w, 0.0)
    return w, sq, diff


def laplacian_rows(q, h2, truncate=True) -> np.ndarray:
    """Rows of L Q with L = D - W the graph Laplacian of the Q kernel."""
    w, _, _ = _q_kernel(q, h2, truncate)
    lap = np.diag(w.sum(axis=1)) - w
    return lap @ as_coords(q)


def e3_value(q, weights, h2: float, form: str = "direct", truncate: bool = True) -> float:
    """Weighted sum of squared Laplacian rows: sum_i' tau_i' |q_i' sum_i w - sum_i w q_i|^2."""
    tau = weights.tau_bar if isinstance(weights, RepairWeights) else np.asarray(weights, dtype=np.float64)
    q = as_coords(q)
    if form == "laplacian":
        rows = laplacian_rows(q, h2, truncate)
    elif form == "direct":
        w, _, _ = _q_kernel(q, h2, truncate)
        rows = np.empty_like(q)
        for i in range(q.shape[0]):
            rows[i] = q[i] * w[i].sum() - w[i] @ q
    else:
        raise InvalidInputError(f"unknown E3 form {form!r}")
    return float(np.dot(tau, np.einsum("ij,ij->i", rows, rows)))


def e3_gradient(i_prime: int, q, params: KernelParams, truncate: bool = True) -> np.ndarray:
    """2 [sum_i (q_i' - q_i) w] [sum_i (1 - 2|q_i' - q_i|^2/h2^2) w] for one point."""
    q = as_coords(q)
    eng = Engine(q[:1], params, truncate=truncate)
    return eng.terms(q, attraction=False, repulsion=False, e3=True).e3[i_prime]


# -- balancing ----------------------------------------------------------------

def balance_constants(g1, g2, g3, literal: bool = False) -> BalanceConstants:
    """c_k from the median per-point gradient norm m_k of each term.

    Default c_k = 1/m_k, which brings every term to unit median norm;
    ``literal`` uses c_k = m_k.  A zero median gives c_k = 0.
    """
    meds = []
    consts = []
    for k, g in enumerate((g1, g2, g3), start=1):
        m = float(np.median(np.linalg.norm(np.atleast_2d(g), axis=1)))
        meds.append(m)
        if m == 0.0:
            if k != 3:
                log.warning("term %d has zero median gradient; its balance constant is 0", k)
            consts.append(0.0)
        else:
            consts.append(m if literal else 1.0 / m)
    return BalanceConstants(*consts, medians=tuple(meds))


# -- iteration ----------------------------------------------------------------

@dataclass(frozen=True)
class RepairConfig(OptimizerConfig):
    eps_nb: float = 0.1
    prepass_iters: int = 30
    literal_ck: bool = False
    literal_multihole: bool = False
    coverage_every: int = 0

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.eps_nb < 1:
            raise InvalidInputError("eps_nb must lie in (0, 1)")
        if self.prepass_iters < 0:
            raise InvalidInputError("prepass_iters must be nonnegative")


def repair_terms(engine: Engine, q):
    return engine.terms(q, attraction=True, repulsion=True, e3=True)


def rmlop_iterate(state: OptimizerState, engine: Engine, weights: RepairWeights,
                  consts: BalanceConstants, config: OptimizerConfig, terms=None) -> OptimizerState:
    """One repair step: grad = (1 - tau) c1 attr - c2 rep + tau c3 dE3, rim points at a quarter step."""
    q = state.q_curr
    t = terms if terms is not None else repair_terms(engine, q)
    tau = weights.tau_bar[:, None]
    a = (1.0 - tau) * (consts.c1 * t.attraction)
    r = consts.c2 * t.repulsion
    e = tau * (consts.c3 * t.e3)
    grad = a - r + e
    scale = (np.linalg.norm(a, axis=1) + np.linalg.norm(r, axis=1) + np.linalg.norm(e, axis=1))
    # Without data support only the hole term may move a point.
    starved = (t.p_support == 0) & (weights.tau_bar == 0)
    grad[starved | cancelled(grad, scale)] = 0.0
    h2 = engine.params.h2
    if state.grad_curr is None:
        gamma = clip_steps(first_steps(grad, h2, q.shape[0]), grad, config.step_clip, h2)
    else:
        gamma = bb_steps(q - state.q_prev, grad - state.grad_curr, state.gamma,
                         config.step_clip, h2, grad, config.bb_safeguard)
    step = np.where(weights.rim, RIM_STEP_FACTOR * gamma, gamma)
    q_next = q - step[:, None] * grad
    check_finite(q_next, state.iter + 1)
    return OptimizerState(q_curr=q_next, q_prev=q, grad_curr=grad, grad_prev=state.grad_curr,
                          lam=state.lam, gamma=gamma, iter=state.iter + 1,
                          starved=int((t.p_support == 0).sum()), isolated=state.isolated)


@dataclass
class RepairResult:
    q: PointCloud
    log: RunLog
    weights: RepairWeights | None
    consts: BalanceConstants | None
    q_prepass: np.ndarray | None = None


def compute_weights(q, holes, config: RepairConfig) -> RepairWeights:
    return multi_hole_weights(q, holes, config.eps_nb, config.literal_multihole)


def run_rmlop_full(p, holes, config: RepairConfig, q0=None, setup: Setup | None = None,
                   coverage_fn=None) -> RepairResult:
    """Pre-pass, weights, balancing and the repair loop; returns every intermediate product.

    ``coverage_fn(q) -> list[float]``, if given, is evaluated every
    ``config.coverage_every`` iterations and stored in the log.
    """
    holes = list(holes or [])
    if not holes:
        q, runlog = run_mlop(p, config, q0=q0, setup=setup)
        return RepairResult(q, runlog, None, None)
    setup = setup or prepare(p, config, q0=q0)
    _check_dims(setup.p, holes)
    runlog = RunLog(info={"h0_p": setup.plan.h0_p, "h0_q": setup.plan.h0_q, "h1": setup.plan.h1,
                          "h2": setup.plan.h2, "c1_radius": setup.plan.c1, "nu": setup.plan.nu,
                          "sketch_m": setup.sketch.m if setup.sketch else None,
                          "prepass_iters": config.prepass_iters, "holes": len(holes)})
    t0 = time.perf_counter()
    state = OptimizerState.start(setup.q0)
    runlog.record(0, None, state.q_curr, t0)
    _coverage(runlog, coverage_fn, state.q_curr, 0)
    q_pre = None
    if config.prepass_iters > 0:
        state = iterate_mlop(state, setup.engine, config, runlog, t0, iters=config.prepass_iters)
        q_pre = state.q_curr.copy()
    offset = state.iter
    weights = compute_weights(state.q_curr, holes, config)
    if weights.degenerate:
        log.warning("hole weights are constant over Q; the repair term is inactive")
    rstate = OptimizerState(q_curr=state.q_curr, iter=offset, isolated=state.isolated)
    terms = repair_terms(setup.engine, rstate.q_curr)
    consts = balance_constants(terms.attraction, terms.repulsion, terms.e3, config.literal_ck)
    runlog.info.update({"c1": consts.c1, "c2": consts.c2, "c3": consts.c3,
                        "rim_points": int(weights.rim.sum())})
    for k in range(config.max_iters):
        rstate = rmlop_iterate(rstate, setup.engine, weights, consts, config,
                               terms=terms if k == 0 else None)
        it = rstate.iter
        if (it - offset) % config.log_every == 0 or k == config.max_iters - 1:
            runlog.record(it, rstate.grad_curr, rstate.q_curr, t0)
            if config.coverage_every and ((it - offset) % config.coverage_every == 0
                                          or k == config.max_iters - 1):
                _coverage(runlog, coverage_fn, rstate.q_curr, it)
        med = float(np.median(np.linalg.norm(rstate.grad_curr, axis=1)))
        if config.grad_tol > 0 and med < config.grad_tol:
            break
    runlog.info["starved_point_count"] = rstate.starved
    return RepairResult(PointCloud(rstate.q_curr), runlog, weights, consts, q_pre)


def _coverage(runlog, fn, q, iteration):
    if fn is None:
        return
    runlog.rows[-1]["hole_coverage"] = [float(v) for v in fn(q)]


def run_rmlop(p, holes, config: RepairConfig, q0=None):
    """Returns ``(Q, RunLog)``; zero holes runs plain MLOP."""
    res = run_rmlop_full(p, holes, config, q0=q0)
    return res.q, res.log
