"""Blocked evaluation of the per-point gradient terms.

Rows of Q are processed in blocks of fixed size ``BLOCK``; a thread pool
only decides which worker handles which block.  Every block is evaluated
with identical array shapes and operation order whatever the worker count,
so results are bitwise independent of ``threads``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import KernelParams, alpha_from_sq, beta_from_dist
from .neighborhoods import TRUNCATION
from .sketch import SketchOperator

BLOCK = 32


@dataclass
class TermGradients:
    attraction: np.ndarray | None = None
    repulsion: np.ndarray | None = None
    e3: np.ndarray | None = None
    p_support: np.ndarray | None = None  # number of P points inside the truncation radius
    q_support: np.ndarray | None = None


class Engine:
    """Gradient terms for a fixed data set P and kernel parameters."""

    def __init__(self, p, params: KernelParams, sketch: SketchOperator | None = None,
                 threads: int = 1, truncate: bool = True):
        self.p = np.ascontiguousarray(p, dtype=np.float64)
        self.params = params
        self.sketch = sketch
        self.threads = max(1, int(threads))
        self.truncate = truncate
        self.p_s = self.reduce(self.p)

    def reduce(self, x):
        """Coordinates used for distance evaluation (sketched when a sketch is set)."""
        if self.sketch is None:
            return x
        return np.ascontiguousarray(x @ self.sketch.s_matrix)

    @property
    def radius_p(self) -> float:
        return TRUNCATION * self.params.h1 if self.truncate else np.inf

    @property
    def radius_q(self) -> float:
        return TRUNCATION * self.params.h2 if self.truncate else np.inf

    def _map_blocks(self, fn, count):
        starts = list(range(0, count, BLOCK))
        if self.threads == 1 or len(starts) == 1:
            return [fn(s, min(s + BLOCK, count)) for s in starts]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(lambda s: fn(s, min(s + BLOCK, count)), starts))

    def terms(self, q, attraction=True, repulsion=True, e3=False) -> TermGradients:
        q = np.ascontiguousarray(q, dtype=np.float64)
        q_s = self.reduce(q)
        count = q.shape[0]
        rp2 = self.radius_p**2
        rq2 = self.radius_q**2
        prm = self.params

        def block(lo, hi):
            out = {}
            qb = q[lo:hi]
            if attraction:
                diff = qb[:, None, :] - self.p[None, :, :]
                if self.sketch is None:
                    sq = np.einsum("ijk,ijk->ij", diff, diff)
                else:
                    ds = q_s[lo:hi, None, :] - self.p_s[None, :, :]
                    sq = np.einsum("ijk,ijk->ij", ds, ds)
                inside = sq <= rp2
                coef = np.where(inside, alpha_from_sq(sq, prm), 0.0)
                out["attraction"] = np.einsum("ij,ijk->ik", coef, diff)
                out["p_support"] = inside.sum(axis=1)
            if repulsion or e3:
                diff = qb[:, None, :] - q[None, :, :]
                if self.sketch is None:
                    sq = np.einsum("ijk,ijk->ij", diff, diff)
                else:
                    ds = q_s[lo:hi, None, :] - q_s[None, :, :]
                    sq = np.einsum("ijk,ijk->ij", ds, ds)
                inside = sq <= rq2
                inside[np.arange(hi - lo), np.arange(lo, hi)] = False
                out["q_support"] = inside.sum(axis=1)
                if repulsion:
                    coef = np.where(inside, beta_from_dist(np.sqrt(sq), prm), 0.0)
                    out["repulsion"] = np.einsum("ij,ijk->ik", coef, diff)
                if e3:
                    s = sq / (prm.h2 * prm.h2)
                    w = np.where(inside, np.exp(-s), 0.0)
                    vec = np.einsum("ij,ijk->ik", w, diff)
                    scal = ((1.0 - 2.0 * s) * w).sum(axis=1)
                    out["e3"] = 2.0 * vec * scal[:, None]
            return out

        parts = self._map_blocks(block, count)
        res = TermGradients()
        for key in ("attraction", "repulsion", "e3", "p_support", "q_support"):
            if key in parts[0]:
                setattr(res, key, np.concatenate([part[key] for part in parts], axis=0))
        return res
