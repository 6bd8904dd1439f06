"""Random linear sketching for distance evaluation in high ambient dimension.

Construction: draw a J x m standard normal matrix G from
``numpy.random.default_rng(seed)`` (PCG64 bit generator, ziggurat normals,
filled row-major), form B = P^T G, and keep the orthonormal factor S of the
reduced QR decomposition B = S R.  Distances are then measured as
|S^T (x - y)|.  The optimizers only use S for norms; all point updates stay
in R^n.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import as_coords
from .errors import InvalidInputError

log = logging.getLogger(__name__)

SKETCH_THRESHOLD = 40


@dataclass(frozen=True)
class SketchOperator:
    s_matrix: np.ndarray
    seed: int
    requested_m: int
    warnings: tuple = field(default=())

    @property
    def m(self) -> int:
        return self.s_matrix.shape[1]

    @property
    def n(self) -> int:
        return self.s_matrix.shape[0]


def default_sketch_dim(n: int, j: int) -> int | None:
    """Reduced dimension used when none is requested; None means no sketching."""
    if n <= SKETCH_THRESHOLD:
        return None
    return min(SKETCH_THRESHOLD, n, j)


def build_sketch(p, m: int, seed: int) -> SketchOperator:
    x = as_coords(p)
    j, n = x.shape
    if m < 1:
        raise InvalidInputError("sketch dimension must be positive")
    if m > n:
        raise InvalidInputError(f"sketch dimension {m} exceeds ambient dimension {n}")
    notes = []
    if m > j:
        notes.append(f"sketch dimension reduced from {m} to {j} (only {j} points)")
        m_eff = j
    else:
        m_eff = m
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((j, m_eff))
    b = x.T @ g
    s, r = np.linalg.qr(b, mode="reduced")
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(b.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < m_eff:
        # Rank-deficient P: keep an orthonormal basis of the column space only.
        u, sv, _ = np.linalg.svd(b, full_matrices=False)
        rank = int((sv > sv[0] * max(b.shape) * np.finfo(float).eps).sum()) if sv.size else 0
        rank = max(rank, 1)
        s = u[:, :rank]
        notes.append(f"sketch dimension reduced from {m_eff} to {rank} (rank of P^T G)")
    for msg in notes:
        log.warning(msg)
    s = np.ascontiguousarray(s)
    s.setflags(write=False)
    return SketchOperator(s_matrix=s, seed=int(seed), requested_m=int(m), warnings=tuple(notes))


def project(op: SketchOperator, x) -> np.ndarray:
    """S^T x for a single point or for every row of a matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != op.n:
        raise InvalidInputError(f"dimension mismatch: sketch expects {op.n}, got {arr.shape[-1]}")
    return arr @ op.s_matrix
