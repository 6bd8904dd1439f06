"""Fill distance, kernel support selection and exact fixed-radius queries."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import as_coords
from .errors import InsufficientDataError, InvalidInputError

log = logging.getLogger(__name__)

C1_GRID = np.round(np.arange(10, 201) / 10.0, 1)
TRUNCATION = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class NeighborhoodPlan:
    h0_p: float
    h0_q: float
    c1: float
    c1_q: float
    nu: int
    h1: float
    h2: float
    capped: bool = False

    @property
    def radius_p(self) -> float:
        """Truncation radius of the Q-to-P kernel."""
        return TRUNCATION * self.h1

    @property
    def radius_q(self) -> float:
        return TRUNCATION * self.h2

    def scaled(self, s: float) -> "NeighborhoodPlan":
        return NeighborhoodPlan(self.h0_p * s, self.h0_q * s, self.c1, self.c1_q, self.nu,
                                self.h1 * s, self.h2 * s, self.capped)


class SpatialIndex:
    """Exact fixed-radius neighbour search over a point set.

    A k-d tree proposes candidates; membership is then decided with the same
    Euclidean distance expression a brute-force scan would use, so results
    agree with a linear scan bit for bit.
    """

    def __init__(self, coords):
        self.coords = np.ascontiguousarray(as_coords(coords))
        self._tree = cKDTree(self.coords)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def __len__(self):
        return self.coords.shape[0]

    def query(self, center, radius: float) -> np.ndarray:
        center = np.asarray(center, dtype=np.float64).ravel()
        if center.shape[0] != self.dim:
            raise InvalidInputError(f"query point has dimension {center.shape[0]}, index has {self.dim}")
        if radius < 0:
            raise InvalidInputError("radius must be nonnegative")
        cand = self._tree.query_ball_point(center, radius * (1 + 1e-9) + 1e-300)
        cand = np.asarray(sorted(cand), dtype=np.intp)
        if cand.size == 0:
            return cand
        d = np.sqrt(((self.coords[cand] - center) ** 2).sum(axis=1))
        return cand[d <= radius]

    def count(self, centers, radius: float) -> np.ndarray:
        return np.array([self.query(c, radius).size for c in np.atleast_2d(centers)], dtype=np.intp)

    def knn_distance(self, centers, k: int) -> np.ndarray:
        """Distance from each center to its k-th nearest indexed point (k >= 1, self included)."""
        dist, _ = self._tree.query(np.atleast_2d(centers), k=[k])
        return dist[:, 0]


def range_query(index: SpatialIndex, center, radius: float) -> list[int]:
    return [int(i) for i in index.query(center, radius)]


def brute_force_range(coords, center, radius):
    coords = as_coords(coords)
    d = np.sqrt(((coords - np.asarray(center, dtype=np.float64)) ** 2).sum(axis=1))
    return np.flatnonzero(d <= radius)


def nearest_neighbor_distances(cloud) -> np.ndarray:
    """Distance from every point to its nearest other point."""
    x = as_coords(cloud)
    if x.shape[0] < 2:
        raise InsufficientDataError("nearest-neighbour distances need at least two points")
    dist, _ = cKDTree(x).query(x, k=2)
    return dist[:, 1]


def fill_distance(cloud) -> float:
    """Median over points of the distance to the nearest other point."""
    return float(np.median(nearest_neighbor_distances(cloud)))


def radius_multiplier_c1(p, q, h0_p: float, nu: int | None = None) -> tuple[float, bool]:
    """Smallest grid multiplier c such that every q has >= nu points of P within c*h0_p.

    Returns ``(c, capped)``; ``capped`` is True when even the largest grid
    value fails and 20.0 is returned.
    """
    p = as_coords(p)
    q = as_coords(q)
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise InsufficientDataError("empty point cloud")
    if nu is None:
        if q.shape[0] > p.shape[0]:
            raise InvalidInputError("Q may not have more points than P")
        nu = p.shape[0] // q.shape[0]
    if not h0_p > 0:
        raise InsufficientDataError("fill distance is zero; the cloud has duplicate points only")
    need = SpatialIndex(p).knn_distance(q, nu).max()
    ok = C1_GRID * h0_p >= need
    if not ok.any():
        log.warning("radius multiplier capped at %.1f (nu-th neighbour at %.3g = %.1f h0)",
                    C1_GRID[-1], need, need / h0_p)
        return float(C1_GRID[-1]), True
    return float(C1_GRID[np.argmax(ok)]), False


def make_plan(p, q) -> NeighborhoodPlan:
    """Kernel supports h1 (Q-to-P) and h2 (Q-to-Q) from the fill distances of P and Q."""
    p = as_coords(p)
    q = as_coords(q)
    if q.shape[0] > p.shape[0]:
        raise InvalidInputError("Q may not have more points than P")
    if q.shape[0] < 2:
        raise InsufficientDataError("the Q-kernel support needs at least two Q points")
    nu = p.shape[0] // q.shape[0]
    h0_p = fill_distance(p)
    h0_q = fill_distance(q)
    c1, capped = radius_multiplier_c1(p, q, h0_p, nu)
    c1_q, capped_q = radius_multiplier_c1(q, q, h0_q, 1)
    return NeighborhoodPlan(
        h0_p=h0_p,
        h0_q=h0_q,
        c1=c1,
        c1_q=c1_q,
        nu=nu,
        h1=TRUNCATION * c1 * h0_p,
        h2=TRUNCATION * c1_q * h0_q,
        capped=capped or capped_q,
    )
