"""Locate holes from the density structure of a quasi-uniform cloud.

Boundary candidates have a low ball count or a one-sided neighbourhood.
Candidates are grouped by single linkage; a group whose estimated center
is empty and whose members face that center is a hole rim.  Remaining
groups are manifold boundary or outliers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

from .core import as_coords
from .errors import InsufficientDataError
from .mlop import OptimizerConfig, run_mlop
from .neighborhoods import SpatialIndex, fill_distance
from .rmlop import HoleSpec

log = logging.getLogger(__name__)

INTERIOR, MANIFOLD_BOUNDARY, HOLE_BOUNDARY, OUTLIER = "interior", "manifold_boundary", "hole_boundary", "outlier"

# Ball radius used for scoring, as a multiple of the fill distance of Q.
RADIUS_FACTOR = 2.0
MIN_CLUSTER = 3
EMPTY_CENTER = 0.5
ONE_SIDED = 0.2
FACING = 0.5


@dataclass(frozen=True)
class BoundaryLabel:
    labels: np.ndarray  # object array of label strings
    scores: np.ndarray
    counts: np.ndarray
    h02: float
    groups: tuple = ()  # member index arrays of the accepted hole rims

    def indices(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def _mad(x):
    med = np.median(x)
    return float(np.median(np.abs(x - med)))


def boundary_scores(q, h02: float, index: SpatialIndex | None = None) -> np.ndarray:
    """a_i = #{Q in B(q_i, 2 h02)} / #{Q in B(q_i, h02)}, counts including q_i."""
    x = as_coords(q)
    index = index or SpatialIndex(x)
    small = index.count(x, h02)
    big = index.count(x, 2.0 * h02)
    return big / small


def one_sidedness(x, index: SpatialIndex, radius: float) -> np.ndarray:
    """Unit vectors from each point toward the empty side of its neighbourhood, and their strength.

    The strength is |mean(B(y, radius)) - y| / radius; it is near zero in the
    interior of a uniform sample and grows at any boundary.
    """
    mean = np.empty_like(x)
    for i, y in enumerate(x):
        mean[i] = x[index.query(y, radius)].mean(axis=0)
    y_minus = x - mean
    strength = np.linalg.norm(y_minus, axis=1)
    unit = np.zeros_like(x)
    nz = strength > 0
    unit[nz] = y_minus[nz] / strength[nz, None]
    return unit, strength / radius


def _is_hole(x, members, hole, unit, index, h02):
    if hole is None or hole.radius < h02:
        return False
    if index.knn_distance(hole.center, 1)[0] < EMPTY_CENTER * hole.radius:
        return False
    to_c = hole.center - x[members]
    norm = np.linalg.norm(to_c, axis=1)
    ok = norm > 0
    cos = np.einsum("ij,ij->i", unit[members][ok], to_c[ok] / norm[ok, None])
    return bool(cos.size) and float(cos.mean()) > FACING


def classify_points(q, h02: float | None = None) -> BoundaryLabel:
    """Label every point interior, manifold boundary, hole boundary or outlier.

    Boundary candidates have a low h02-ball count (below median - 2 MAD) or
    an unusually one-sided neighbourhood (strength above both 0.2 and
    median + 3 MAD).  Candidates are grouped by single
    linkage at 2 h02; a group is a hole rim when its estimated center is
    empty, its radius is at least h02 and its members face the center.
    Other groups of three or more are manifold boundary; smaller ones are
    outliers.  The ratio score a_i is returned alongside.
    """
    x = as_coords(q)
    if x.shape[0] < 3:
        raise InsufficientDataError("hole classification needs at least three points")
    h02 = RADIUS_FACTOR * fill_distance(x) if h02 is None else float(h02)
    index = SpatialIndex(x)
    counts = index.count(x, h02)
    scores = index.count(x, 2.0 * h02) / counts
    unit, strength = one_sidedness(x, index, 2.0 * h02)

    med_c, mad_c = float(np.median(counts)), _mad(counts)
    med_s, mad_s = float(np.median(strength)), _mad(strength)
    sided = strength > max(ONE_SIDED, med_s + 3.0 * mad_s)
    cand = np.flatnonzero((counts < med_c - 2.0 * mad_c) | sided)
    labels = np.full(x.shape[0], INTERIOR, dtype=object)
    groups = []
    for grp in cluster_rim(x[cand], 2.0 * h02):
        members = cand[grp]
        if members.size < MIN_CLUSTER:
            labels[members] = OUTLIER
            continue
        hole = estimate_hole(x[members])
        if _is_hole(x, members, hole, unit, index, h02):
            labels[members] = HOLE_BOUNDARY
            groups.append(members)
        else:
            labels[members] = MANIFOLD_BOUNDARY
    return BoundaryLabel(labels=labels, scores=scores, counts=counts, h02=h02, groups=tuple(groups))


def estimate_hole(points) -> HoleSpec | None:
    """Center of mass and half the diameter of a set of rim points; None for fewer than 3."""
    x = as_coords(points)
    if x.shape[0] < MIN_CLUSTER:
        return None
    diam = float(pdist(x).max())
    if diam == 0.0:
        return None
    return HoleSpec(center=x.mean(axis=0), radius=0.5 * diam)


def cluster_rim(points, link_dist: float) -> list[np.ndarray]:
    """Single-linkage groups (index arrays) of rim points at the given linking distance."""
    x = as_coords(points)
    if x.shape[0] == 0:
        return []
    if x.shape[0] == 1:
        return [np.array([0])]
    z = linkage(x, method="single")
    ids = fcluster(z, t=link_dist, criterion="distance")
    groups = [np.flatnonzero(ids == k) for k in np.unique(ids)]
    groups.sort(key=lambda g: int(g[0]))
    return groups


def holes_from_cloud(q, h02: float | None = None):
    """Classify an already resampled cloud and estimate one hole per rim group.

    Returns ``(holes, labels)``.
    """
    x = as_coords(q)
    labels = classify_points(x, h02)
    holes = [estimate_hole(x[g]) for g in labels.groups]
    return holes, labels


def detect_holes(p, config: OptimizerConfig | None = None, run_resample: bool = True):
    """Resample P with MLOP (unless ``run_resample`` is False), then locate holes."""
    x = as_coords(p)
    if run_resample and config is not None and config.max_iters > 0:
        q, _ = run_mlop(x, config)
        x = q.coords
    holes, _ = holes_from_cloud(x)
    return holes
