"""Kernels, smoothed norms and gradient coefficients used by the optimizers.

Scalar helpers accept plain floats or numpy arrays and broadcast; every
function here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

DEFAULT_EPS_H = 0.1


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of points in R^n, stored row-major (one row per point)."""

    coords: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.array(self.coords, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise InvalidInputError(f"point cloud must be a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError("point cloud must contain at least one point of dimension >= 1")
        bad = ~np.isfinite(arr)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise InvalidInputError(f"non-finite coordinate in point {row}")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def count(self) -> int:
        return self.coords.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.coords.shape[1]

    def __len__(self):
        return self.count

    def take(self, indices) -> "PointCloud":
        return PointCloud(self.coords[np.asarray(indices, dtype=np.intp)])


def as_coords(cloud) -> np.ndarray:
    """Coordinates of a PointCloud or array-like as a float64 2-D array."""
    if isinstance(cloud, PointCloud):
        return cloud.coords
    arr = np.asarray(cloud, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


@dataclass(frozen=True)
class KernelParams:
    """Support sizes of the two Gaussian kernels plus the H_eps parameter.

    ``h1`` scales the Q-to-P weights, ``h2`` the Q-to-Q weights.  Distances
    are floored at ``r_floor`` wherever a kernel is singular at zero.

    With ``frozen_weights`` the attraction coefficient drops the derivative
    of the Gaussian weight (w / d_H instead of the full derivative), i.e. the
    weights are treated as constants during each step, as in classic LOP.
    """

    h1: float
    h2: float
    eps_h: float = DEFAULT_EPS_H
    r_floor: float | None = None
    frozen_weights: bool = False

    def __post_init__(self):
        for name in ("h1", "h2", "eps_h"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise InvalidInputError(f"{name} must be a positive finite number, got {val!r}")
        floor = self.r_floor
        if floor is None:
            floor = 1e-9 * min(self.h1, self.h2)
        if not floor > 0 or floor > 1e-6 * min(self.h1, self.h2):
            raise InvalidInputError("r_floor must lie in (0, 1e-6 * min(h1, h2)]")
        object.__setattr__(self, "h1", float(self.h1))
        object.__setattr__(self, "h2", float(self.h2))
        object.__setattr__(self, "eps_h", float(self.eps_h))
        object.__setattr__(self, "r_floor", float(floor))


def _finite(x, what="input"):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"non-finite {what}")
    return arr


def h_eps_norm(v, eps_h: float = DEFAULT_EPS_H) -> float:
    """sqrt(|v|^2 + eps_h): a norm-like quantity that is smooth at v = 0."""
    v = _finite(v, "vector")
    if eps_h < 0 or not np.isfinite(eps_h):
        raise InvalidInputError("eps_h must be nonnegative")
    return float(np.sqrt(np.dot(v.ravel(), v.ravel()) + eps_h))


def h_eps_from_sq(sq_dist, eps_h: float):
    """Vectorised H_eps norm given squared Euclidean lengths."""
    return np.sqrt(np.asarray(sq_dist, dtype=np.float64) + eps_h)


def gaussian_weight(sq_dist, h: float):
    """exp(-sq_dist / h^2)."""
    sq = np.asarray(sq_dist, dtype=np.float64)
    if np.any(sq < 0):
        raise InvalidInputError("squared distance must be nonnegative")
    if not h > 0:
        raise InvalidInputError("kernel support h must be positive")
    out = np.exp(-sq / (h * h))
    return float(out) if out.ndim == 0 else out


def eta(r, r_floor: float):
    """Repulsion potential 1/(3 r^3), with r clamped below at r_floor."""
    rr = np.maximum(np.asarray(r, dtype=np.float64), r_floor)
    out = 1.0 / (3.0 * rr**3)
    return float(out) if out.ndim == 0 else out


def eta_prime(r, r_floor: float):
    rr = np.maximum(np.asarray(r, dtype=np.float64), r_floor)
    out = -1.0 / rr**4
    return float(out) if out.ndim == 0 else out


def alpha_from_sq(sq_dist, params: KernelParams):
    """Attraction coefficient as a function of the squared distance |q - p|^2."""
    sq = np.asarray(sq_dist, dtype=np.float64)
    d_h = np.sqrt(sq + params.eps_h)
    w = np.exp(-sq / (params.h1 * params.h1))
    if params.frozen_weights:
        return w / d_h
    return w * (1.0 - (2.0 / params.h1**2) * d_h * d_h) / d_h


def beta_from_dist(r, params: KernelParams):
    """Repulsion coefficient as a function of the distance |q_i - q_i'|."""
    rr = np.maximum(np.asarray(r, dtype=np.float64), params.r_floor)
    w = np.exp(-rr * rr / (params.h2 * params.h2))
    eta_r = 1.0 / (3.0 * rr**3)
    return (w / rr) * (1.0 / rr**4 + (2.0 / params.h2**2) * eta_r * rr)


def _pair(a, b):
    a = _finite(a, "point").ravel()
    b = _finite(b, "point").ravel()
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def alpha_coeff(qi, pj, params: KernelParams) -> float:
    qi, pj = _pair(qi, pj)
    diff = qi - pj
    return float(alpha_from_sq(np.dot(diff, diff), params))


def beta_coeff(qi, qi2, params: KernelParams) -> float:
    qi, qi2 = _pair(qi, qi2)
    return float(beta_from_dist(np.linalg.norm(qi - qi2), params))


def b_profile(r, h2: float):
    """(1 - 2 r^2 / h2^2) exp(-r^2 / h2^2): the scalar factor of the hole-filling gradient."""
    r = np.asarray(r, dtype=np.float64)
    s = (r / h2) ** 2
    out = (1.0 - 2.0 * s) * np.exp(-s)
    return float(out) if out.ndim == 0 else out
