"""Seeded generators for the synthetic test manifolds, noise and hole punching.

All randomness comes from ``numpy.random.default_rng(seed)`` and is drawn
sequentially, parameters first, so a (spec, seed) pair always yields the
same bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import PointCloud, as_coords
from .errors import InvalidInputError

KINDS = ("cylinder2d", "cylinder6d", "cone", "circle", "disk", "annulus", "plane_patch")

_DEFAULTS = {
    "cylinder2d": {"n": 60, "R": 1.0, "t_range": (0.0, 2.0), "u_range": (0.1 * math.pi, 1.5 * math.pi)},
    "cylinder6d": {"n": 60, "R": 1.5, "t_range": (0.0, 2.0), "u_range": (0.1 * math.pi, 0.6 * math.pi)},
    "cone": {"n": 60, "t_range": (0.0, 2.0), "R_range": (0.0, 2.5), "u_range": (0.1 * math.pi, 1.5 * math.pi)},
    "circle": {"n": 3, "radius": 1.0, "regular": False},
    "disk": {"n": 2, "radius": 1.0, "layout": "random", "jitter": 0.0},
    "annulus": {"n": 2, "inner": 0.5, "outer": 1.0, "layout": "random", "jitter": 0.0},
    "plane_patch": {"n": 3, "half_width": 1.0},
}
_INTRINSIC = {"cylinder2d": 2, "cylinder6d": 6, "cone": 3, "circle": 1, "disk": 2, "annulus": 2,
              "plane_patch": 2}
_MIN_N = {"cylinder2d": 4, "cylinder6d": 7, "cone": 4, "circle": 2, "disk": 2, "annulus": 2,
          "plane_patch": 2}


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    count: int
    noise: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown generator kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.count < 1:
            raise InvalidInputError("sample count must be at least 1")
        if self.noise < 0:
            raise InvalidInputError("noise amplitude must be nonnegative")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise InvalidInputError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged.update(self.params)
        if merged["n"] < _MIN_N[self.kind]:
            raise InvalidInputError(f"{self.kind} needs ambient dimension >= {_MIN_N[self.kind]}")
        object.__setattr__(self, "params", merged)

    @property
    def intrinsic_dim(self) -> int:
        return _INTRINSIC[self.kind]

    def ground_truth(self) -> dict:
        return {"kind": self.kind, "count": self.count, "noise": self.noise, "seed": self.seed,
                "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}}


# -- embedding vectors --------------------------------------------------------

def cylinder_axes(n: int, axis_len: int | None = None):
    """v1 (ones on the first axis_len entries), v2 = e2 - e3, v3 = e1 - e4."""
    v1 = np.zeros(n)
    v1[: (n if axis_len is None else axis_len)] = 1.0
    v2 = np.zeros(n)
    v2[1], v2[2] = 1.0, -1.0
    v3 = np.zeros(n)
    v3[0], v3[3] = 1.0, -1.0
    return v1, v2, v3


def cylinder2d_point(t, u, R=1.0, n=60):
    v1, v2, v3 = cylinder_axes(n)
    t = np.atleast_1d(t)[:, None]
    u = np.atleast_1d(u)[:, None]
    return t * v1 + (R / math.sqrt(2.0)) * (np.cos(u) * v2 + np.sin(u) * v3)


def hypersphere(angles, R):
    """Standard hyperspherical coordinates: k angles -> points of radius R in R^(k+1)."""
    angles = np.atleast_2d(angles)
    m, k = angles.shape
    out = np.empty((m, k + 1))
    sin_prod = np.full(m, R, dtype=np.float64)
    for i in range(k):
        out[:, i] = sin_prod * np.cos(angles[:, i])
        sin_prod = sin_prod * np.sin(angles[:, i])
    out[:, k] = sin_prod
    return out


def cylinder6d_point(t, angles, R=1.5, n=60):
    x = hypersphere(angles, R)
    d = x.shape[1]
    v0 = np.zeros(n)
    v0[: d + 1] = 1.0
    out = np.atleast_1d(t)[:, None] * v0
    out[:, :d] += R**2 * x
    return out


def cone_point(t, R, u, n=60):
    v1, v2, v3 = cylinder_axes(n, axis_len=4)
    t = np.atleast_1d(t)[:, None]
    R = np.atleast_1d(R)[:, None]
    u = np.atleast_1d(u)[:, None]
    return t * v1 + (np.exp(-R**2) / math.sqrt(2.0)) * (np.cos(u) * v2 + np.sin(u) * v3)


# -- generators ---------------------------------------------------------------

def _uniform(rng, rng_range, size):
    lo, hi = rng_range
    return rng.uniform(lo, hi, size=size)


def gen_cylinder2d(spec: GeneratorSpec) -> PointCloud:
    prm = spec.params
    rng = np.random.default_rng(spec.seed)
    t = _uniform(rng, prm["t_range"], spec.count)
    u = _uniform(rng, prm["u_range"], spec.count)
    return PointCloud(cylinder2d_point(t, u, prm["R"], prm["n"]))


def gen_cylinder6d(spec: GeneratorSpec) -> PointCloud:
    prm = spec.params
    rng = np.random.default_rng(spec.seed)
    t = _uniform(rng, prm["t_range"], spec.count)
    angles = _uniform(rng, prm["u_range"], (spec.count, 5))
    return PointCloud(cylinder6d_point(t, angles, prm["R"], prm["n"]))


def gen_cone(spec: GeneratorSpec) -> PointCloud:
    prm = spec.params
    rng = np.random.default_rng(spec.seed)
    t = _uniform(rng, prm["t_range"], spec.count)
    R = _uniform(rng, prm["R_range"], spec.count)
    u = _uniform(rng, prm["u_range"], spec.count)
    return PointCloud(cone_point(t, R, u, prm["n"]))


def _embed(xy, n):
    out = np.zeros((xy.shape[0], n))
    out[:, : xy.shape[1]] = xy
    return out


def gen_circle(spec: GeneratorSpec) -> PointCloud:
    prm = spec.params
    if prm["regular"]:
        theta = 2.0 * math.pi * np.arange(spec.count) / spec.count
    else:
        theta = np.random.default_rng(spec.seed).uniform(0.0, 2.0 * math.pi, spec.count)
    xy = prm["radius"] * np.column_stack([np.cos(theta), np.sin(theta)])
    return PointCloud(_embed(xy, prm["n"]))


def _annulus_sample(rng, count, inner, outer):
    rad = np.sqrt(rng.uniform(inner**2, outer**2, count))
    theta = rng.uniform(0.0, 2.0 * math.pi, count)
    return np.column_stack([rad * np.cos(theta), rad * np.sin(theta)])


def hex_spacing(count: int, outer: float) -> float:
    """Lattice spacing giving about ``count`` hexagonal-lattice points in a disk of radius ``outer``."""
    return outer * math.sqrt(2.0 * math.pi / (math.sqrt(3.0) * count))


def _annulus_hex(rng, count, inner, outer, jitter):
    """Hexagonal lattice (spacing from the full-disk count) restricted to the annulus.

    Point count is approximate; ``jitter`` perturbs each point by
    U(-jitter, jitter) times the spacing per coordinate.
    """
    a = hex_spacing(count, outer)
    k = int(math.ceil(outer / a)) + 2
    i, j = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    xy = np.column_stack([(i + 0.5 * j).ravel() * a, (j * math.sqrt(3.0) / 2.0).ravel() * a])
    if jitter > 0:
        xy = xy + rng.uniform(-jitter * a, jitter * a, size=xy.shape)
    rho = np.hypot(xy[:, 0], xy[:, 1])
    return xy[(rho >= inner) & (rho <= outer)]


def _planar_ring(spec, inner, outer):
    prm = spec.params
    rng = np.random.default_rng(spec.seed)
    if prm["layout"] == "hex":
        xy = _annulus_hex(rng, spec.count, inner, outer, prm["jitter"])
    elif prm["layout"] == "random":
        xy = _annulus_sample(rng, spec.count, inner, outer)
    else:
        raise InvalidInputError(f"unknown layout {prm['layout']!r}; expected 'random' or 'hex'")
    return PointCloud(_embed(xy, prm["n"]))


def gen_disk(spec: GeneratorSpec) -> PointCloud:
    return _planar_ring(spec, 0.0, spec.params["radius"])


def gen_annulus(spec: GeneratorSpec) -> PointCloud:
    prm = spec.params
    if not 0 <= prm["inner"] < prm["outer"]:
        raise InvalidInputError("annulus needs 0 <= inner < outer")
    return _planar_ring(spec, prm["inner"], prm["outer"])


def gen_plane_patch(spec: GeneratorSpec) -> PointCloud:
    w = spec.params["half_width"]
    rng = np.random.default_rng(spec.seed)
    return PointCloud(_embed(rng.uniform(-w, w, (spec.count, 2)), spec.params["n"]))


_GENERATORS = {
    "cylinder2d": gen_cylinder2d,
    "cylinder6d": gen_cylinder6d,
    "cone": gen_cone,
    "circle": gen_circle,
    "disk": gen_disk,
    "annulus": gen_annulus,
    "plane_patch": gen_plane_patch,
}


def generate(spec: GeneratorSpec) -> PointCloud:
    """Noise-free sample of the requested kind."""
    return _GENERATORS[spec.kind](spec)


def add_uniform_noise(cloud, amplitude: float, seed: int) -> PointCloud:
    """Perturb every coordinate by an independent U(-amplitude, amplitude) draw."""
    if amplitude < 0:
        raise InvalidInputError("noise amplitude must be nonnegative")
    x = as_coords(cloud)
    if amplitude == 0:
        return PointCloud(x)
    rng = np.random.default_rng(seed)
    return PointCloud(x + rng.uniform(-amplitude, amplitude, size=x.shape))


def hole_mask(cloud, hole) -> np.ndarray:
    """True for points strictly inside the hole ball."""
    x = as_coords(cloud)
    c = np.asarray(hole.center, dtype=np.float64)
    if c.shape[0] != x.shape[1]:
        raise InvalidInputError("hole center dimension does not match the cloud")
    return np.sqrt(((x - c) ** 2).sum(axis=1)) < hole.radius


def punch_hole(cloud, hole) -> PointCloud:
    """Remove every point with |p - c| < r, keeping the survivors in order."""
    x = as_coords(cloud)
    keep = ~hole_mask(x, hole)
    if not keep.any():
        raise InvalidInputError("punching the hole removed every point")
    return PointCloud(x[keep])


# -- ground-truth distances ---------------------------------------------------

def _seg_dist(x, y, ax, ay, bx, by):
    """Distance from planar points (x, y) to the segment a-b."""
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return np.hypot(x - ax, y - ay)
    t = np.clip(((x - ax) * dx + (y - ay) * dy) / den, 0.0, 1.0)
    return np.hypot(x - ax - t * dx, y - ay - t * dy)


def _in_arc(phi, lo, hi):
    return (np.mod(phi - lo, 2.0 * math.pi) <= (hi - lo) + 1e-15)


def _arc_planar_dist(a, b, radius_lo, radius_hi, lo, hi):
    """Distance in the plane from (a, b) to the annular sector {radius in [lo_r, hi_r], angle in [lo, hi]}."""
    rho = np.hypot(a, b)
    phi = np.arctan2(b, a)
    inside = _in_arc(phi, lo, hi)
    radial = np.maximum(np.maximum(rho - radius_hi, radius_lo - rho), 0.0)
    edges = np.minimum(
        _seg_dist(a, b, radius_lo * math.cos(lo), radius_lo * math.sin(lo), radius_hi * math.cos(lo),
                  radius_hi * math.sin(lo)),
        _seg_dist(a, b, radius_lo * math.cos(hi), radius_lo * math.sin(hi), radius_hi * math.cos(hi),
                  radius_hi * math.sin(hi)),
    )
    return np.where(inside, radial, edges)


def _tube_distance(x, v1, v2, v3, t_range, radius_lo, radius_hi, u_range, radial_scale):
    """Distance to {t v1 + s (cos u v2 + sin u v3)} with orthogonal v1, v2, v3 and |v2| = |v3|."""
    e1 = v1 / np.linalg.norm(v1)
    e2 = v2 / np.linalg.norm(v2)
    e3 = v3 / np.linalg.norm(v3)
    s1 = x @ e1
    a = x @ e2
    b = x @ e3
    resid = x - np.outer(s1, e1) - np.outer(a, e2) - np.outer(b, e3)
    vn = np.linalg.norm(v1)
    axial = s1 - np.clip(s1, t_range[0] * vn, t_range[1] * vn)
    k = np.linalg.norm(v2) * radial_scale
    planar = _arc_planar_dist(a, b, radius_lo * k, radius_hi * k, u_range[0], u_range[1])
    return np.sqrt((resid**2).sum(axis=1) + axial**2 + planar**2)


def _cyl6d_distance(x, prm):
    n = prm["n"]
    lo, hi = prm["u_range"]
    t_lo, t_hi = prm["t_range"]
    v0 = np.zeros(n)
    v0[:7] = 1.0
    vv = float(v0 @ v0)

    def sqdist(angles, pt):
        y = np.zeros(n)
        y[:6] = prm["R"] ** 2 * hypersphere(angles[None, :], prm["R"])[0]
        t = np.clip((pt - y) @ v0 / vv, t_lo, t_hi)
        r = pt - y - t * v0
        return r @ r

    out = np.empty(x.shape[0])
    starts = [np.full(5, lo + f * (hi - lo)) for f in (0.1, 0.5, 0.9)]
    for i, pt in enumerate(x):
        best = np.inf
        # three fixed starts along the diagonal of the angle box; keep the best
        for s0 in starts:
            res = minimize(sqdist, s0, args=(pt,), method="L-BFGS-B", bounds=[(lo, hi)] * 5,
                           options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
            best = min(best, res.fun)
        out[i] = math.sqrt(max(best, 0.0))
    return out


def surface_distance_oracle(kind: str, points, params: dict | None = None):
    """Distance from each point to the noise-free surface of ``kind``."""
    if kind not in KINDS:
        raise InvalidInputError(f"no distance oracle for kind {kind!r}")
    prm = dict(_DEFAULTS[kind])
    prm.update(params or {})
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    scalar = np.ndim(points) == 1
    n = prm["n"]
    if x.shape[1] != n:
        raise InvalidInputError(f"points have dimension {x.shape[1]}, surface lives in R^{n}")
    if kind == "cylinder2d":
        v1, v2, v3 = cylinder_axes(n)
        out = _tube_distance(x, v1, v2, v3, prm["t_range"], prm["R"], prm["R"], prm["u_range"],
                             1.0 / math.sqrt(2.0))
    elif kind == "cone":
        v1, v2, v3 = cylinder_axes(n, axis_len=4)
        r_lo, r_hi = prm["R_range"]
        out = _tube_distance(x, v1, v2, v3, prm["t_range"], math.exp(-r_hi**2), math.exp(-r_lo**2),
                             prm["u_range"], 1.0 / math.sqrt(2.0))
    elif kind == "cylinder6d":
        out = _cyl6d_distance(x, prm)
    else:
        rho = np.hypot(x[:, 0], x[:, 1])
        rest = (x[:, 2:] ** 2).sum(axis=1)
        if kind == "circle":
            planar = np.abs(rho - prm["radius"])
        elif kind == "disk":
            planar = np.maximum(rho - prm["radius"], 0.0)
        elif kind == "annulus":
            planar = np.maximum(np.maximum(rho - prm["outer"], prm["inner"] - rho), 0.0)
        else:
            w = prm["half_width"]
            planar = np.hypot(np.maximum(np.abs(x[:, 0]) - w, 0.0), np.maximum(np.abs(x[:, 1]) - w, 0.0))
        out = np.sqrt(planar**2 + rest)
    return float(out[0]) if scalar else out
