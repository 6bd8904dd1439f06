"""Quality measures for resampled clouds: uniformity, distance to truth, hole coverage."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import as_coords
from .errors import InsufficientDataError, InvalidInputError
from .mlop import OptimizerConfig, run_mlop
from .neighborhoods import SpatialIndex, fill_distance, nearest_neighbor_distances
from .synth import GeneratorSpec, generate, surface_distance_oracle

DEFAULT_GRID_DENSITY = 50
PROBE_SHRINK = 0.9
NEAR_FACTOR = 1.5


def quasi_uniformity(q) -> tuple[float, float]:
    """(fill distance, max NN distance / median NN distance)."""
    nn = nearest_neighbor_distances(q)
    med = float(np.median(nn))
    if med == 0.0:
        return 0.0, math.inf if nn.max() > 0 else 1.0
    return med, float(nn.max() / med)


def count_profile(q, h0: float | None = None, ks=(1, 2, 3, 4)) -> dict:
    """Median and max of #{Q in B(y, k h0)} over y in Q, for each k."""
    x = as_coords(q)
    h0 = fill_distance(x) if h0 is None else h0
    idx = SpatialIndex(x)
    out = {}
    for k in ks:
        c = idx.count(x, k * h0)
        out[str(k)] = {"median": float(np.median(c)), "max": int(c.max())}
    return out


def coverage_probes(reference, hole, grid_density: int = DEFAULT_GRID_DENSITY, seed: int = 0) -> np.ndarray:
    """Probe points for the empty-ball estimate.

    Random convex combinations of two or three reference points lying
    within 1.5 r of the hole center, kept when they fall inside B(c, 0.9 r).
    Combinations of rim points on opposite sides of a hole span the hole
    along the surface, which is what the probes must sample.
    """
    x = as_coords(reference)
    c = hole.center
    if c.size != x.shape[1]:
        raise InvalidInputError(f"hole center has dimension {c.size}, cloud has {x.shape[1]}")
    if grid_density < 1:
        raise InvalidInputError("grid_density must be positive")
    r_in = PROBE_SHRINK * hole.radius
    d = np.linalg.norm(x - c, axis=1)
    near = x[d <= NEAR_FACTOR * hole.radius]
    if near.shape[0] == 0:
        return np.empty((0, x.shape[1]))
    rng = np.random.default_rng(seed)
    total = 10 * grid_density
    k = min(3, near.shape[0])
    picks = rng.integers(0, near.shape[0], size=(total, k))
    lam = rng.dirichlet(np.ones(k), size=total)
    if k >= 3:
        # Half of the probes are pair combinations (segments), half triples.
        lam[: total // 2, 2] = 0.0
        lam[: total // 2] /= lam[: total // 2].sum(axis=1, keepdims=True)
    probes = np.einsum("ij,ijk->ik", lam, near[picks])
    inside = np.linalg.norm(probes - c, axis=1) < r_in
    return probes[inside]


def hole_coverage(q, hole, grid_density: int = DEFAULT_GRID_DENSITY, seed: int = 0,
                  probes=None) -> float:
    """Largest empty-ball radius inside B(c, 0.9 r), capped at 0.9 r.

    Smaller is better.  ``probes`` fixes the probe set (for comparing two
    clouds on equal terms); by default probes come from ``q`` itself.  With
    no probes available the hole counts as fully uncovered.
    """
    x = as_coords(q)
    cap = PROBE_SHRINK * hole.radius
    pr = coverage_probes(x, hole, grid_density, seed) if probes is None else as_coords(probes)
    if pr.shape[0] == 0 or pr.size == 0:
        return float(cap)
    dist, _ = cKDTree(x).query(pr, k=1)
    return float(min(cap, dist.max()))


def distance_to_truth(q, kind: str, params: dict | None = None) -> dict:
    d = surface_distance_oracle(kind, as_coords(q), params or {})
    return {"median": float(np.median(d)), "max": float(d.max())}


@dataclass
class MetricsReport:
    fill_distance_q: float
    nn_ratio: float
    count_profile: dict = field(default_factory=dict)
    dist_to_truth: dict | None = None
    hole_coverage: list = field(default_factory=list)
    grad_norm_history: list = field(default_factory=list)
    starved_point_count: int = 0

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def compute_report(q, kind: str | None = None, params: dict | None = None, holes=(),
                   runlog=None, grid_density: int = DEFAULT_GRID_DENSITY, seed: int = 0,
                   probes=None) -> MetricsReport:
    x = as_coords(q)
    if x.shape[0] < 2:
        raise InsufficientDataError("metrics need at least two points")
    fill, ratio = quasi_uniformity(x)
    cover = []
    for k, h in enumerate(holes):
        pr = None if probes is None else probes[k]
        cover.append(hole_coverage(x, h, grid_density, seed, pr))
    return MetricsReport(
        fill_distance_q=fill,
        nn_ratio=ratio,
        count_profile=count_profile(x, fill if fill > 0 else None),
        dist_to_truth=distance_to_truth(x, kind, params) if kind else None,
        hole_coverage=cover,
        grad_norm_history=runlog.grad_norm_history() if runlog is not None else [],
        starved_point_count=int(runlog.info.get("starved_point_count", 0)) if runlog is not None else 0,
    )


@dataclass
class SweepResult:
    rows: list  # (J, h0, max_dist, median_dist)
    slope: float


def fit_slope(h0, dist) -> float:
    lx = np.log(np.asarray(h0, dtype=np.float64))
    ly = np.log(np.asarray(dist, dtype=np.float64))
    if lx.size < 2 or np.ptp(lx) == 0.0:
        return math.nan
    return float(np.polyfit(lx, ly, 1)[0])


def approximation_order_sweep(kind: str, j_list, config: OptimizerConfig, q_fraction: float = 0.5,
                              params: dict | None = None, seed: int = 0) -> SweepResult:
    """Run MLOP on noise-free samples of growing size and fit log(max dist) against log(h0)."""
    if not 0 < q_fraction <= 1:
        raise InvalidInputError("q_fraction must lie in (0, 1]")
    rows = []
    for j in j_list:
        spec = GeneratorSpec(kind, int(j), seed=seed, params=dict(params or {}))
        p = generate(spec)
        cfg = OptimizerConfig(**{**asdict(config), "q_count": max(2, int(round(q_fraction * j)))})
        q, _ = run_mlop(p, cfg)
        d = surface_distance_oracle(kind, q.coords, spec.params)
        rows.append((int(j), fill_distance(p), float(d.max()), float(np.median(d))))
    positive = [r for r in rows if r[2] > 0]
    slope = fit_slope([r[1] for r in positive], [r[2] for r in positive]) if len(positive) >= 2 else math.nan
    return SweepResult(rows, slope)
