"""Reproduction recipes for the synthetic and scanned-model experiments.

Every recipe derives its random streams from one seed: ``seed`` for the
clean sample, ``seed + 1`` for noise, ``seed + 2`` for Q0 and the sketch,
``seed + 3`` for scan subsampling and hole placement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PointCloud, as_coords
from .errors import InvalidInputError
from .neighborhoods import fill_distance
from .rmlop import HoleSpec, RepairConfig, multi_hole_weights
from .synth import (GeneratorSpec, add_uniform_noise, cone_point, cylinder2d_point, cylinder6d_point,
                    generate, hole_mask, punch_hole)

RECIPES = ("cylinder2d", "cylinder6d", "cone-2holes", "bunny", "dragon-1hole", "dragon-2holes")
SCAN_RECIPES = ("bunny", "dragon-1hole", "dragon-2holes")


@dataclass(frozen=True)
class RecipeSpec:
    name: str
    kind: str | None
    count: int
    noise: float
    q_count: int
    iters: int
    hole_factor: float  # hole radius as a multiple of the clean-sample fill distance
    n_holes: int = 1
    bias_q: bool = False
    params: dict = field(default_factory=dict)


SPECS = {
    "cylinder2d": RecipeSpec("cylinder2d", "cylinder2d", 790, 0.1, 230, 70, 6.0,
                             params={"R": 1.0}),
    "cylinder6d": RecipeSpec("cylinder6d", "cylinder6d", 1180, 0.2, 460, 100, 2.0),
    "cone-2holes": RecipeSpec("cone-2holes", "cone", 850, 0.2, 140, 200, 6.0, n_holes=2),
    "bunny": RecipeSpec("bunny", None, 1000, 0.0, 350, 30, 4.0, bias_q=True),
    "dragon-1hole": RecipeSpec("dragon-1hole", None, 1000, 0.0, 350, 30, 4.0, bias_q=True),
    "dragon-2holes": RecipeSpec("dragon-2holes", None, 1000, 0.0, 350, 30, 4.0, n_holes=2, bias_q=True),
}


@dataclass
class RecipeData:
    spec: RecipeSpec
    seed: int
    p: PointCloud
    clean: PointCloud | None
    holes: list
    config: RepairConfig
    q0: np.ndarray | None = None
    kind: str | None = None
    params: dict = field(default_factory=dict)


def hole_centers(kind: str, params: dict) -> list[np.ndarray]:
    """Surface points at fixed parameter locations (mid-parameters for one hole)."""
    n = params["n"]
    if kind == "cylinder2d":
        return [cylinder2d_point(np.array([1.0]), np.array([0.8 * math.pi]), params["R"], n)[0]]
    if kind == "cylinder6d":
        return [cylinder6d_point(np.array([1.0]), np.full((1, 5), 0.35 * math.pi), params["R"], n)[0]]
    if kind == "cone":
        return [cone_point(np.array([0.5]), np.array([0.4]), np.array([0.45 * math.pi]), n)[0],
                cone_point(np.array([1.5]), np.array([0.4]), np.array([1.15 * math.pi]), n)[0]]
    raise InvalidInputError(f"no hole placement for kind {kind!r}")


def _synthetic(spec: RecipeSpec, seed: int, config_overrides: dict) -> RecipeData:
    gspec = GeneratorSpec(spec.kind, spec.count, noise=spec.noise, seed=seed, params=dict(spec.params))
    clean = generate(gspec)
    h0 = fill_distance(clean)
    holes = [HoleSpec(c, spec.hole_factor * h0) for c in hole_centers(spec.kind, gspec.params)[: spec.n_holes]]
    keep = np.ones(clean.count, dtype=bool)
    for h in holes:
        keep &= ~hole_mask(clean, h)
    clean = clean.take(np.flatnonzero(keep))
    p = add_uniform_noise(clean, spec.noise, seed + 1)
    cfg = _config(spec, seed, config_overrides)
    return RecipeData(spec, seed, p, clean, holes, cfg, kind=spec.kind, params=gspec.params)


def _config(spec, seed, overrides):
    kw = {"q_count": spec.q_count, "max_iters": spec.iters, "seed": seed + 2}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return RepairConfig(**kw)


def _scan(spec: RecipeSpec, seed: int, scan, config_overrides: dict) -> RecipeData:
    x = as_coords(scan)
    if x.shape[1] != 3:
        raise InvalidInputError("scan recipes need a 3-D model")
    if x.shape[0] < spec.q_count + 10:
        raise InvalidInputError(f"the model has only {x.shape[0]} vertices; need more than {spec.q_count + 10}")
    rng = np.random.default_rng(seed + 3)
    take = min(spec.count, x.shape[0])
    sample = PointCloud(x[np.sort(rng.choice(x.shape[0], size=take, replace=False))])
    h0 = fill_distance(sample)
    radius = spec.hole_factor * h0
    holes = []
    # Hole centers: seeded sample points, each at least 4 radii from the previous ones.
    order = rng.permutation(sample.count)
    for idx in order:
        c = sample.coords[idx]
        if all(np.linalg.norm(c - h.center) > 4.0 * radius for h in holes):
            holes.append(HoleSpec(c, radius))
        if len(holes) == spec.n_holes:
            break
    p = sample
    for h in holes:
        p = punch_hole(p, h)
    cfg = _config(spec, seed, config_overrides)
    if cfg.q_count > p.count:
        raise InvalidInputError("too few points remain after punching the holes")
    q0 = None
    if spec.bias_q:
        # Slightly denser Q near the hole rims: sampling weight 1 + tau_bar.
        from .mlop import init_q
        w = multi_hole_weights(p, holes).tau_bar
        q0 = as_coords(init_q(p, cfg.q_count, cfg.seed, bias=1.0 + w))
    return RecipeData(spec, seed, p, None, holes, cfg, q0=q0)


def build(name: str, seed: int, scan=None, **config_overrides) -> RecipeData:
    if name not in SPECS:
        raise InvalidInputError(f"unknown recipe {name!r}; expected one of {', '.join(RECIPES)}")
    spec = SPECS[name]
    if spec.kind is None:
        if scan is None:
            raise InvalidInputError(f"recipe {name!r} needs a model file (--ply)")
        return _scan(spec, seed, scan, config_overrides)
    return _synthetic(spec, seed, config_overrides)
