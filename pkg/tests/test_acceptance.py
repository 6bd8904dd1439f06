"""Acceptance criteria 1-12.

Each test records one line ``CRITERION k PASS|FAIL: ...`` (printed in the
pytest terminal summary, or directly when this file is run as a script)
and then asserts the criterion at its stated tolerance.  Criteria are
evaluated with the package defaults (literal attraction, per-point
lambda, step clip 0.5).  Lines tagged SUPPLEMENTARY do not count toward
the twelve; they run the same measurement under the robust profile or on
a flat instance and are there to separate method limits from scale
effects.  See the decisions ledger for the analysis of failing lines.
"""
from __future__ import annotations

import json
import math
import sys
import time

import numpy as np
import pytest

from manifold_repair import cli, recipes
from manifold_repair.core import KernelParams, b_profile
from manifold_repair.engine import Engine
from manifold_repair.holefinder import holes_from_cloud
from manifold_repair.metrics import approximation_order_sweep, coverage_probes, hole_coverage, quasi_uniformity
from manifold_repair.mlop import OptimizerConfig, OptimizerState, lambda_init_all, mlop_iterate, prepare, run_mlop
from manifold_repair.neighborhoods import fill_distance
from manifold_repair.rmlop import (BalanceConstants, HoleSpec, RepairConfig, RepairWeights, balance_constants,
                                   compute_weights, repair_terms, rmlop_iterate, run_rmlop, run_rmlop_full)
from manifold_repair.sketch import build_sketch
from manifold_repair.synth import GeneratorSpec, generate, punch_hole

from conftest import MALFORMED_DIR, malformed_invocation

LINES: list[str] = []


def record(label, passed: bool, detail: str):
    LINES.append(f"{label} {'PASS' if passed else 'FAIL'}: {detail}")
    return passed


def criterion(k, passed, detail):
    return record(f"CRITERION {k:2d}", passed, detail)


def supplementary(k, passed, detail):
    return record(f"SUPPLEMENTARY (not counted) {k:2d}", passed, detail)


# -- 1: b-profile bounds ---------------------------------------------------------------

def test_criterion_01_b_profile_bounds():
    rows = []
    ok = True
    for h2 in (0.5, 1.0, 2.0):
        a = (1 + math.sqrt(3)) * h2 / (2 * math.sqrt(2))
        c = (4 + math.sqrt(3)) * h2 / (2 * math.sqrt(2))
        ba, bc = abs(b_profile(a, h2)), abs(b_profile(c, h2))
        ok &= ba >= 0.3 and bc >= 0.1
        rows.append(f"h2={h2}: |b(A)|={ba:.4f} |b(C)|={bc:.4f}")
    criterion(1, ok, "; ".join(rows) + " (need >= 0.3 and >= 0.1)")
    assert ok


# -- 2: gradient oracles -------------------------------------------------------------------

def _e1(q, p, prm):
    d = q[:, None, :] - p[None, :, :]
    sq = np.einsum("ijk,ijk->ij", d, d)
    return float((np.sqrt(sq + prm.eps_h) * np.exp(-sq / prm.h1**2)).sum())


def _e2(q, prm):
    d = q[:, None, :] - q[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    np.fill_diagonal(r, np.inf)
    return float((np.exp(-r**2 / prm.h2**2) / (3.0 * r**3)).sum())


def _fd(fun, x, i, step=1e-6):
    g = np.zeros(x.shape[1])
    for k in range(x.shape[1]):
        xp, xm = x.copy(), x.copy()
        xp[i, k] += step
        xm[i, k] -= step
        g[k] = (fun(xp) - fun(xm)) / (2 * step)
    return g


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _separated(rng, count, n, min_dist):
    while True:
        x = rng.uniform(0.0, 1.0, (count, n))
        d = np.linalg.norm(x[:, None] - x[None], axis=2) + np.eye(count)
        if d.min() > min_dist:
            return x


def gradient_oracle_errors(instances=20, seed=0):
    rng = np.random.default_rng(seed)
    worst_e1 = worst_e2 = worst_all = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 6))
        j = int(rng.integers(5, 61))
        i_count = int(rng.integers(2, 21))
        p = rng.uniform(0.0, 1.0, (j, n))
        q = _separated(rng, i_count, n, 0.05 if n > 1 else 0.01)
        prm = KernelParams(h1=float(rng.uniform(0.3, 1.0)), h2=float(rng.uniform(0.3, 1.0)), eps_h=0.1)
        t = Engine(p, prm, truncate=False).terms(q)
        lam, _ = lambda_init_all(t.attraction, t.repulsion)
        for i in range(i_count):
            g1 = _fd(lambda x: _e1(x, p, prm), q, i)
            g2 = _fd(lambda x: _e2(x, prm), q, i)
            worst_e1 = max(worst_e1, _rel(t.attraction[i], g1))
            # E2 counts every pair twice, so the per-point repulsion sum is minus half its gradient.
            worst_e2 = max(worst_e2, _rel(t.repulsion[i], -0.5 * g2))
            # The balanced sum nearly cancels by design; measure relative to the summands.
            assembled = t.attraction[i] + lam[i] * t.repulsion[i]
            scale = np.linalg.norm(g1) + abs(lam[i]) * np.linalg.norm(0.5 * g2)
            worst_all = max(worst_all, float(np.linalg.norm(assembled - (g1 - 0.5 * lam[i] * g2)) / scale))
    return worst_e1, worst_e2, worst_all


def e3_oracle_errors(instances=20, seed=1):
    """The stated dE3 formula against finite differences of its own antiderivative.

    In one dimension 2 a b is exactly d(a^2)/dq with a = sum_i (q_i' - q_i) w.
    In higher dimension the scalar factor equals tr(da/dq) - (n - 1) sum_i w,
    which is checked with a finite-difference Jacobian.
    """
    rng = np.random.default_rng(seed)
    worst_1d = worst_nd = 0.0
    for _ in range(instances):
        for n in (1, 2):
            i_count = int(rng.integers(3, 21))
            q = _separated(rng, i_count, n, 0.01)
            prm = KernelParams(h1=1.0, h2=float(rng.uniform(0.2, 0.8)))
            g = Engine(q[:1], prm, truncate=False).terms(q, attraction=False, repulsion=False, e3=True).e3

            def avec(x, i):
                d = x[i] - np.delete(x, i, axis=0)
                w = np.exp(-np.einsum("ij,ij->i", d, d) / prm.h2**2)
                return w @ d, w.sum()

            for i in range(i_count):
                if n == 1:
                    fd = _fd(lambda x: float(avec(x, i)[0] @ avec(x, i)[0]), q, i)
                    worst_1d = max(worst_1d, _rel(g[i], fd))
                else:
                    jac = np.zeros((n, n))
                    for k in range(n):
                        xp, xm = q.copy(), q.copy()
                        xp[i, k] += 1e-6
                        xm[i, k] -= 1e-6
                        jac[:, k] = (avec(xp, i)[0] - avec(xm, i)[0]) / 2e-6
                    a, wsum = avec(q, i)
                    oracle = 2.0 * a * (np.trace(jac) - (n - 1) * wsum)
                    worst_nd = max(worst_nd, _rel(g[i], oracle))
    return worst_1d, worst_nd


def test_criterion_02_gradient_oracles():
    t0 = time.perf_counter()
    e1, e2, assembled = gradient_oracle_errors()
    e3_1d, e3_nd = e3_oracle_errors()
    dt = time.perf_counter() - t0
    worst = max(e1, e2, assembled, e3_1d, e3_nd)
    ok = worst < 1e-4 and dt < 10
    criterion(2, ok, f"max rel err E1 {e1:.1e}, E2 {e2:.1e}, assembled {assembled:.1e}, "
                     f"dE3 1-D {e3_1d:.1e}, dE3 R^2 {e3_nd:.1e} (need < 1e-4); {dt:.1f} s")
    assert ok


# -- 3: lambda balancing -----------------------------------------------------------------

def test_criterion_03_lambda_balance():
    p = generate(GeneratorSpec("cylinder2d", 300, seed=3))
    setup = prepare(p, OptimizerConfig(q_count=100, seed=4))
    t = setup.engine.terms(setup.q0)
    lam, isolated = lambda_init_all(t.attraction, t.repulsion)
    na = np.linalg.norm(t.attraction, axis=1)
    nr = np.linalg.norm(t.repulsion, axis=1)
    ok_pts = nr > 0
    err = np.abs(na[ok_pts] - np.abs(lam[ok_pts]) * nr[ok_pts]) / np.maximum(na[ok_pts], 1e-300)
    worst = float(err.max())
    ok = worst <= 1e-10 and bool(np.all(lam <= 0))
    criterion(3, ok, f"max rel |attr| vs |lambda||rep| mismatch {worst:.1e} over {ok_pts.sum()} points "
                     f"({isolated} isolated); lambda <= 0 everywhere")
    assert ok


# -- 4: sketch -------------------------------------------------------------------------------

def test_criterion_04_sketch():
    rng = np.random.default_rng(4)
    p = rng.standard_normal((300, 60))
    op = build_sketch(p, 40, seed=5)
    s = op.s_matrix
    orth = float(np.abs(s.T @ s - np.eye(op.m)).max())
    b = p.T @ np.random.default_rng(5).standard_normal((300, 40))
    x = (b @ rng.standard_normal((40, 100))).T
    norm_err = float(np.max(np.abs(np.linalg.norm(x @ s, axis=1) / np.linalg.norm(x, axis=1) - 1.0)))
    ok = orth <= 1e-10 and norm_err <= 1e-8
    criterion(4, ok, f"max |S^T S - I| = {orth:.1e}; max rel norm error on span(B) = {norm_err:.1e}")
    assert ok


# -- 5: approximation order ------------------------------------------------------------------

J_LIST = (100, 200, 400, 800)


def test_criterion_05_approximation_order():
    # Radius 100 keeps the default absolute eps_h = 0.1 small against h1^2.
    t0 = time.perf_counter()
    cfg = OptimizerConfig(q_count=2, max_iters=100, seed=0)
    res = approximation_order_sweep("circle", J_LIST, cfg, q_fraction=0.5, params={"radius": 100.0})
    dt = time.perf_counter() - t0
    ok = 1.5 <= res.slope <= 2.5 and dt < 120
    rows = ", ".join(f"J={r[0]}: h0={r[1]:.3g} max={r[2]:.3g}" for r in res.rows)
    criterion(5, ok, f"default profile, random circle R=100: slope {res.slope:.2f} (need [1.5, 2.5]); "
                     f"{rows}; {dt:.0f} s")
    assert ok


def test_supplementary_05_robust_profile():
    t0 = time.perf_counter()
    cfg = OptimizerConfig(q_count=2, max_iters=100, seed=0, eps_rel=1e-4, lambda_mode="median", step_clip=0.1)
    res = approximation_order_sweep("circle", J_LIST, cfg, q_fraction=0.5,
                                    params={"radius": 1.0, "regular": True})
    dt = time.perf_counter() - t0
    ok = 1.5 <= res.slope <= 2.5
    supplementary(5, ok, f"robust profile (eps_rel 1e-4, median lambda, clip 0.1), regular circle: "
                         f"slope {res.slope:.2f}; {dt:.0f} s")
    assert ok


# -- 6, 7: repair recipes ------------------------------------------------------------------------

def run_recipe(name, seed=7, **overrides):
    t0 = time.perf_counter()
    data = recipes.build(name, seed, **overrides)
    setup = prepare(data.p, data.config, q0=data.q0)
    probes = [coverage_probes(setup.q0, h, seed=seed) for h in data.holes]
    cov0 = [hole_coverage(setup.q0, h, probes=pr) for h, pr in zip(data.holes, probes)]
    res = run_rmlop_full(data.p, data.holes, data.config, setup=setup)
    cov1 = [hole_coverage(res.q, h, probes=pr) for h, pr in zip(data.holes, probes)]
    nn0 = quasi_uniformity(setup.q0)[1]
    nn1 = quasi_uniformity(res.q)[1]
    red = [1.0 - b / a if a > 0 else 0.0 for a, b in zip(cov0, cov1)]
    return {"cov0": cov0, "cov1": cov1, "red": red, "nn0": nn0, "nn1": nn1,
            "probes": [len(p) for p in probes], "starved": res.log.info.get("starved_point_count", 0),
            "seconds": time.perf_counter() - t0, "radii": [h.radius for h in data.holes]}


def _fmt(r):
    cov = ", ".join(f"{a:.3g} -> {b:.3g} ({100 * x:.0f}%)" for a, b, x in zip(r["cov0"], r["cov1"], r["red"]))
    return (f"coverage {cov}; nn_ratio {r['nn0']:.2f} -> {r['nn1']:.2f}; "
            f"{r['starved']} starved Q points; {r['seconds']:.0f} s")


def test_criterion_06_cylinder_repair():
    r = run_recipe("cylinder2d")
    ok = r["red"][0] >= 0.5 and r["nn1"] <= r["nn0"] and r["seconds"] < 120
    criterion(6, ok, f"cylinder2d J=790 I=230 70 iters: {_fmt(r)} (need >= 50% and nn_ratio not larger)")
    assert ok


def test_supplementary_06_flat_hole():
    """The same repair on a flat punched disk, where noise and curvature play no role."""
    p = generate(GeneratorSpec("disk", 800, seed=0, params={"radius": 10.0}))
    hole = HoleSpec(np.zeros(2), 3.0)
    p = punch_hole(p, hole)
    cfg = RepairConfig(q_count=p.count // 2, max_iters=70, seed=2)
    setup = prepare(p, cfg)
    probes = coverage_probes(setup.q0, hole)
    cov0 = hole_coverage(setup.q0, hole, probes=probes)
    q, _ = run_rmlop(p, [hole], cfg)
    cov1 = hole_coverage(q, hole, probes=probes)
    nn0, nn1 = quasi_uniformity(setup.q0)[1], quasi_uniformity(q)[1]
    ok = cov1 <= 0.5 * cov0 and nn1 <= nn0
    supplementary(6, ok, f"default profile on a flat disk (R=10, hole r=3, 70 iters): coverage "
                         f"{cov0:.3g} -> {cov1:.3g} ({100 * (1 - cov1 / cov0):.0f}%); nn_ratio {nn0:.2f} -> {nn1:.2f}")
    assert ok


def test_criterion_07_cone_repair():
    r = run_recipe("cone-2holes")
    ok = all(x >= 0.5 for x in r["red"]) and r["seconds"] < 180
    criterion(7, ok, f"cone J=850 I=140 200 iters, hole radius {r['radii'][0]:.3g}, probes {r['probes']}: "
                     f"{_fmt(r)} (need >= 50% on both)")
    assert ok


# -- 8: hole-directed motion -----------------------------------------------------------------

def half_disk_motion(eps_nb=0.1):
    p = generate(GeneratorSpec("disk", 400, seed=0, params={"radius": 10.0, "layout": "hex", "jitter": 0.1}))
    center = np.zeros(2)
    hole = HoleSpec(center, 3.0)
    p = punch_hole(p, hole)
    cfg = RepairConfig(q_count=p.count, prepass_iters=0, max_iters=1, eps_nb=eps_nb)
    setup = prepare(p, cfg, q0=p.coords)
    weights = compute_weights(setup.q0, [hole], cfg)
    terms = repair_terms(setup.engine, setup.q0)
    consts = balance_constants(terms.attraction, terms.repulsion, terms.e3)
    state = rmlop_iterate(OptimizerState.start(setup.q0), setup.engine, weights, consts, cfg, terms=terms)
    disp = state.q_curr - setup.q0
    toward = center - setup.q0
    toward /= np.linalg.norm(toward, axis=1)[:, None]
    comp = np.einsum("ij,ij->i", disp, toward)
    return comp[weights.tau_bar > 1 - eps_nb]


def test_criterion_08_hole_directed_motion():
    comp = half_disk_motion()
    ok = comp.size > 0 and bool(np.all(comp > 0))
    criterion(8, ok, f"{int((comp > 0).sum())}/{comp.size} rim points (tau_bar > 0.9) move toward the center; "
                     f"smallest component {comp.min():.3g}")
    assert ok


# -- 9: hole detection ------------------------------------------------------------------------

def test_criterion_09_hole_detection():
    t0 = time.perf_counter()
    spec = {"layout": "hex", "jitter": 0.15}
    disk = generate(GeneratorSpec("disk", 1500, seed=9, params=spec))
    r = 5.0 * fill_distance(disk)
    ann = generate(GeneratorSpec("annulus", 1500, seed=9, params={**spec, "inner": r, "outer": 1.0}))
    holes, _ = holes_from_cloud(ann)
    disk_holes, _ = holes_from_cloud(disk)
    dt = time.perf_counter() - t0
    good = [h for h in holes if np.linalg.norm(h.center) <= r / 2 and 0.5 <= h.radius / r <= 2.0]
    ok = len(holes) == 1 and len(good) == 1 and not disk_holes and dt < 30
    found = ", ".join(f"center offset {np.linalg.norm(h.center):.3g}, radius {h.radius:.3g}" for h in holes)
    criterion(9, ok, f"quasi-uniform annulus (jittered hex, inner r={r:.3g}): {len(holes)} hole(s) [{found}]; "
                     f"filled disk: {len(disk_holes)} holes; {dt:.1f} s")
    assert ok


# -- 10: determinism across thread counts ---------------------------------------------------

def test_criterion_10_repro_determinism(tmp_path):
    manifests = {}
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        code = cli.main(["repro", "cylinder2d", "--seed", "7", "--threads", str(threads), "--output", str(out)])
        assert code == 0
        manifests[threads] = json.loads((out / "manifest.json").read_text())
    ok = manifests[1] == manifests[4] and len(manifests[1]) >= 6
    criterion(10, ok, f"repro cylinder2d --seed 7: {len(manifests[1])} output hashes identical for 1 and 4 threads")
    assert ok


# -- 11: reduction ---------------------------------------------------------------------------------

class _ScaledEngine:
    """Engine wrapper returning c1-scaled attraction and c2-scaled repulsion."""

    def __init__(self, engine, c1, c2):
        self.engine, self.c1, self.c2, self.params = engine, c1, c2, engine.params

    def terms(self, q, **kw):
        t = self.engine.terms(q, **kw)
        t.attraction = self.c1 * t.attraction
        t.repulsion = self.c2 * t.repulsion
        return t


def reduction_errors():
    p = generate(GeneratorSpec("cylinder2d", 300, noise=0.0, seed=11))
    cfg = RepairConfig(q_count=120, max_iters=15, seed=12)
    q_m, log_m = run_mlop(p, cfg)
    q_r, log_r = run_rmlop(p, [], cfg)
    bitwise = np.array_equal(q_m.coords, q_r.coords)

    setup = prepare(p, cfg)
    consts = BalanceConstants(0.7, 1.3, 2.0)
    zero = RepairWeights(np.zeros(cfg.q_count), cfg.eps_nb, degenerate=True)
    scaled = _ScaledEngine(setup.engine, consts.c1, consts.c2)
    rs = OptimizerState.start(setup.q0)
    ms = OptimizerState.start(setup.q0)
    ms.lam = -np.ones(cfg.q_count)
    worst = 0.0
    for _ in range(3):
        rs = rmlop_iterate(rs, setup.engine, zero, consts, cfg)
        ms = mlop_iterate(ms, scaled, cfg)
        worst = max(worst, float(np.abs(rs.q_curr - ms.q_curr).max()))
    return bitwise, worst


def test_criterion_11_reduction():
    bitwise, worst = reduction_errors()
    ok = bitwise and worst <= 1e-12
    criterion(11, ok, f"zero-hole run_rmlop == run_mlop bitwise: {bitwise}; tau_bar = 0 repair step vs "
                      f"scaled MLOP step, max abs difference over 3 iterations {worst:.1e}")
    assert ok


# -- 12: malformed inputs ---------------------------------------------------------------------------

def test_criterion_12_malformed_corpus(capsys):
    files = sorted(p for p in MALFORMED_DIR.iterdir() if p.is_file())
    codes = {}
    for f in files:
        try:
            codes[f.name] = cli.main(malformed_invocation(f))
        except SystemExit as exc:  # argparse exits; still structured
            codes[f.name] = exc.code
        except Exception as exc:  # noqa: BLE001 - a crash is exactly what this criterion forbids
            codes[f.name] = f"crash: {type(exc).__name__}: {exc}"
    capsys.readouterr()
    bad = {k: v for k, v in codes.items() if v != 2}
    ok = len(files) >= 10 and not bad
    criterion(12, ok, f"{len(files) - len(bad)}/{len(files)} malformed files rejected with exit 2"
                      + (f"; unexpected: {bad}" if bad else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
