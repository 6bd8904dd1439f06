"""Command-line entry point: generate, mlop, rmlop, detect-holes, metrics, repro."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io as _stdio
import json
import logging
import sys
from pathlib import Path


from . import __version__
from . import io as mio
from .core import PointCloud
from .errors import InvalidInputError, IOFailure, ManifoldRepairError, NumericalAbort
from .holefinder import holes_from_cloud
from .metrics import DEFAULT_GRID_DENSITY, compute_report, coverage_probes
from .mlop import run_mlop
from .recipes import RECIPES, SCAN_RECIPES, build
from .rmlop import RepairConfig, run_rmlop_full
from .synth import KINDS, GeneratorSpec, add_uniform_noise, generate

log = logging.getLogger("manifold_repair")


class UsageError(InvalidInputError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports errors as exit 2 with the usage line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


# -- shared options ----------------------------------------------------------------

def _optimizer_flags(sp, repair=False):
    sp.add_argument("--config", help="INI run configuration")
    sp.add_argument("--seed", type=int, help="random seed (overrides the config)")
    sp.add_argument("--iters", type=int, help="number of iterations")
    sp.add_argument("--q-count", type=int, help="size of the resampled cloud Q")
    sp.add_argument("--sketch-m", type=int, help="sketch dimension (default: automatic)")
    sp.add_argument("--no-sketch", action="store_true", help="work in the full ambient space")
    sp.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    sp.add_argument("--step-clip", type=float, help="per-iteration displacement cap, in units of h2")
    sp.add_argument("--eps-rel", type=float, help="H_eps parameter relative to h1^2 (default: absolute 0.1)")
    sp.add_argument("--attraction", choices=("literal", "frozen"), help="attraction coefficient form")
    sp.add_argument("--lambda-mode", choices=("per_point", "median"), help="repulsion balance")
    if repair:
        sp.add_argument("--hole", action="append", default=[], metavar="C1,..,CN:R",
                        help="hole as center and radius (repeatable)")
        sp.add_argument("--holes-json", help="holes JSON file")
        sp.add_argument("--no-prepass", action="store_true", help="skip the MLOP pre-pass")
        sp.add_argument("--literal-ck", action="store_true", help="c_k = median instead of 1/median")
        sp.add_argument("--literal-multihole", action="store_true",
                        help="normalise each hole's weights before taking the product")


def _io_flags(sp, output_help="output cloud"):
    sp.add_argument("--input", help="input cloud (csv, xyz or ply)")
    sp.add_argument("--output", help=output_help)
    sp.add_argument("--format", choices=mio.FORMATS, help="file format (default: from the extension)")
    sp.add_argument("--ply-project3", action="store_true",
                    help="allow PLY output of the first three coordinates of an n > 3 cloud")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="manifold-repair", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("generate", help="sample a synthetic manifold")
    sp.add_argument("--config", help="INI run configuration with a [generator] section")
    sp.add_argument("--kind", choices=KINDS)
    sp.add_argument("--count", type=int)
    sp.add_argument("--noise", type=float, help="uniform noise amplitude per coordinate")
    sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="generator parameter")
    sp.add_argument("--seed", type=int)
    _io_flags(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("mlop", help="resample a cloud with MLOP")
    _io_flags(sp)
    _optimizer_flags(sp)
    sp.add_argument("--log", help="run log CSV (default: <output>.log.csv)")
    sp.set_defaults(func=cmd_mlop)

    sp = sub.add_parser("rmlop", help="resample and repair holes with R-MLOP")
    _io_flags(sp)
    _optimizer_flags(sp, repair=True)
    sp.add_argument("--log", help="run log CSV (default: <output>.log.csv)")
    sp.add_argument("--report", help="metrics report JSON (default: <output>.report.json)")
    sp.add_argument("--weights", help="cloud plus hole-weight column (default: <output>.weights.csv)")
    sp.set_defaults(func=cmd_rmlop)

    sp = sub.add_parser("detect-holes", help="estimate hole centers and radii")
    _io_flags(sp, output_help="holes JSON")
    _optimizer_flags(sp)
    sp.add_argument("--labels", help="optional CSV of per-point boundary labels")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("metrics", help="evaluate a cloud")
    sp.add_argument("--input", help="cloud to evaluate")
    sp.add_argument("--output", help="report JSON (default: stdout)")
    sp.add_argument("--format", choices=mio.FORMATS)
    sp.add_argument("--kind", choices=KINDS, help="ground-truth manifold for distance-to-truth")
    sp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="oracle parameter")
    sp.add_argument("--hole", action="append", default=[], metavar="C1,..,CN:R")
    sp.add_argument("--holes-json")
    sp.add_argument("--grid-density", type=int, default=DEFAULT_GRID_DENSITY)
    sp.add_argument("--seed", type=int, default=0, help="probe seed")
    sp.add_argument("--config", help="INI run configuration")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("repro", help="run a reproduction recipe end to end")
    sp.add_argument("recipe", choices=RECIPES)
    sp.add_argument("--output", default="repro-out", help="output directory")
    sp.add_argument("--ply", help="scanned model (PLY) for the bunny and dragon recipes")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--q-count", type=int)
    sp.add_argument("--sketch-m", type=int)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--step-clip", type=float)
    sp.add_argument("--eps-rel", type=float)
    sp.add_argument("--attraction", choices=("literal", "frozen"))
    sp.add_argument("--lambda-mode", choices=("per_point", "median"))
    sp.add_argument("--no-prepass", action="store_true")
    sp.add_argument("--literal-ck", action="store_true")
    sp.add_argument("--literal-multihole", action="store_true")
    sp.add_argument("--ply-project3", action="store_true", help="also write PLY views of the first three coordinates")
    sp.set_defaults(func=cmd_repro)
    return ap


# -- helpers -------------------------------------------------------------------------

def _run_config(args) -> mio.RunConfig:
    cfg = mio.read_config(args.config) if getattr(args, "config", None) else mio.RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.optimizer["seed"] = args.seed
    return cfg


def _parse_params(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"parameter {item!r} must look like KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = mio._generic(v)
    return out


def _load_input(args, cfg: mio.RunConfig) -> PointCloud:
    path = args.input or cfg.input
    if path:
        return mio.read_cloud(path, args.format or cfg.format)
    if cfg.generator:
        return _generate_from(dict(cfg.generator), cfg.seed)[0]
    raise UsageError("no input: pass --input or a config with [run] input or [generator]")


def _generate_from(gen: dict, seed: int):
    kind = gen.pop("kind")
    count = int(gen.pop("count"))
    noise = float(gen.pop("noise", 0.0))
    spec = GeneratorSpec(str(kind), count, noise=noise, seed=seed, params=gen)
    cloud = generate(spec)
    if noise > 0:
        cloud = add_uniform_noise(cloud, noise, seed + 1)
    return cloud, spec


def _output(args, cfg, default=None):
    out = args.output or cfg.output or default
    if not out:
        raise UsageError("no output path: pass --output")
    return out


def _overrides(args) -> dict:
    kw = {
        "max_iters": getattr(args, "iters", None),
        "sketch_m": getattr(args, "sketch_m", None),
        "threads": getattr(args, "threads", None),
        "step_clip": getattr(args, "step_clip", None),
        "eps_rel": getattr(args, "eps_rel", None),
        "attraction": getattr(args, "attraction", None),
        "lambda_mode": getattr(args, "lambda_mode", None),
    }
    if getattr(args, "no_sketch", False):
        kw["use_sketch"] = False
    if getattr(args, "no_prepass", False):
        kw["prepass_iters"] = 0
    if getattr(args, "literal_ck", False):
        kw["literal_ck"] = True
    if getattr(args, "literal_multihole", False):
        kw["literal_multihole"] = True
    return kw


def _repair_config(args, cfg, count) -> RepairConfig:
    # --q-count beats the config, which beats half the input size.
    return cfg.repair_config(max(1, count // 2), q_count=args.q_count, **_overrides(args))


def _holes(args, cfg):
    holes = [mio.parse_hole_arg(h) for h in args.hole]
    path = args.holes_json or cfg.holes_path
    if path:
        holes += mio.read_holes(path)
    return holes


def _config_echo(config) -> dict:
    """Optimizer settings for reports; the thread count is left out because results never depend on it."""
    doc = mio._jsonable(config)
    doc.pop("threads", None)
    return doc


def _side(out, suffix):
    p = Path(out)
    return str(p.with_name(p.name + suffix))


# -- subcommands -----------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _run_config(args)
    gen = dict(cfg.generator or {})
    if args.kind:
        gen["kind"] = args.kind
    if args.count is not None:
        gen["count"] = args.count
    if args.noise is not None:
        gen["noise"] = args.noise
    gen.update(_parse_params(args.param))
    if "kind" not in gen or "count" not in gen:
        raise UsageError("generate needs --kind and --count (or a [generator] section)")
    cloud, spec = _generate_from(gen, cfg.seed)
    out = _output(args, cfg)
    mio.write_cloud(cloud, out, args.format or cfg.format, ply_project3=args.ply_project3)
    mio.write_report(spec.ground_truth(), _side(out, ".truth.json"))
    return 0


def cmd_mlop(args) -> int:
    cfg = _run_config(args)
    p = _load_input(args, cfg)
    config = _repair_config(args, cfg, p.count)
    out = _output(args, cfg)
    try:
        q, runlog = run_mlop(p, config)
    except NumericalAbort as exc:
        if getattr(exc, "run_log", None) is not None:
            exc.run_log.write_csv(args.log or _side(out, ".log.csv"))
        raise
    mio.write_cloud(q, out, args.format or cfg.format, ply_project3=args.ply_project3)
    runlog.write_csv(args.log or _side(out, ".log.csv"))
    return 0


def cmd_rmlop(args) -> int:
    cfg = _run_config(args)
    p = _load_input(args, cfg)
    holes = _holes(args, cfg)
    config = _repair_config(args, cfg, p.count)
    out = _output(args, cfg)
    res = run_rmlop_full(p, holes, config)
    mio.write_cloud(res.q, out, args.format or cfg.format, ply_project3=args.ply_project3)
    res.log.write_csv(args.log or _side(out, ".log.csv"))
    if res.weights is not None:
        mio.write_weights(res.q, res.weights.tau_bar, args.weights or _side(out, ".weights.csv"))
    oracle = cfg.metrics.get("oracle")
    report = compute_report(res.q, kind=oracle, params=_oracle_params(cfg), holes=holes,
                            runlog=res.log, grid_density=int(cfg.metrics.get("grid_density", DEFAULT_GRID_DENSITY)))
    doc = report.to_json()
    doc["config"] = _config_echo(config)
    doc["holes"] = [h.to_json() for h in holes]
    doc["run_info"] = res.log.info
    mio.write_report(doc, args.report or _side(out, ".report.json"))
    return 0


def _oracle_params(cfg) -> dict:
    return {k: v for k, v in cfg.metrics.items() if k not in ("oracle", "grid_density")}


def cmd_detect(args) -> int:
    cfg = _run_config(args)
    p = _load_input(args, cfg)
    x = p
    iters = args.iters if args.iters is not None else cfg.optimizer.get("max_iters", 0)
    if iters > 0:
        config = _repair_config(args, cfg, p.count)
        x, _ = run_mlop(p, config)
    holes, labels = holes_from_cloud(x)
    out = _output(args, cfg)
    mio.write_holes(holes, out)
    if args.labels:
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "label", "count", "score"])
        for i, (lab, c, s) in enumerate(zip(labels.labels, labels.counts, labels.scores)):
            w.writerow([i, lab, int(c), repr(float(s))])
        mio._write(args.labels, buf.getvalue())
    return 0


def cmd_metrics(args) -> int:
    cfg = _run_config(args)
    q = _load_input(args, cfg)
    holes = _holes(args, cfg)
    kind = args.kind or cfg.metrics.get("oracle")
    params = _oracle_params(cfg)
    params.update(_parse_params(args.param))
    report = compute_report(q, kind=kind, params=params, holes=holes,
                            grid_density=args.grid_density, seed=args.seed)
    doc = report.to_json()
    doc["holes"] = [h.to_json() for h in holes]
    if args.output:
        mio.write_report(doc, args.output)
    else:
        doc.setdefault("version", mio.version_string())
        sys.stdout.write(json.dumps(mio._jsonable(doc), indent=2, sort_keys=True) + "\n")
    return 0


def _digest(path: Path) -> str:
    data = path.read_bytes()
    if path.name == "log.csv":
        # Wall-clock timings are the only nondeterministic output; hash the log without them.
        rows = list(csv.reader(_stdio.StringIO(data.decode("utf-8"))))
        if rows and "wall_ms" in rows[0]:
            k = rows[0].index("wall_ms")
            data = "\n".join(",".join(r[:k] + r[k + 1:]) for r in rows).encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def cmd_repro(args) -> int:
    scan = None
    if args.recipe in SCAN_RECIPES:
        if not args.ply:
            raise UsageError(f"recipe {args.recipe!r} needs a scanned model: pass --ply PATH")
        scan = mio.read_cloud(args.ply, "ply")
    kw = _overrides(args)
    if args.q_count is not None:
        kw["q_count"] = args.q_count
    data = build(args.recipe, args.seed, scan=scan, **kw)
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {out}: {exc.strerror or exc}") from exc

    from .mlop import prepare
    setup = prepare(data.p, data.config, q0=data.q0)
    q0 = setup.q0
    probes = [coverage_probes(q0, h, seed=args.seed) for h in data.holes]
    before = compute_report(q0, kind=data.kind, params=data.params, holes=data.holes, probes=probes)
    res = run_rmlop_full(data.p, data.holes, data.config, setup=setup)
    after = compute_report(res.q, kind=data.kind, params=data.params, holes=data.holes,
                           runlog=res.log, probes=probes)

    files = {
        "input.csv": lambda p: mio.write_cloud(data.p, p, "csv"),
        "before.csv": lambda p: mio.write_cloud(PointCloud(q0), p, "csv"),
        "after.csv": lambda p: mio.write_cloud(res.q, p, "csv"),
        "holes.json": lambda p: mio.write_holes(data.holes, p),
        "log.csv": lambda p: res.log.write_csv(p),
    }
    if res.weights is not None:
        files["weights.csv"] = lambda p: mio.write_weights(res.q, res.weights.tau_bar, p)
    if args.ply_project3 or data.p.ambient_dim == 3:
        files["before.ply"] = lambda p: mio.write_cloud(PointCloud(q0), p, "ply", ply_project3=True)
        files["after.ply"] = lambda p: mio.write_cloud(res.q, p, "ply", ply_project3=True)
    for name, write in files.items():
        write(out / name)

    cov0, cov1 = before.hole_coverage, after.hole_coverage
    report = after.to_json()
    report.update({
        "recipe": args.recipe,
        "seed": args.seed,
        "config": _config_echo(data.config),
        "holes": [h.to_json() for h in data.holes],
        "before": before.to_json(),
        "coverage_before": cov0,
        "coverage_after": cov1,
        "coverage_reduction": [1.0 - b / a if a > 0 else 0.0 for a, b in zip(cov0, cov1)],
        "run_info": res.log.info,
        "input_points": data.p.count,
    })
    mio.write_report(report, out / "report.json")
    names = sorted(list(files) + ["report.json"])
    manifest = {name: _digest(out / name) for name in names}
    mio._write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for k, (a, b) in enumerate(zip(cov0, cov1)):
        print(f"hole {k}: coverage {a:.4g} -> {b:.4g}")
    print(f"nn_ratio {before.nn_ratio:.4g} -> {after.nn_ratio:.4g}; outputs in {out}")
    return 0


# -- entry point ---------------------------------------------------------------------

def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"manifold-repair: error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"manifold-repair: numerical abort: {exc}", file=sys.stderr)
        return 3
    except ManifoldRepairError as exc:
        print(f"manifold-repair: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # Stray validation from numpy on user-supplied values.
        print(f"manifold-repair: invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"manifold-repair: I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
