"""Point-cloud files (CSV, XYZ, PLY), holes JSON, reports and run configuration."""
from __future__ import annotations

import configparser
import json
import os
import re
import subprocess
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from .core import PointCloud, as_coords
from .errors import InvalidInputError, IOFailure, ParseError
from .rmlop import HoleSpec, RepairConfig

SEED_ENV = "MANIFOLD_REPAIR_SEED"
FORMATS = ("csv", "xyz", "ply")

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def infer_format(path, fmt: str | None = None) -> str:
    if fmt:
        fmt = fmt.lower()
        if fmt not in FORMATS:
            raise InvalidInputError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
        return fmt
    ext = Path(path).suffix.lower().lstrip(".")
    if ext in FORMATS:
        return ext
    if ext == "txt":
        return "xyz"
    raise InvalidInputError(f"cannot infer the format of {path}; pass --format")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from exc


# -- text formats ---------------------------------------------------------------

_SPLIT = re.compile(r"[,\s]+")


def parse_text_cloud(text: str, path=None) -> PointCloud:
    """One point per line; comma and/or whitespace separated. Blank lines and '#' comments are skipped."""
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tokens = [t for t in _SPLIT.split(s) if t]
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise ParseError(f"non-numeric token {bad!r}", f"line {lineno}", path) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"expected {width} values, found {len(vals)}", f"line {lineno}", path)
        if not all(np.isfinite(vals)):
            raise ParseError("non-finite value", f"line {lineno}", path)
        rows.append(vals)
    if not rows:
        raise ParseError("no points found", None, path)
    return PointCloud(np.array(rows, dtype=np.float64))


def _is_float(t):
    try:
        float(t)
        return True
    except ValueError:
        return False


def format_text_cloud(cloud, sep=",") -> str:
    x = as_coords(cloud)
    return "".join(sep.join(repr(float(v)) for v in row) + "\n" for row in x)


# -- PLY ------------------------------------------------------------------------

@dataclass
class _PlyElement:
    name: str
    count: int
    props: list = field(default_factory=list)  # (name, dtype) or (name, (count_dtype, item_dtype))


def _parse_ply_header(data: bytes, path):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("missing 'ply' magic or 'end_header'", "byte 0", path)
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    try:
        header = data[:end].decode("ascii")
    except UnicodeDecodeError:
        raise ParseError("header is not ASCII", "header", path) from None
    fmt = None
    elements = []
    for lineno, line in enumerate(header.splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise ParseError(f"bad format line {line!r}", f"header line {lineno}", path)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(f"bad element line {line!r}", f"header line {lineno}", path)
            elements.append(_PlyElement(tok[1], int(tok[2])))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", f"header line {lineno}", path)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise ParseError(f"unknown list types in {line!r}", f"header line {lineno}", path)
                elements[-1].props.append((tok[4], (_PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1].props.append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise ParseError(f"bad property line {line!r}", f"header line {lineno}", path)
        else:
            raise ParseError(f"unexpected header keyword {tok[0]!r}", f"header line {lineno}", path)
    if fmt is None:
        raise ParseError("missing format line", "header", path)
    if fmt == "binary_big_endian":
        raise ParseError("binary_big_endian PLY is not supported", "header", path)
    return fmt, elements, body_start


def _vertex_columns(el, path):
    names = [p[0] for p in el.props]
    missing = [c for c in ("x", "y", "z") if c not in names]
    if missing:
        raise ParseError(f"vertex element lacks properties {missing}", "header", path)
    return [names.index(c) for c in ("x", "y", "z")]


def parse_ply(data: bytes, path=None) -> PointCloud:
    fmt, elements, pos = _parse_ply_header(data, path)
    verts = [e for e in elements if e.name == "vertex"]
    if not verts:
        raise ParseError("no vertex element", "header", path)
    if verts[0].count == 0:
        raise ParseError("vertex element is empty", "header", path)
    if fmt == "ascii":
        return _parse_ply_ascii(data[pos:], elements, path)
    return _parse_ply_binary(data, pos, elements, path)


def _parse_ply_ascii(body: bytes, elements, path):
    lines = [ln for ln in body.decode("ascii", errors="replace").splitlines() if ln.strip()]
    li = 0
    for el in elements:
        if el.name != "vertex":
            li += el.count
            continue
        cols = _vertex_columns(el, path)
        if any(isinstance(t, tuple) for _, t in el.props):
            raise ParseError("list properties on the vertex element are not supported", "header", path)
        if li + el.count > len(lines):
            raise ParseError(f"expected {el.count} vertex lines, file ends early", f"body line {len(lines) + 1}", path)
        out = np.empty((el.count, 3))
        for k in range(el.count):
            tok = lines[li + k].split()
            if len(tok) != len(el.props):
                raise ParseError(f"expected {len(el.props)} values, found {len(tok)}", f"body line {li + k + 1}", path)
            try:
                out[k] = [float(tok[c]) for c in cols]
            except ValueError:
                raise ParseError("non-numeric vertex value", f"body line {li + k + 1}", path) from None
        if not np.all(np.isfinite(out)):
            raise ParseError("non-finite vertex coordinate", "vertex element", path)
        return PointCloud(out)
    raise ParseError("no vertex element", "header", path)


def _parse_ply_binary(data: bytes, pos: int, elements, path):
    for el in elements:
        has_list = any(isinstance(t, tuple) for _, t in el.props)
        if el.name == "vertex":
            if has_list:
                raise ParseError("list properties on the vertex element are not supported", "header", path)
            cols = _vertex_columns(el, path)
            dt = np.dtype([(f"p{i}", "<" + t) for i, (_, t) in enumerate(el.props)])
            need = dt.itemsize * el.count
            if pos + need > len(data):
                raise ParseError(f"vertex data truncated: need {need} bytes", f"byte {pos}", path)
            rec = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
            out = np.column_stack([rec[f"p{c}"].astype(np.float64) for c in cols])
            if not np.all(np.isfinite(out)):
                raise ParseError("non-finite vertex coordinate", "vertex element", path)
            return PointCloud(out)
        pos = _skip_binary_element(data, pos, el, path)
    raise ParseError("no vertex element", "header", path)


def _skip_binary_element(data, pos, el, path):
    for _ in range(el.count):
        for _, t in el.props:
            if isinstance(t, tuple):
                cnt_t, item_t = np.dtype("<" + t[0]), np.dtype("<" + t[1])
                if pos + cnt_t.itemsize > len(data):
                    raise ParseError(f"element {el.name!r} truncated", f"byte {pos}", path)
                n = int(np.frombuffer(data, dtype=cnt_t, count=1, offset=pos)[0])
                pos += cnt_t.itemsize + n * item_t.itemsize
            else:
                pos += np.dtype(t).itemsize
            if pos > len(data):
                raise ParseError(f"element {el.name!r} truncated", f"byte {pos}", path)
    return pos


def format_ply(cloud, binary: bool = False) -> bytes:
    x = as_coords(cloud)
    if x.shape[1] != 3:
        raise InvalidInputError(f"PLY output needs 3-D points, got {x.shape[1]}-D (use CSV or project to 3-D)")
    kind = "binary_little_endian" if binary else "ascii"
    head = (f"ply\nformat {kind} 1.0\nelement vertex {x.shape[0]}\n"
            "property double x\nproperty double y\nproperty double z\nend_header\n").encode("ascii")
    if binary:
        return head + np.ascontiguousarray(x, dtype="<f8").tobytes()
    return head + format_text_cloud(x, sep=" ").encode("ascii")


# -- public read/write ------------------------------------------------------------

def read_cloud(path, fmt: str | None = None) -> PointCloud:
    fmt = infer_format(path, fmt)
    data = _read_bytes(path)
    if fmt == "ply":
        return parse_ply(data, path)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not UTF-8 text", f"byte {exc.start}", path) from None
    return parse_text_cloud(text, path)


def _write(path, payload):
    try:
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(payload, bytes):
            p.write_bytes(payload)
        else:
            p.write_text(payload)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_cloud(cloud, path, fmt: str | None = None, ply_project3: bool = False, binary: bool = False):
    fmt = infer_format(path, fmt)
    x = as_coords(cloud)
    if fmt == "ply":
        if x.shape[1] != 3:
            if not ply_project3:
                raise InvalidInputError(f"PLY output needs 3-D points, got {x.shape[1]}-D; "
                                        "write CSV or pass --ply-project3")
            if x.shape[1] < 3:
                raise InvalidInputError("cannot project a cloud of dimension < 3 to 3-D")
            x = x[:, :3]
        _write(path, format_ply(x, binary))
    else:
        _write(path, format_text_cloud(x, sep="," if fmt == "csv" else " "))


def write_weights(cloud, tau, path):
    """Cloud coordinates with an extra last column holding the hole weight of each point."""
    x = as_coords(cloud)
    tau = np.asarray(tau, dtype=np.float64).reshape(-1, 1)
    header = "# " + ",".join([f"x{i}" for i in range(x.shape[1])] + ["tau_bar"]) + "\n"
    _write(path, header + format_text_cloud(np.hstack([x, tau])))


# -- holes and reports ---------------------------------------------------------

def parse_holes(doc, path=None) -> list[HoleSpec]:
    if isinstance(doc, dict) and "holes" in doc:
        doc, prefix = doc["holes"], "/holes"
    else:
        prefix = ""
    if not isinstance(doc, list):
        raise ParseError("expected a list of holes", prefix or "/", path)
    out = []
    for i, item in enumerate(doc):
        ptr = f"{prefix}/{i}"
        if not isinstance(item, dict):
            raise ParseError("hole must be an object", ptr, path)
        if "center" not in item or "radius" not in item:
            raise ParseError("hole needs 'center' and 'radius'", ptr, path)
        c = item["center"]
        if not isinstance(c, list) or not c or not all(_is_number(v) for v in c):
            raise ParseError("center must be a non-empty list of numbers", f"{ptr}/center", path)
        r = item["radius"]
        if not _is_number(r) or not np.isfinite(r) or r <= 0:
            raise ParseError("radius must be a positive number", f"{ptr}/radius", path)
        if not all(np.isfinite(c)):
            raise ParseError("center must be finite", f"{ptr}/center", path)
        out.append(HoleSpec(np.array(c, dtype=np.float64), float(r)))
    return out


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def read_holes(path) -> list[HoleSpec]:
    data = _read_bytes(path)
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        loc = f"line {exc.lineno}" if isinstance(exc, json.JSONDecodeError) else "byte 0"
        raise ParseError(f"invalid JSON: {exc}", loc, path) from None
    return parse_holes(doc, path)


def write_holes(holes, path):
    _write(path, json.dumps([h.to_json() for h in holes], indent=2) + "\n")


def parse_hole_arg(text: str) -> HoleSpec:
    """Parse the command-line form 'c1,c2,...,cn:r'."""
    if text.count(":") != 1:
        raise ParseError("hole must look like 'c1,...,cn:r'", None, text)
    left, right = text.split(":")
    try:
        center = [float(v) for v in left.split(",")]
        radius = float(right)
    except ValueError:
        raise ParseError("hole center and radius must be numbers", None, text) from None
    if not np.all(np.isfinite(center)) or not np.isfinite(radius) or radius <= 0:
        raise ParseError("hole needs a finite center and a positive radius", None, text)
    return HoleSpec(np.array(center), radius)


def version_string() -> str:
    from . import __version__
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_report(report: dict, path):
    doc = dict(report)
    doc.setdefault("version", version_string())
    _write(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}", None, path) from None


# -- run configuration -----------------------------------------------------------

@dataclass
class RunConfig:
    """Settings read from an INI file.

    Sections: ``[run]`` (seed, input, output, format), ``[generator]``
    (kind, count, noise and kind parameters), ``[optimizer]`` (any
    optimizer field), ``[repair]`` (eps_nb, prepass_iters, literal_ck,
    literal_multihole), ``[holes]`` (path) and ``[metrics]`` (oracle,
    grid_density).
    """

    seed: int = 0
    input: str | None = None
    output: str | None = None
    format: str | None = None
    generator: dict | None = None
    optimizer: dict = field(default_factory=dict)
    holes_path: str | None = None
    metrics: dict = field(default_factory=dict)

    def repair_config(self, default_q: int, **overrides) -> RepairConfig:
        """Config-file settings overlaid with the non-None ``overrides``; ``default_q`` fills a missing q_count."""
        kw = dict(self.optimizer)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        kw.setdefault("seed", self.seed)
        kw.setdefault("q_count", default_q)
        return RepairConfig(**kw)


_BOOL = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}


def _coerce(value: str, kind, where):
    s = value.strip()
    try:
        if kind is bool:
            if s.lower() not in _BOOL:
                raise ValueError
            return _BOOL[s.lower()]
        if kind is int:
            return int(s)
        if kind is float:
            return float(s)
        if kind == "opt_int":
            return None if s.lower() in ("", "none") else int(s)
        if kind == "opt_float":
            return None if s.lower() in ("", "none") else float(s)
    except ValueError:
        raise ParseError(f"cannot interpret {s!r} as {getattr(kind, '__name__', kind)}", where) from None
    return s


def _field_kinds():
    kinds = {}
    for f in fields(RepairConfig):
        t = str(f.type)
        if "None" in t:
            kinds[f.name] = "opt_int" if "int" in t else "opt_float"
        elif t in ("int", "float", "bool", "str"):
            kinds[f.name] = {"int": int, "float": float, "bool": bool, "str": str}[t]
    return kinds


def _generic(value: str):
    s = value.strip()
    if "," in s:
        parts = [p.strip() for p in s.split(",")]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            return s
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    return s


def parse_config(text: str, path=None, env=None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        raise ParseError(f"invalid config: {exc.message if hasattr(exc, 'message') else exc}",
                         getattr(exc, "lineno", None), path) from None
    known = {"run", "generator", "optimizer", "repair", "holes", "metrics"}
    for sec in cp.sections():
        if sec not in known:
            raise ParseError(f"unknown section [{sec}]", f"[{sec}]", path)
    cfg = RunConfig()
    if cp.has_section("run"):
        run = cp["run"]
        for key in run:
            if key not in ("seed", "input", "output", "format"):
                raise ParseError(f"unknown key {key!r}", f"[run] {key}", path)
        if "seed" in run:
            cfg.seed = _coerce(run["seed"], int, f"[run] seed")
        cfg.input = run.get("input")
        cfg.output = run.get("output")
        cfg.format = run.get("format")
    kinds = _field_kinds()
    for sec in ("optimizer", "repair"):
        if not cp.has_section(sec):
            continue
        for key, val in cp[sec].items():
            if key not in kinds or key == "q_count" and sec == "repair":
                raise ParseError(f"unknown key {key!r}", f"[{sec}] {key}", path)
            cfg.optimizer[key] = _coerce(val, kinds[key], f"[{sec}] {key}")
    if cp.has_section("generator"):
        gen = {k: _generic(v) for k, v in cp["generator"].items()}
        for req in ("kind", "count"):
            if req not in gen:
                raise ParseError(f"generator needs {req!r}", "[generator]", path)
        cfg.generator = gen
    if cp.has_section("holes"):
        cfg.holes_path = cp["holes"].get("path")
    if cp.has_section("metrics"):
        cfg.metrics = {k: _generic(v) for k, v in cp["metrics"].items()}
    if cfg.input and cfg.generator:
        raise ParseError("give either [run] input or a [generator] section, not both", None, path)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg.seed = _coerce(env[SEED_ENV], int, SEED_ENV)
        cfg.optimizer["seed"] = cfg.seed
    return cfg


def read_config(path, env=None) -> RunConfig:
    try:
        text = _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError:
        raise ParseError("config is not UTF-8 text", None, path) from None
    return parse_config(text, path, env)
