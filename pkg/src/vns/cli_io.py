"""Run configuration, binary snapshots and CSV output.

Config files are UTF-8 text with one ``dotted.key = value`` per line and
``#`` comments.  Snapshots use the little-endian "VNS1" layout:

    magic "VNS1" | version u32 | n u32 | l f64 | t f64 | field count u32
    then per field: name length u32 | UTF-8 name | n*n f64 (row-major)

CSV files start with a ``#`` header line carrying the schema version, code
version and the SHA-256 of the normalized config, then a column-name row.
Floats are written with 17 significant digits.
"""

from __future__ import annotations

import hashlib
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__

MAGIC = b"VNS1"
SNAPSHOT_VERSION = 1
CSV_SCHEMA = 1


class ConfigError(ValueError):
    """Invalid configuration, with line/key context in the message."""


class SnapshotError(ValueError):
    """Malformed, truncated or incompatible snapshot file."""


# ---------------------------------------------------------------------------
# config schema

_REQUIRED = object()


def _opt(conv):
    def parse(text: str):
        if text.strip().lower() in ("none", "auto", ""):
            return None
        return conv(text)

    parse.__name__ = f"optional {conv.__name__}"
    return parse


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_bool.__name__ = "bool"


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    return tuple(float(p) for p in parts)


_floats.__name__ = "float list"


def _ints(text: str) -> tuple[int, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    return tuple(int(p) for p in parts)


_ints.__name__ = "int list"


def _str(text: str) -> str:
    return text.strip()


_str.__name__ = "string"

# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "grid.n": (int, 64),
    "grid.l": (float, 2.0 * math.pi),
    "grid.dealias": (_str, "two_thirds"),
    "time.t_end": (float, 1.0),
    "time.cfl": (float, 0.5),
    "time.sample_every": (_opt(float), 0.1),
    "solver.nu_bar": (_opt(float), None),
    "solver.cg_tol": (float, 1e-10),
    "solver.variant": (_str, "munse"),
    "solver.scheme": (_str, "semi_lagrangian_spectral"),
    "solver.interpolation": (_str, "cubic"),
    "init.kind": (_str, _REQUIRED),
    "init.amplitude": (float, 1.0),
    "init.mu": (float, 1.0),
    "init.omega": (_opt(_str), None),
    "init.mode": (int, 1),
    "init.kmax": (int, 4),
    "init.seed": (int, 0),
    "init.theta_amplitude": (float, 1.0),
    "init.smallness": (_opt(float), None),
    "init.patch.center_x": (_opt(float), None),
    "init.patch.center_y": (_opt(float), None),
    "init.patch.radius": (float, 1.0),
    "init.patch.mu_in": (float, 2.0),
    "init.patch.mu_out": (float, 0.5),
    "init.patch.mollify_width": (_opt(float), None),
    "init.layers.radii": (_floats, (0.5, 1.0)),
    "init.layers.values": (_floats, (2.0, 1.0, 0.5)),
    "init.layers.mollify_width": (_opt(float), None),
    "init.file.path": (_opt(_str), None),
    "diag.epsilon": (float, 0.5),
    "diag.delta": (float, 0.45),
    "diag.interface": (_opt(_bool), None),
    "diag.interface_points": (int, 256),
    "output.snapshot_every": (_opt(float), None),
    "output.dir": (_str, "out"),
    "probe.k_values": (_floats, (2.0, 4.0, 8.0)),
    "probe.p_grid": (_floats, tuple(2.0 + 0.0625 * i for i in range(1, 17)) + (3.5, 4.0, 5.0, 6.0)),
    "probe.threshold": (float, 1.01),
    "probe.ensemble_size": (int, 48),
    "probe.seed": (int, 0),
    "probe.power_steps": (int, 12),
    "probe.refine_keep": (int, 4),
    "probe.hotspots": (_bool, True),
    "probe.mollify_width": (_opt(float), None),
    "commutator.count": (int, 100),
    "commutator.seeds": (_ints, (0, 1, 2)),
    "commutator.p": (float, 2.0),
    "commutator.p1": (float, 4.0),
    "commutator.p2": (float, 4.0),
    "commutator.slope": (float, 1.0),
}

INIT_KINDS = ("taylor_green", "patch", "layers", "file")
OMEGA_KINDS = ("taylor_green", "random", "zero")


def _fmt(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration: a flat mapping of every schema key."""

    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def normalized(self) -> str:
        """Canonical text form (sorted keys, all defaults filled in)."""
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in sorted(self.values))

    def sha256(self) -> str:
        return hashlib.sha256(self.normalized().encode("utf-8")).hexdigest()

    def with_overrides(self, **kv) -> "RunConfig":
        """Copy with dotted keys given as keyword names using '__' for '.'."""
        vals = dict(self.values)
        for k, v in kv.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = v
        cfg = RunConfig(vals)
        validate_config(cfg)
        return cfg


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate config text.

    Raises:
        ConfigError: for syntax errors, unknown or duplicate keys, type
            mismatches and invariant violations.
    """
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {raw[key][0]})")
        raw[key] = (lineno, value)
    values: dict[str, Any] = {}
    for key, (conv, default) in SCHEMA.items():
        if key in raw:
            lineno, text_value = raw[key]
            try:
                values[key] = conv(text_value)
            except ValueError as exc:
                raise ConfigError(
                    f"{source}:{lineno}: key {key!r}: expected {conv.__name__}, got {text_value!r} ({exc})"
                ) from None
        elif default is _REQUIRED:
            raise ConfigError(f"{source}: missing required key {key!r}")
        else:
            values[key] = default
    cfg = RunConfig(values)
    try:
        validate_config(cfg)
    except ConfigError as exc:
        key = getattr(exc, "key", None)
        where = f":{raw[key][0]}" if key in raw else ""
        raise ConfigError(f"{source}{where}: {exc}") from None
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a config file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{p}: not valid UTF-8 ({exc})") from None
    return parse_config_text(text, str(p))


def _fail(key: str, message: str):
    err = ConfigError(f"key {key!r}: {message}")
    err.key = key
    raise err


def validate_config(cfg: RunConfig) -> None:
    """Re-validate the invariants of every module the config feeds.

    Raises:
        ConfigError: naming the offending key.
    """
    from .spectral_core import Grid
    from .transport import AdvectionScheme

    v = cfg.values
    for key, args in (("grid.n", (v["grid.n"],)), ("grid.l", (64, v["grid.l"])),
                      ("grid.dealias", (64, 1.0, v["grid.dealias"]))):
        try:
            Grid(*args)
        except ValueError as exc:
            _fail(key, str(exc))
    grid = Grid(v["grid.n"], v["grid.l"], v["grid.dealias"])
    if not (0 < v["time.cfl"] < 1):
        _fail("time.cfl", f"must lie in (0, 1), got {v['time.cfl']}")
    if not (v["time.t_end"] >= 0 and math.isfinite(v["time.t_end"])):
        _fail("time.t_end", "must be finite and nonnegative")
    if v["time.sample_every"] is not None and not v["time.sample_every"] > 0:
        _fail("time.sample_every", "must be positive")
    if not (0 < v["solver.cg_tol"] <= 1e-4):
        _fail("solver.cg_tol", "must lie in (0, 1e-4]")
    if v["solver.variant"] not in ("munse", "boussinesq"):
        _fail("solver.variant", "must be munse or boussinesq")
    try:
        AdvectionScheme(v["solver.scheme"], v["solver.interpolation"])
    except ValueError as exc:
        _fail("solver.scheme", str(exc))
    kind = v["init.kind"]
    if kind not in INIT_KINDS:
        _fail("init.kind", f"must be one of {INIT_KINDS}, got {kind!r}")
    if v["init.omega"] is not None and v["init.omega"] not in OMEGA_KINDS:
        _fail("init.omega", f"must be one of {OMEGA_KINDS}")
    if v["init.mu"] <= 0:
        _fail("init.mu", "must be positive")
    if v["init.mode"] < 1 or v["init.kmax"] < 1:
        _fail("init.mode", "wavenumbers must be >= 1")
    if v["init.smallness"] is not None and not v["init.smallness"] > 0:
        _fail("init.smallness", "must be positive")
    eps = v["diag.epsilon"]
    if not eps > 0:
        _fail("diag.epsilon", "must be positive")
    if not (1.0 / (2.0 + eps) < v["diag.delta"] < 0.5):
        _fail("diag.delta", f"must lie in (1/(2+eps), 1/2) = ({1 / (2 + eps):.4f}, 0.5)")
    if v["diag.interface_points"] < 16:
        _fail("diag.interface_points", "must be >= 16")
    if v["output.snapshot_every"] is not None and not v["output.snapshot_every"] > 0:
        _fail("output.snapshot_every", "must be positive")
    bounds = None
    if kind == "patch":
        try:
            patch_spec(cfg).validate(grid)
        except ValueError as exc:
            _fail("init.patch.radius", str(exc))
        if min(v["init.patch.mu_in"], v["init.patch.mu_out"]) <= 0:
            _fail("init.patch.mu_in", "viscosities must be positive")
        bounds = (min(v["init.patch.mu_in"], v["init.patch.mu_out"]),
                  max(v["init.patch.mu_in"], v["init.patch.mu_out"]))
    elif kind == "layers":
        try:
            layer_spec(cfg).validate(grid)
        except ValueError as exc:
            _fail("init.layers.radii", str(exc))
        bounds = (min(v["init.layers.values"]), max(v["init.layers.values"]))
    elif kind == "file":
        if not v["init.file.path"]:
            _fail("init.file.path", "required when init.kind = file")
    else:
        bounds = (v["init.mu"], v["init.mu"])
    nu = v["solver.nu_bar"]
    if nu is not None and bounds is not None and not (bounds[0] <= nu <= bounds[1]):
        _fail("solver.nu_bar", f"must lie in [{bounds[0]}, {bounds[1]}]")
    if not v["probe.p_grid"] or any(p <= 2 for p in v["probe.p_grid"]) or any(
            b <= a for a, b in zip(v["probe.p_grid"], v["probe.p_grid"][1:])):
        _fail("probe.p_grid", "must be ascending with all entries > 2")
    if any(k < 1 for k in v["probe.k_values"]):
        _fail("probe.k_values", "contrast values must be >= 1")
    if v["probe.ensemble_size"] < 16:
        _fail("probe.ensemble_size", "must be >= 16")
    if v["commutator.count"] < 1 or not v["commutator.seeds"]:
        _fail("commutator.count", "need at least one sample and one seed")
    p, p1, p2 = v["commutator.p"], v["commutator.p1"], v["commutator.p2"]
    if not (1 < p < math.inf) or abs(1 / p1 + 1 / p2 - 1 / p) > 1e-12:
        _fail("commutator.p", "need p in (1, inf) and 1/p1 + 1/p2 = 1/p")


def patch_spec(cfg: RunConfig):
    from .geometry import PatchSpec

    v = cfg.values
    half = 0.5 * v["grid.l"]
    cx = half if v["init.patch.center_x"] is None else v["init.patch.center_x"]
    cy = half if v["init.patch.center_y"] is None else v["init.patch.center_y"]
    return PatchSpec((cx, cy), v["init.patch.radius"], v["init.patch.mu_in"],
                     v["init.patch.mu_out"], v["init.patch.mollify_width"])


def layer_spec(cfg: RunConfig):
    from .geometry import LayerSpec

    v = cfg.values
    return LayerSpec(tuple(v["init.layers.radii"]), tuple(v["init.layers.values"]),
                     v["init.layers.mollify_width"])


# ---------------------------------------------------------------------------
# snapshots


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Decoded snapshot: header values and the named fields in file order."""

    n: int
    l: float
    t: float
    fields: dict[str, np.ndarray]


def encode_snapshot(fields: dict[str, np.ndarray], n: int, l: float, t: float) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIddI", SNAPSHOT_VERSION, n, float(l), float(t), len(fields)))
    for name, arr in fields.items():
        a = np.asarray(arr, dtype="<f8")
        if a.shape != (n, n):
            raise SnapshotError(f"field {name!r} has shape {a.shape}, expected {(n, n)}")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(np.ascontiguousarray(a).tobytes(order="C"))
    return buf.getvalue()


def decode_snapshot(data: bytes) -> Snapshot:
    """Parse snapshot bytes.

    Raises:
        SnapshotError: on bad magic, unsupported version or truncation.
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise SnapshotError("not a VNS1 snapshot (bad magic)")
    head = struct.calcsize("<IIddI")
    if len(data) < 4 + head:
        raise SnapshotError("truncated snapshot header")
    version, n, l, t, count = struct.unpack_from("<IIddI", data, 4)
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version} (this build reads {SNAPSHOT_VERSION})")
    pos = 4 + head
    fields: dict[str, np.ndarray] = {}
    size = n * n * 8
    for i in range(count):
        if pos + 4 > len(data):
            raise SnapshotError(f"truncated snapshot in field {i} header")
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + ln + size > len(data):
            raise SnapshotError(f"truncated snapshot in field {i}")
        name = data[pos:pos + ln].decode("utf-8")
        pos += ln
        arr = np.frombuffer(data, dtype="<f8", count=n * n, offset=pos).reshape(n, n).copy()
        pos += size
        if name in fields:
            raise SnapshotError(f"duplicate field {name!r}")
        fields[name] = arr
    if pos != len(data):
        raise SnapshotError(f"{len(data) - pos} trailing bytes after the last field")
    return Snapshot(n, l, t, fields)


def write_snapshot(path: str | Path, state, l: float | None = None) -> Path:
    """Write a State (or a Snapshot) to ``path``."""
    if isinstance(state, Snapshot):
        data = encode_snapshot(state.fields, state.n, state.l, state.t)
    else:
        g = state.grid
        data = encode_snapshot(state.arrays(), g.n, g.l if l is None else l, state.t)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(data)
    return p


def read_snapshot(path: str | Path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())


def state_from_snapshot(snap: Snapshot, dealias: str = "two_thirds"):
    """Rebuild a solver State from snapshot fields.

    Raises:
        SnapshotError: when required fields are missing.
    """
    from .solver import State
    from .spectral_core import Grid, ScalarField, VectorField
    from .transport import FlowMap

    need = ("omega", "mu", "tau_bar_1", "tau_bar_2", "dtau_mu")
    missing = [k for k in need if k not in snap.fields]
    if missing:
        raise SnapshotError(f"snapshot lacks fields {missing}")
    g = Grid(snap.n, snap.l, dealias)
    f = snap.fields
    theta = ScalarField(g, f["theta"]) if "theta" in f else None
    flow = FlowMap(np.array([f["flow_1"], f["flow_2"]]), snap.t) if "flow_1" in f else None
    return State(snap.t, ScalarField(g, f["omega"]), ScalarField(g, f["mu"]),
                 VectorField.from_arrays(g, f["tau_bar_1"], f["tau_bar_2"]),
                 ScalarField(g, f["dtau_mu"]), theta, flow)


# ---------------------------------------------------------------------------
# CSV


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def csv_text(kind: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
             config_sha: str = "") -> str:
    """Render a self-describing CSV document."""
    lines = [f"# vns {kind} schema={CSV_SCHEMA} code={__version__} config_sha256={config_sha}",
             ",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: str | Path, kind: str, columns: Sequence[str],
              rows: Iterable[Sequence[Any]], config_sha: str = "") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(csv_text(kind, columns, rows, config_sha), encoding="utf-8")
    return p


def read_csv(path: str | Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Return (header fields, columns, rows of strings)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# vns "):
        raise ValueError("missing vns CSV header")
    meta = dict(part.split("=", 1) for part in lines[0][2:].split() if "=" in part)
    cols = lines[1].split(",")
    return meta, cols, [ln.split(",") for ln in lines[2:]]
