"""Run configuration, manifests, and serialization.

Configs are strict JSON: every key must be known, constraint violations
name the offending key, and derived quantities (grid spacing, critical
exponent, ball radii) are computed at load time so downstream code never
re-derives them inconsistently. Scientific outputs are byte-reproducible;
wall-clock timestamps are quarantined in the run manifest.

Field files are a one-line JSON header followed by a raw little-endian
float64 block in sample-major order, with a sha256 digest of the block in
the header. Cheap to write, bit-exact to read back, and self-describing
enough to catch truncation and mismatched grids.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .energy import EnergyParams
from .grid import BallHierarchy, GridSpec, ScalarField, VectorField, make_grid
from .lab import DecayTable, ProbeReport, PROBE_NAMES
from .solver import SolverConfig

SCHEMA_VERSION = 1
ARTIFACT_VERSION = "0.1.0"


class ConfigError(ValueError):
    """Raised for malformed or contradictory run configurations."""


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: EnergyParams
    solver: SolverConfig
    hierarchy: BallHierarchy | None
    initial: dict
    probes: tuple
    probe_params: dict
    t: float | None
    seed: int
    out_dir: str
    raw: dict = field(repr=False, default_factory=dict)


_TOP_KEYS = {
    "schema_version",
    "grid",
    "energy",
    "solver",
    "hierarchy",
    "initial",
    "probes",
    "probe_params",
    "seed",
    "out_dir",
}
_GRID_KEYS = {"dim", "points_per_axis", "box_length"}
_ENERGY_KEYS = {"s", "p", "eps_reg", "t", "critical_mode"}
_SOLVER_KEYS = {"max_iters", "step0", "armijo_c", "armijo_shrink", "grad_tol", "energy_tol"}
_HIER_KEYS = {"center", "base_radius", "levels"}
_INITIAL_KEYS = {"kind", "degree", "phase_amp", "value", "path", "seed"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown config key {where}.{k}" if where else f"unknown config key {k}")


def parse_config(doc: dict) -> RunConfig:
    """Validate a config dictionary into a RunConfig. All constraint
    violations raise ConfigError naming the offending key."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "")
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc['schema_version']}")

    gdoc = doc.get("grid", {})
    if not isinstance(gdoc, dict):
        raise ConfigError("grid: must be an object")
    _reject_unknown(gdoc, _GRID_KEYS, "grid")
    try:
        grid = make_grid(
            int(gdoc.get("dim", 1)),
            int(gdoc.get("points_per_axis", 64)),
            float(gdoc.get("box_length", 2.0 * np.pi)),
        )
    except ValueError as e:
        raise ConfigError(f"grid: {e}") from None

    edoc = doc.get("energy", {})
    _reject_unknown(edoc, _ENERGY_KEYS, "energy")
    s = float(edoc.get("s", 0.5))
    critical = bool(edoc.get("critical_mode", False))
    if critical:
        p_implied = grid.dim / s
        if "p" in edoc and abs(float(edoc["p"]) - p_implied) > 1e-12:
            raise ConfigError(
                f"energy.p: critical_mode pins p = n/s = {p_implied}, got {edoc['p']}"
            )
        p = p_implied
    else:
        p = float(edoc.get("p", grid.dim / s))
    try:
        params = EnergyParams(s=s, p=p, eps_reg=float(edoc.get("eps_reg", 0.0)))
    except ValueError as e:
        raise ConfigError(f"energy: {e}") from None
    t = edoc.get("t")
    if t is not None:
        t = float(t)
        if not (0.0 < t < 1.0):
            raise ConfigError(f"energy.t: must lie in (0,1), got {t}")
        lower = 1.0 - (1.0 - s) * p
        if not (t > lower):
            raise ConfigError(f"energy.t: must exceed 1 - (1-s)p = {lower}, got {t}")

    sdoc = doc.get("solver", {})
    _reject_unknown(sdoc, _SOLVER_KEYS, "solver")
    try:
        solver = SolverConfig(seed=int(doc.get("seed", 0)), **{k: v for k, v in sdoc.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"solver: {e}") from None

    hdoc = doc.get("hierarchy")
    hierarchy = None
    if hdoc is not None:
        _reject_unknown(hdoc, _HIER_KEYS, "hierarchy")
        levels = int(hdoc.get("levels", 5))
        if levels < 1:
            raise ConfigError("hierarchy.levels: must be positive")
        center = hdoc.get("center", [0.0] * grid.dim)
        try:
            hierarchy = BallHierarchy(
                grid=grid,
                center=np.asarray(center, dtype=np.float64),
                base_radius=float(hdoc.get("base_radius", 0.05)),
                level_min=0,
                level_max=levels - 1,
            )
        except ValueError as e:
            raise ConfigError(f"hierarchy: {e}") from None

    idoc = doc.get("initial", {"kind": "winding", "degree": 1, "phase_amp": 0.3})
    _reject_unknown(idoc, _INITIAL_KEYS, "initial")
    kind = idoc.get("kind", "winding")
    if kind not in ("winding", "constant", "file", "random"):
        raise ConfigError(f"initial.kind: unknown kind {kind!r}")
    if kind == "winding" and grid.dim != 1:
        raise ConfigError("initial.kind: winding initial data needs dim = 1")

    probes = doc.get("probes", list(PROBE_NAMES))
    if not isinstance(probes, (list, tuple)):
        raise ConfigError("probes: must be a list of probe names")
    for name in probes:
        if name not in PROBE_NAMES:
            raise ConfigError(f"probes: unknown probe {name!r}; choose from {PROBE_NAMES}")

    pdoc = doc.get("probe_params", {})
    if not isinstance(pdoc, dict):
        raise ConfigError("probe_params: must be an object keyed by probe name")
    for name, kwargs in pdoc.items():
        if name not in PROBE_NAMES:
            raise ConfigError(f"probe_params: unknown probe {name!r}")
        if not isinstance(kwargs, dict):
            raise ConfigError(f"probe_params.{name}: must be an object")

    return RunConfig(
        grid=grid,
        params=params,
        solver=solver,
        hierarchy=hierarchy,
        initial=dict(idoc),
        probes=tuple(probes),
        probe_params={k: dict(v) for k, v in pdoc.items()},
        t=t,
        seed=int(doc.get("seed", 0)),
        out_dir=str(doc.get("out_dir", "runs")),
        raw=canonical_config(doc),
    )


def load_config(path) -> RunConfig:
    """Parse and validate a JSON config file. Parse errors carry the line
    and column; schema errors name the offending key."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_config(doc)


def canonical_config(doc: dict) -> dict:
    """Round-trip through canonical JSON so key order cannot leak into
    hashes or manifests."""
    return json.loads(json.dumps(doc, sort_keys=True))


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply --set key=value pairs (dotted keys) onto a config dict.
    Values parse as JSON when possible, else stay strings. The result
    must be re-validated through parse_config."""
    out = json.loads(json.dumps(doc))
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = parsed
    return out


@dataclass
class RunManifest:
    config_hash: str
    artifact_version: str
    started: str
    finished: str
    outputs: list

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# field serialization
# ---------------------------------------------------------------------------


class FieldFormatError(ValueError):
    """Structural problem in a field file (bad header, wrong length)."""


class FieldDigestError(ValueError):
    """The sample block does not match its recorded digest."""


def write_field(path, f, meta: dict | None = None) -> None:
    """Header line (JSON) + raw little-endian float64 sample block."""
    if isinstance(f, ScalarField):
        components = 0  # marks a scalar; vector fields store N >= 1
        samples = f.samples
        unit = False
    elif isinstance(f, VectorField):
        components = f.components
        samples = f.samples
        unit = f.unit_constrained
    else:
        raise TypeError(f"expected a field, got {type(f).__name__}")
    block = np.ascontiguousarray(samples, dtype="<f8").tobytes()
    header = {
        "schema_version": SCHEMA_VERSION,
        "dim": f.grid.dim,
        "points_per_axis": f.grid.points_per_axis,
        "box_length": f.grid.box_length,
        "components": components,
        "unit_constrained": unit,
        "digest": hashlib.sha256(block).hexdigest(),
    }
    if meta:
        header["meta"] = meta
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(block)


def read_field(path):
    """Inverse of write_field; digest and shape are both verified."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        block = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as e:
        raise FieldFormatError(f"{path}: bad header: {e.msg}") from None
    for key in ("dim", "points_per_axis", "box_length", "components", "digest"):
        if key not in header:
            raise FieldFormatError(f"{path}: header missing {key!r}")
    grid = make_grid(header["dim"], header["points_per_axis"], header["box_length"])
    components = int(header["components"])
    expect = grid.n_sites * max(components, 1) * 8
    if len(block) != expect:
        raise FieldFormatError(
            f"{path}: sample block holds {len(block)} bytes, header implies {expect}"
        )
    if hashlib.sha256(block).hexdigest() != header["digest"]:
        raise FieldDigestError(f"{path}: sample block digest mismatch")
    samples = np.frombuffer(block, dtype="<f8").astype(np.float64)
    if components == 0:
        return ScalarField(grid=grid, samples=samples)
    return VectorField(
        grid=grid,
        components=components,
        samples=samples.reshape(grid.n_sites, components),
        unit_constrained=bool(header.get("unit_constrained", False)),
    )


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

FMT = "%.17g"  # full float64 round-trip precision


def _csv_line(values) -> str:
    out = []
    for v in values:
        out.append(FMT % v if isinstance(v, float) else str(v))
    return ",".join(out) + "\n"


def emit_solve_report(report, out_dir, tag: str) -> list:
    """SolveReport -> JSON summary + energy-trace CSV. Returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "iterations": report.iterations,
        "final_grad_norm": report.final_grad_norm,
        "final_el_residual_max": report.final_el_residual_max,
        "converged": report.converged,
        "stop_reason": report.stop_reason,
    }
    jpath = out_dir / f"solve_{tag}.json"
    jpath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    cpath = out_dir / f"trace_{tag}.csv"
    with open(cpath, "w") as fh:
        fh.write("iteration,energy,step,grad_norm\n")
        for i, e in enumerate(report.energy_trace):
            step = report.step_trace[i - 1] if 0 < i <= len(report.step_trace) else 0.0
            gn = report.grad_trace[i] if i < len(report.grad_trace) else float("nan")
            fh.write(_csv_line((i, float(e), float(step), float(gn))))
    return [jpath, cpath]


def emit_decay_table(table: DecayTable, out_dir, tag: str) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cpath = out_dir / f"decay_{tag}.csv"
    with open(cpath, "w") as fh:
        fh.write("level,radius,energy\n")
        for lev, r, e in table.rows:
            fh.write(_csv_line((lev, float(r), float(e))))
    jpath = out_dir / f"decay_{tag}.json"
    jpath.write_text(
        json.dumps(
            {"theta": table.theta, "fit_residual": table.fit_residual},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return [cpath, jpath]


def emit_probe_report(report: ProbeReport, out_dir, tag: str) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cpath = out_dir / f"probe_{report.name}_{tag}.csv"
    with open(cpath, "w") as fh:
        fh.write("sample,lhs,rhs,ratio\n")
        for sample, lhs, rhs, ratio in report.rows:
            fh.write(_csv_line((sample, float(lhs), float(rhs), float(ratio))))
    jpath = out_dir / f"probe_{report.name}_{tag}.json"
    jpath.write_text(
        json.dumps(
            {
                "probe": report.name,
                "sample_count": report.sample_count,
                "worst_ratio": report.worst_ratio,
                "frozen_C": report.frozen_c,
                "pass": report.passed,
                "seed": report.seed,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return [cpath, jpath]


def emit_el_table(report, out_dir, tag: str) -> list:
    """ElResidualReport -> CSV of (test function, generator, residual)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cpath = out_dir / f"el_residuals_{tag}.csv"
    with open(cpath, "w") as fh:
        fh.write("test_function,generator,residual\n")
        for phi_label, om_label, val in report.entries:
            fh.write(_csv_line((phi_label, om_label, float(val))))
    return [cpath]
