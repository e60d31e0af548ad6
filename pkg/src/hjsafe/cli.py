"""Command-line front end.

Scenario files are TOML with fixed sections; every physical key carries
its unit as a suffix. Subcommands: solve, query, slice, contour,
compare, and the two packaged demonstrations. All outputs are
deterministic: the same inputs produce the same bytes, except for the
wall-time entry of the run manifest, which is excluded from the content
hash.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

from .concepts import Scenario, SafetyConceptSpec, build, chart_state
from .dynamics import (
    AgentBounds,
    Braking2D,
    CarParams,
    ControlBounds,
    GameConfig,
)
from .errors import ConfigError, NumericalError, UsageError
from .geometry import BodyDims
from .grid import GridSpec, ScalarField, interpolate
from .runtime import (
    optimal_pair,
    safety_preserving_set,
    value_at,
)
from .runtime import _bracket, _clamped_time  # shared time interpolation
from .solver import (
    SolveConfig,
    ValueFunction,
    content_hash,
    dilate_mask,
    solve_reach_avoid,
    solve_tube,
)

_NAMES_5D = ("dx_m", "dy_m", "dtheta_rad", "va_mps", "vb_mps")
_NAMES_2D = ("gap_m", "v_mps")


# ---------------------------------------------------------------------------
# TOML output.  The stdlib parses TOML but does not write it; scenarios
# only need scalars, arrays, and one level of sub-tables.


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise UsageError(f"cannot serialize {type(v).__name__} to TOML")


def scenario_to_toml(norm: dict) -> str:
    lines: list[str] = []

    def emit(prefix: str, table: dict):
        subs = [(k, v) for k, v in table.items() if isinstance(v, dict)]
        plain = [(k, v) for k, v in table.items() if not isinstance(v, dict)]
        if plain or not subs:
            lines.append(f"[{prefix}]")
            for k, v in plain:
                lines.append(f"{k} = {_toml_scalar(v)}")
            lines.append("")
        for k, v in subs:
            emit(f"{prefix}.{k}", v)

    for section, table in norm.items():
        emit(section, table)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Scenario schema.  Unknown keys are rejected with their dotted path;
# values are normalized (defaults filled, numbers coerced) so that
# parse -> serialize -> parse is the identity on the normalized form.


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _check_unknown(table: dict, allowed, path: str):
    for key in table:
        if key not in allowed:
            _fail(f"{path}.{key}", "unknown key")


def _float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {type(v).__name__}")
    return float(v)


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected an integer, got {type(v).__name__}")
    return int(v)


def _str(v, path, choices=None):
    if not isinstance(v, str):
        _fail(path, f"expected a string, got {type(v).__name__}")
    if choices and v not in choices:
        _fail(path, f"must be one of {sorted(choices)}, got {v!r}")
    return v


def _list(v, path, item, length=None):
    if not isinstance(v, list):
        _fail(path, f"expected an array, got {type(v).__name__}")
    if length is not None and len(v) != length:
        _fail(path, f"expected {length} entries, got {len(v)}")
    return [item(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _pair(v, path):
    return _list(v, path, _float, length=2)


def _bool(v, path):
    if not isinstance(v, bool):
        _fail(path, f"expected a boolean, got {type(v).__name__}")
    return v


def _norm_grid(raw: dict, ndim_want: int) -> dict:
    _check_unknown(raw, ("lo", "hi", "counts", "periodic", "names"), "grid")
    for key in ("lo", "hi", "counts", "periodic"):
        if key not in raw:
            _fail(f"grid.{key}", "missing required key")
    lo = _list(raw["lo"], "grid.lo", _float)
    ndim = len(lo)
    if ndim != ndim_want:
        _fail("grid.lo", f"this concept needs a {ndim_want}-D grid, got {ndim}-D")
    hi = _list(raw["hi"], "grid.hi", _float, length=ndim)
    counts = _list(raw["counts"], "grid.counts", _int, length=ndim)
    periodic = _list(raw["periodic"], "grid.periodic", _bool, length=ndim)
    if "names" in raw:
        names = _list(raw["names"], "grid.names", _str, length=ndim)
    else:
        names = list(_NAMES_5D if ndim == 5 else _NAMES_2D)
    for i, c in enumerate(counts):
        if c < 3:
            _fail(f"grid.counts[{i}]", f"dimension {names[i]!r} needs at least 3 nodes, got {c}")
    for i in range(ndim):
        if not lo[i] < hi[i]:
            _fail(f"grid.lo[{i}]", f"dimension {names[i]!r} has empty range")
    return {"lo": lo, "hi": hi, "counts": counts, "periodic": periodic, "names": names}


_CAR_DEFAULTS = {
    "wheelbase_m": 2.7,
    "accel_mps2": [-4.0, 3.0],
    "steer_rad": [-0.3, 0.3],
    "v_range_mps": [0.0, 15.0],
    "body_length_m": 4.5,
    "body_width_m": 1.8,
}


def _norm_car(raw: dict, path: str) -> dict:
    _check_unknown(raw, _CAR_DEFAULTS, path)
    out = {}
    for key, default in _CAR_DEFAULTS.items():
        if key in raw:
            v = raw[key]
            out[key] = (
                _pair(v, f"{path}.{key}") if isinstance(default, list)
                else _float(v, f"{path}.{key}")
            )
        else:
            out[key] = list(default) if isinstance(default, list) else default
    return out


def _norm_bounds(raw: dict, cars: dict) -> dict:
    _check_unknown(raw, ("scaling", "gamma", "a", "b"), "bounds")
    out = {
        "scaling": _str(raw.get("scaling", "none"), "bounds.scaling",
                        choices=("none", "state")),
        "gamma": _float(raw.get("gamma", 0.2), "bounds.gamma"),
    }
    for agent in ("a", "b"):
        sub = raw.get(agent, {})
        path = f"bounds.{agent}"
        if not isinstance(sub, dict):
            _fail(path, "expected a table")
        _check_unknown(sub, ("accel_mps2", "steer_rad"), path)
        out[agent] = {
            "accel_mps2": (
                _pair(sub["accel_mps2"], f"{path}.accel_mps2")
                if "accel_mps2" in sub else list(cars[agent]["accel_mps2"])
            ),
            "steer_rad": (
                _pair(sub["steer_rad"], f"{path}.steer_rad")
                if "steer_rad" in sub else list(cars[agent]["steer_rad"])
            ),
        }
    return out


_CONCEPT_KEYS = {
    "braking": {"accel_max_mps2": 4.0},
    "worst_case": {},
    "frs": {},
    "sff": {"sff_brake_mps2": [-8.0, -2.0], "sff_steer_frac": 0.25},
    "rss": {
        "rss_decel_a_mps2": -4.0,
        "rss_decel_b_mps2": -4.0,
        "rss_lat_decel_mps2": 2.0,
        "rss_lat_vmax_mps": 5.0,
    },
    "contingency": {
        "contingency_v_stop_mps": 0.5,
        "contingency_b_model": "maintain",
        "contingency_b_decel_mps2": -4.0,
    },
    "constant_motion": {"const_steer_a_rad": 0.0, "const_steer_b_rad": 0.0},
    "custom": {"role_a": "max", "role_b": "min"},
}


def _norm_concept(raw: dict) -> dict:
    if "kind" not in raw:
        _fail("concept.kind", "missing required key")
    kind = _str(raw["kind"], "concept.kind", choices=_CONCEPT_KEYS)
    defaults = _CONCEPT_KEYS[kind]
    _check_unknown(raw, {"kind", *defaults}, "concept")
    out = {"kind": kind}
    for key, default in defaults.items():
        path = f"concept.{key}"
        if key in raw:
            v = raw[key]
            if isinstance(default, str):
                out[key] = _str(v, path)
            elif isinstance(default, list):
                out[key] = _pair(v, path)
            else:
                out[key] = _float(v, path)
        else:
            out[key] = list(default) if isinstance(default, list) else default
    if kind == "custom":
        for key in ("role_a", "role_b"):
            out[key] = _str(out[key], f"concept.{key}", choices=("max", "min"))
    if kind == "contingency":
        out["contingency_b_model"] = _str(
            out["contingency_b_model"], "concept.contingency_b_model",
            choices=("maintain", "brake", "adversarial"),
        )
    return out


def _norm_solve(raw: dict) -> dict:
    _check_unknown(
        raw, ("horizon_s", "cfl", "integrator", "convergence_tol"), "solve"
    )
    if "horizon_s" not in raw:
        _fail("solve.horizon_s", "missing required key")
    out = {
        "horizon_s": _float(raw["horizon_s"], "solve.horizon_s"),
        "cfl": _float(raw.get("cfl", 0.5), "solve.cfl"),
        "integrator": _str(raw.get("integrator", "rk2"), "solve.integrator",
                           choices=("euler", "rk2")),
    }
    if "convergence_tol" in raw:
        out["convergence_tol"] = _float(raw["convergence_tol"], "solve.convergence_tol")
    return out


def normalize_scenario(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a table of sections")
    _check_unknown(
        raw, ("grid", "cars", "bounds", "concept", "solve", "output"), "scenario"
    )
    for section in ("grid", "concept", "solve"):
        if section not in raw:
            _fail(section, "missing required section")
    concept = _norm_concept(raw["concept"])
    kind = concept["kind"]

    norm: dict = {}
    norm["grid"] = _norm_grid(raw["grid"], 2 if kind == "braking" else 5)
    if kind == "braking":
        for section in ("cars", "bounds"):
            if section in raw:
                _fail(section, "not applicable to the braking concept")
    else:
        cars_raw = raw.get("cars", {})
        _check_unknown(cars_raw, ("a", "b"), "cars")
        cars = {
            agent: _norm_car(cars_raw.get(agent, {}), f"cars.{agent}")
            for agent in ("a", "b")
        }
        norm["cars"] = cars
        if "bounds" in raw:
            if kind in ("sff", "constant_motion", "rss"):
                _fail("bounds", f"the {kind} concept derives its own control sets")
            norm["bounds"] = _norm_bounds(raw["bounds"], cars)
    norm["concept"] = concept
    norm["solve"] = _norm_solve(raw["solve"])
    out_raw = raw.get("output", {})
    _check_unknown(out_raw, ("snapshot_stride",), "output")
    stride = _int(out_raw.get("snapshot_stride", 0), "output.snapshot_stride")
    norm["output"] = {"snapshot_stride": stride}
    return norm


def parse_scenario(text: str) -> dict:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"scenario parse error: {exc}") from exc
    return normalize_scenario(raw)


def load_scenario(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"scenario file {path} not found")
    return parse_scenario(p.read_text())


# ---------------------------------------------------------------------------
# Scenario instantiation.


@dataclass
class BuiltScenario:
    norm: dict
    grid: GridSpec
    config: SolveConfig
    scenario: Scenario | None  # two-car kinds
    spec: SafetyConceptSpec | None
    braking_model: Braking2D | None  # braking kind
    braking_ell: ScalarField | None


def _car_params(c: dict) -> CarParams:
    return CarParams(
        wheelbase=c["wheelbase_m"],
        accel=tuple(c["accel_mps2"]),
        steer=tuple(c["steer_rad"]),
        velocity=tuple(c["v_range_mps"]),
    )


def instantiate(norm: dict) -> BuiltScenario:
    g = norm["grid"]
    grid = GridSpec(
        tuple(g["lo"]), tuple(g["hi"]), tuple(g["counts"]),
        tuple(g["periodic"]), names=tuple(g["names"]),
    )
    s = norm["solve"]
    config = SolveConfig(
        horizon=s["horizon_s"],
        cfl=s["cfl"],
        integrator=s["integrator"],
        convergence_tol=s.get("convergence_tol"),
        snapshot_stride=norm["output"]["snapshot_stride"],
    )
    c = norm["concept"]
    kind = c["kind"]
    if kind == "braking":
        model = Braking2D(grid, c["accel_max_mps2"])
        d = grid.axis(0)[:, None]
        ell = ScalarField(grid, np.broadcast_to(d, grid.shape).ravel())
        return BuiltScenario(norm, grid, config, None, None, model, ell)

    cars = norm["cars"]
    bounds = None
    if "bounds" in norm:
        b = norm["bounds"]
        bounds = ControlBounds(
            AgentBounds(tuple(b["a"]["accel_mps2"]), tuple(b["a"]["steer_rad"]),
                        b["scaling"], b["gamma"]),
            AgentBounds(tuple(b["b"]["accel_mps2"]), tuple(b["b"]["steer_rad"]),
                        b["scaling"], b["gamma"]),
        )
    scenario = Scenario(
        grid=grid,
        params_a=_car_params(cars["a"]),
        params_b=_car_params(cars["b"]),
        bounds=bounds,
        dims_a=BodyDims(cars["a"]["body_length_m"], cars["a"]["body_width_m"]),
        dims_b=BodyDims(cars["b"]["body_length_m"], cars["b"]["body_width_m"]),
    )
    kw = {}
    if kind == "sff":
        kw = {"sff_brake": tuple(c["sff_brake_mps2"]),
              "sff_steer_frac": c["sff_steer_frac"]}
    elif kind == "rss":
        kw = {"rss_decel_a": c["rss_decel_a_mps2"],
              "rss_decel_b": c["rss_decel_b_mps2"],
              "rss_lat_decel": c["rss_lat_decel_mps2"],
              "rss_lat_vmax": c["rss_lat_vmax_mps"]}
    elif kind == "contingency":
        kw = {"contingency_v_stop": c["contingency_v_stop_mps"],
              "contingency_b_model": c["contingency_b_model"],
              "contingency_b_decel": c["contingency_b_decel_mps2"]}
    elif kind == "constant_motion":
        kw = {"const_steer_a": c["const_steer_a_rad"],
              "const_steer_b": c["const_steer_b_rad"]}
    elif kind == "custom":
        kw = {"game": GameConfig(c["role_a"], c["role_b"])}
    spec = SafetyConceptSpec(kind=kind, **kw)
    return BuiltScenario(norm, grid, config, scenario, spec, None, None)


# ---------------------------------------------------------------------------
# solve


def run_solve(norm: dict, out_dir) -> dict:
    built = instantiate(norm)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    job_records = []
    if built.braking_model is not None:
        vf = solve_tube(built.braking_ell, built.braking_model, built.config)
        vf.dump(out)
        job_records.append({
            "name": "main", "chart": "identity", "path": ".",
            "converged": vf.converged, "snapshots": len(vf.times),
        })
        combine, below_zero, long_clear = "single", True, 0.0
    else:
        cb = build(built.spec, built.scenario, built.config)
        single = len(cb.jobs) == 1
        for job in cb.jobs:
            if job.config.mode == "reach_avoid":
                vf = solve_reach_avoid(job.ell, job.avoid, job.model, job.config)
            else:
                vf = solve_tube(job.ell, job.model, job.config)
            job_dir = out if single else out / job.name
            vf.dump(job_dir)
            job_records.append({
                "name": job.name, "chart": job.chart,
                "path": "." if single else job.name,
                "converged": vf.converged, "snapshots": len(vf.times),
            })
        combine = cb.combine
        below_zero = cb.unsafe_below_zero
        long_clear = cb.long_clearance
    wall = time.perf_counter() - t0

    digest = hashlib.sha256()
    for rec in job_records:
        digest.update(rec["name"].encode())
        digest.update(content_hash(out / rec["path"]).encode())
    manifest = {
        "scenario": norm,
        "concept": {
            "kind": norm["concept"]["kind"],
            "combine": combine,
            "unsafe_below_zero": below_zero,
            "long_clearance_m": long_clear,
        },
        "scheme": {
            "integrator": norm["solve"]["integrator"],
            "cfl": norm["solve"]["cfl"],
        },
        "jobs": job_records,
        "wall_time_s": wall,
        "content_hash": digest.hexdigest(),
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# query


def _load_run(dump_dir) -> dict | None:
    p = Path(dump_dir) / "run.json"
    if not p.is_file():
        return None
    return json.loads(p.read_text())


def _control_record(u) -> dict:
    return {"accel_mps2": float(u[0]), "steer_rad": float(u[1])}


def run_query(dump_dir, state, t, u_b=None) -> dict:
    run = _load_run(dump_dir)
    z = np.asarray(state, dtype=np.float64)
    record: dict = {"state": [float(x) for x in z], "time_s": float(t)}

    if run is not None and len(run["jobs"]) > 1:
        if u_b is not None:
            raise UsageError(
                "preserving sets need a full-state dump, not a charted one"
            )
        if z.shape != (5,):
            raise UsageError("charted dumps take the 5-component relative state")
        clear = run["concept"]["long_clearance_m"]
        charts = {}
        unsafe = True
        worst = -math.inf
        for rec in run["jobs"]:
            vf = ValueFunction.load(Path(dump_dir) / rec["path"], mmap=True)
            zc = chart_state(rec["chart"], z, long_clearance=clear)
            q = value_at(vf, zc, t)
            charts[rec["name"]] = {
                "state": [float(x) for x in zc],
                "value": q.value,
                "unsafe": q.unsafe,
                "oob": q.oob,
            }
            unsafe = unsafe and q.unsafe
            worst = max(worst, q.value)
        record.update(
            value=worst, unsafe=unsafe, oob=any(c["oob"] for c in charts.values()),
            u_a_star=None, u_b_star=None, preserving=None, charts=charts,
        )
        return record

    vf = ValueFunction.load(dump_dir, mmap=True)
    q = value_at(vf, z, t)
    below_zero = True if run is None else run["concept"]["unsafe_below_zero"]
    record.update(
        value=q.value,
        unsafe=q.unsafe if below_zero else not q.unsafe,
        oob=q.oob,
        u_a_star=None, u_b_star=None, preserving=None, charts=None,
    )

    two_car = run is not None and vf.grid.ndim == 5 \
        and run["concept"]["kind"] != "braking"
    if two_car:
        built = instantiate(run["scenario"])
        cb = build(built.spec, built.scenario, built.config)
        model = cb.jobs[0].model
        u_a, u_b_star = optimal_pair(vf, z, t, model.bounds, model.game, model.params)
        record["u_a_star"] = _control_record(u_a)
        record["u_b_star"] = _control_record(u_b_star)
        if u_b is not None:
            if not below_zero:
                raise UsageError(
                    "preserving sets apply to unsafe-below-zero values only"
                )
            s = safety_preserving_set(
                vf, z, t, u_b, model.bounds, model.game, model.params
            )
            keep = ~np.isnan(s.accel_lo)
            record["preserving"] = {
                "u_b": _control_record(u_b),
                "empty": bool(s.empty),
                "steer_rad": [float(x) for x in s.steer[keep]],
                "accel_lo_mps2": [float(x) for x in s.accel_lo[keep]],
                "accel_hi_mps2": [float(x) for x in s.accel_hi[keep]],
            }
    elif u_b is not None:
        raise UsageError("this dump has no two-car game attached; --ub unsupported")
    return record


def _print_query(record: dict, as_json: bool):
    if as_json:
        print(json.dumps(record, indent=2, sort_keys=True))
        return
    print(f"value   = {record['value']!r}")
    print(f"unsafe  = {record['unsafe']}")
    print(f"oob     = {record['oob']}")
    if record["u_a_star"] is not None:
        ua, ub = record["u_a_star"], record["u_b_star"]
        print(f"u_a*    = accel {ua['accel_mps2']!r} m/s^2, steer {ua['steer_rad']!r} rad")
        print(f"u_b*    = accel {ub['accel_mps2']!r} m/s^2, steer {ub['steer_rad']!r} rad")
    p = record.get("preserving")
    if p is not None:
        if p["empty"]:
            print("preserving set: empty")
        else:
            print(f"preserving set: {len(p['steer_rad'])} steering slabs")
            for d, lo, hi in zip(p["steer_rad"], p["accel_lo_mps2"], p["accel_hi_mps2"]):
                print(f"  steer {d:+.4f} rad: accel [{lo:+.4f}, {hi:+.4f}] m/s^2")
    charts = record.get("charts")
    if charts:
        for name, c in charts.items():
            print(f"chart {name}: value {c['value']!r}, unsafe {c['unsafe']}")


# ---------------------------------------------------------------------------
# slice / contour


def _blended_values(vf: ValueFunction, t: float) -> np.ndarray:
    tc = _clamped_time(vf, t)
    pairs = _bracket(vf, tc)
    out = np.zeros(vf.grid.num_points)
    for idx, w in pairs:
        out += w * vf.fields[idx].values
    return out


def _axis_label(grid: GridSpec, i: int) -> str:
    return grid.names[i] if grid.names else f"dim{i}"


def _resolve_axis(grid: GridSpec, token: str) -> int:
    if grid.names and token in grid.names:
        return grid.name_index(token)
    try:
        idx = int(token)
    except ValueError:
        raise UsageError(f"unknown axis {token!r}") from None
    if not 0 <= idx < grid.ndim:
        raise UsageError(f"axis index {idx} out of range for {grid.ndim}-D grid")
    return idx


def extract_slice(vf: ValueFunction, t: float, fixes: dict[str, float]):
    """(x axis, y axis, 2-D values, free dim indices) of a planar cut."""
    grid = vf.grid
    fixed: dict[int, float] = {}
    for token, value in fixes.items():
        idx = _resolve_axis(grid, token)
        if idx in fixed:
            raise UsageError(f"axis {token!r} fixed twice")
        if not grid.lo[idx] <= value <= grid.hi[idx]:
            raise UsageError(
                f"fixed value {value} outside [{grid.lo[idx]}, {grid.hi[idx]}]"
                f" for axis {token!r}"
            )
        fixed[idx] = value
    free = [i for i in range(grid.ndim) if i not in fixed]
    if len(free) != 2:
        raise UsageError(
            f"need exactly 2 free dims, have {len(free)}: fix {grid.ndim - 2}"
            f" of {grid.ndim} axes"
        )
    ix, iy = free
    xs, ys = grid.axis(ix), grid.axis(iy)
    pts = np.empty((xs.size * ys.size, grid.ndim))
    for idx, value in fixed.items():
        pts[:, idx] = value
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts[:, ix] = gx.ravel()
    pts[:, iy] = gy.ravel()
    field = ScalarField(grid, _blended_values(vf, t), copy=False, check=False)
    vals = interpolate(field, pts).reshape(xs.size, ys.size)
    return xs, ys, vals, (ix, iy)


def write_slice_csv(path, xs, ys, vals, xname, yname):
    lines = [f"{xname},{yname},value"]
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            lines.append(f"{float(x)!r},{float(y)!r},{float(vals[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# marching squares


def _edge_points(xs, ys, diff):
    """Level crossings on all grid edges, keyed by (kind, i, j)."""
    pos = diff >= 0.0
    points = {}
    nx, ny = diff.shape
    for i in range(nx - 1):
        for j in range(ny):
            if pos[i, j] != pos[i + 1, j]:
                t = diff[i, j] / (diff[i, j] - diff[i + 1, j])
                points[("h", i, j)] = (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
    for i in range(nx):
        for j in range(ny - 1):
            if pos[i, j] != pos[i, j + 1]:
                t = diff[i, j] / (diff[i, j] - diff[i, j + 1])
                points[("v", i, j)] = (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))
    return pos, points


def _cell_segments(pos, diff):
    """Per-cell edge pairs; ambiguous saddles resolved by the cell average."""
    segments = []
    nx, ny = diff.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            c0, c1 = pos[i, j], pos[i + 1, j]
            c2, c3 = pos[i + 1, j + 1], pos[i, j + 1]
            case = c0 | (c1 << 1) | (c2 << 2) | (c3 << 3)
            if case in (0, 15):
                continue
            s = ("h", i, j)
            e = ("v", i + 1, j)
            n = ("h", i, j + 1)
            w = ("v", i, j)
            table = {
                1: [(w, s)], 2: [(s, e)], 3: [(w, e)], 4: [(e, n)],
                6: [(s, n)], 7: [(w, n)], 8: [(w, n)], 9: [(s, n)],
                11: [(e, n)], 12: [(w, e)], 13: [(s, e)], 14: [(w, s)],
            }
            if case == 5:
                avg = (diff[i, j] + diff[i + 1, j] + diff[i + 1, j + 1]
                       + diff[i, j + 1]) / 4.0
                segments += [(s, e), (n, w)] if avg >= 0 else [(w, s), (e, n)]
            elif case == 10:
                avg = (diff[i, j] + diff[i + 1, j] + diff[i + 1, j + 1]
                       + diff[i, j + 1]) / 4.0
                segments += [(w, s), (e, n)] if avg >= 0 else [(s, e), (n, w)]
            else:
                segments += table[case]
    return segments


def marching_squares(xs, ys, values, level=0.0):
    """Zero-level polylines of a 2-D nodal field at the given level.

    Crossing positions are linearly interpolated once per grid edge, so
    adjacent cells stitch bit-exactly. Returns a list of (k, 2) vertex
    arrays; closed loops repeat their first vertex at the end.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(xs), len(ys)):
        raise UsageError("values must be shaped (len(xs), len(ys))")
    diff = values - level
    pos, points = _edge_points(np.asarray(xs), np.asarray(ys), diff)
    segments = _cell_segments(pos, diff)

    adjacency: dict = {}
    for a, b in segments:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)

    unused = {tuple(sorted((a, b))) for a, b in segments}

    def walk(start):
        chain = [start]
        node = start
        while True:
            step = None
            for nbr in adjacency[node]:
                key = tuple(sorted((node, nbr)))
                if key in unused:
                    step = nbr
                    unused.discard(key)
                    break
            if step is None:
                return chain
            chain.append(step)
            node = step

    polylines = []
    open_ends = sorted(k for k, nbrs in adjacency.items() if len(nbrs) == 1)
    for key in open_ends:
        if any(tuple(sorted((key, n))) in unused for n in adjacency[key]):
            polylines.append(walk(key))
    for key in sorted(adjacency):
        if any(tuple(sorted((key, n))) in unused for n in adjacency[key]):
            polylines.append(walk(key))
    return [np.array([points[k] for k in chain]) for chain in polylines]


def write_contour_csv(path, polylines, xname, yname):
    lines = [f"polyline,vertex,{xname},{yname}"]
    for pid, poly in enumerate(polylines):
        for k, (x, y) in enumerate(poly):
            lines.append(f"{pid},{k},{float(x)!r},{float(y)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# compare


def _unsafe_mask(dump_dir, t: float):
    vf = ValueFunction.load(dump_dir, mmap=True)
    run = _load_run(dump_dir)
    below_zero = True if run is None else run["concept"]["unsafe_below_zero"]
    vals = _blended_values(vf, t).reshape(vf.grid.shape)
    mask = vals < 0.0 if below_zero else vals >= 0.0
    return vf.grid, mask


def run_compare(dir_a, dir_b, t: float) -> dict:
    grid_a, mask_a = _unsafe_mask(dir_a, t)
    grid_b, mask_b = _unsafe_mask(dir_b, t)
    if grid_a != grid_b:
        raise UsageError("compared dumps live on different grids")
    band_a = dilate_mask(mask_a, grid_a.periodic)
    band_b = dilate_mask(mask_b, grid_a.periodic)
    return {
        "cells_a": int(mask_a.sum()),
        "cells_b": int(mask_b.sum()),
        "a_minus_b": int((mask_a & ~mask_b).sum()),
        "b_minus_a": int((mask_b & ~mask_a).sum()),
        "a_within_b_band": bool(not (mask_a & ~band_b).any()),
        "b_within_a_band": bool(not (mask_b & ~band_a).any()),
    }


# ---------------------------------------------------------------------------
# demos


def _demo_base(grid_counts, horizon) -> dict:
    return {
        "grid": {
            "lo": [-30.0, -12.0, -math.pi, 0.0, 0.0],
            "hi": [30.0, 12.0, math.pi, 15.0, 15.0],
            "counts": list(grid_counts),
            "periodic": [False, False, True, False, False],
        },
        "concept": {"kind": "worst_case"},
        "solve": {"horizon_s": horizon, "convergence_tol": 1e-6},
        "output": {"snapshot_stride": 10 ** 6},
    }


def demo_scenarios(name: str, grid_counts=(61, 49, 25, 11, 11), horizon=3.0):
    """Normalized scenario set for one packaged demonstration."""
    base = _demo_base(grid_counts, horizon)
    if name == "fig2a":
        equal = normalize_scenario(base)
        reduced = json.loads(json.dumps(base))
        reduced["bounds"] = {
            "b": {"accel_mps2": [-2.0, 1.5], "steer_rad": [-0.15, 0.15]}
        }
        b_reduced = normalize_scenario(reduced)
        asym = json.loads(json.dumps(reduced))
        asym["cars"] = {"a": {"v_range_mps": [0.0, 10.0]}}
        return {
            "equal": equal,
            "b_reduced": b_reduced,
            "asym": normalize_scenario(asym),
        }
    if name == "fig2b":
        fixed = normalize_scenario(base)
        scaled_raw = json.loads(json.dumps(base))
        scaled_raw["bounds"] = {"scaling": "state", "gamma": 0.2}
        return {"fixed": fixed, "scaled": normalize_scenario(scaled_raw)}
    raise UsageError(f"unknown demo {name!r}; choose fig2a or fig2b")


_DEMO_PLANE = {"dtheta_rad": 0.0, "va_mps": 7.5, "vb_mps": 7.5}


def run_demo(name: str, out_dir, grid_counts=(61, 49, 25, 11, 11), horizon=3.0) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = demo_scenarios(name, grid_counts, horizon)
    t0 = time.perf_counter()
    for label, norm in scenarios.items():
        (out / f"{label}.toml").write_text(scenario_to_toml(norm) + "\n")
        print(f"[{name}] solving {label} ...", file=sys.stderr)
        manifest = run_solve(norm, out / label)
        print(
            f"[{name}] {label} done in {manifest['wall_time_s']:.1f} s",
            file=sys.stderr,
        )

    t = -horizon
    labels = list(scenarios)
    baseline = labels[0]
    compares = {}
    for other in labels[1:]:
        compares[f"{other}_vs_{baseline}"] = run_compare(
            out / other, out / baseline, t
        )

    contours = {}
    (out / "contours").mkdir(exist_ok=True)
    for label in labels:
        vf = ValueFunction.load(out / label, mmap=True)
        xs, ys, vals, (ix, iy) = extract_slice(vf, t, dict(_DEMO_PLANE))
        polys = marching_squares(xs, ys, vals, level=0.0)
        csv_path = out / "contours" / f"{label}.csv"
        write_contour_csv(
            csv_path, polys, _axis_label(vf.grid, ix), _axis_label(vf.grid, iy)
        )
        contours[label] = str(csv_path.relative_to(out))

    report = {
        "demo": name,
        "time_s": t,
        "fixed_plane": _DEMO_PLANE,
        "compares": compares,
        "contours": contours,
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _parse_fixes(tokens) -> dict[str, float]:
    fixes = {}
    for token in tokens or ():
        if "=" not in token:
            raise UsageError(f"--fix expects axis=value, got {token!r}")
        key, _, value = token.partition("=")
        try:
            fixes[key] = float(value)
        except ValueError:
            raise UsageError(f"--fix {key}: {value!r} is not a number") from None
    return fixes


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjsafe",
        description="Reachability safety toolkit: solve scenarios, query dumps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a scenario file into a value dump")
    p.add_argument("scenario")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("query", help="point query of a solved dump")
    p.add_argument("dump")
    p.add_argument("--state", nargs="+", type=float, required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--ub", nargs=2, type=float, metavar=("ACCEL", "STEER"))
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("slice", help="export a 2-D plane of values as CSV")
    p.add_argument("dump")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--fix", action="append", metavar="AXIS=VALUE")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("contour", help="export level-set polylines as CSV")
    p.add_argument("dump")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--fix", action="append", metavar="AXIS=VALUE")
    p.add_argument("--level", type=float, default=0.0)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("compare", help="unsafe-set difference report of two dumps")
    p.add_argument("dump_a")
    p.add_argument("dump_b")
    p.add_argument("--time", type=float, required=True)

    p = sub.add_parser("demo", help="run a packaged demonstration pipeline")
    p.add_argument("name", choices=("fig2a", "fig2b"))
    p.add_argument("-o", "--out", required=True)
    return parser


def _dispatch(args) -> int:
    if args.command == "solve":
        norm = load_scenario(args.scenario)
        manifest = run_solve(norm, args.out)
        print(f"content_hash {manifest['content_hash']}")
        print(f"wall_time_s {manifest['wall_time_s']:.3f}")
        return 0
    if args.command == "query":
        record = run_query(args.dump, args.state, args.time,
                           tuple(args.ub) if args.ub else None)
        _print_query(record, args.json)
        return 0
    if args.command == "slice":
        vf = ValueFunction.load(args.dump, mmap=True)
        xs, ys, vals, (ix, iy) = extract_slice(vf, args.time, _parse_fixes(args.fix))
        write_slice_csv(args.out, xs, ys, vals,
                        _axis_label(vf.grid, ix), _axis_label(vf.grid, iy))
        return 0
    if args.command == "contour":
        vf = ValueFunction.load(args.dump, mmap=True)
        xs, ys, vals, (ix, iy) = extract_slice(vf, args.time, _parse_fixes(args.fix))
        polys = marching_squares(xs, ys, vals, level=args.level)
        write_contour_csv(args.out, polys,
                          _axis_label(vf.grid, ix), _axis_label(vf.grid, iy))
        return 0
    if args.command == "compare":
        report = run_compare(args.dump_a, args.dump_b, args.time)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    if args.command == "demo":
        run_demo(args.name, args.out)
        return 0
    raise UsageError(f"unknown command {args.command!r}")


def _apply_thread_env():
    raw = os.environ.get("HJSAFE_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"HJSAFE_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("HJSAFE_THREADS must be at least 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _apply_thread_env()
        return _dispatch(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
