"""Backward level-set integration of the avoidance game.

The value function solves, marching backward from the boundary condition
V(z, 0) = l(z),

    dV/dt + min{0, H(z, grad V)} = 0

where H is the game Hamiltonian.  The min{0, .} freezing makes V the
running minimum of l along optimally-played trajectories, so sub-zero
values mean "collision cannot be avoided within the horizon" and V is
pointwise non-increasing as the horizon grows.

Space is discretized with the Lax-Friedrichs numerical Hamiltonian
(central gradient plus per-node dissipation from the model's speed
bounds), time with explicit Euler or Heun (TVD-RK2) steps under a CFL
bound.  Backward time t in [-T, 0] is marched as forward elapsed
horizon s = |t|.

Reach-avoid problems reuse the same march with an obstacle mask applied
after every substep: V := max(V, -g) pins states inside {g < 0} to
positive values so they can never be labeled reachable-safely.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CflError, NumericalError, UsageError
from .grid import GridSpec, ScalarField, _canonical_json, gradients_shaped

_CFL_SLACK = 1.0 + 1e-9
_AUTO_SNAPSHOTS = 33


@dataclass(frozen=True)
class SolveConfig:
    """Time-integration settings for one solve.

    horizon: backward horizon T in seconds.
    cfl: Courant number in (0, 1]; the step satisfies dt * max(sum_i
        sigma_i/h_i) <= cfl.
    integrator: "rk2" (Heun) or "euler".
    mode: "tube" (frozen avoidance value) or "reach_avoid" (obstacle
        masking; requires an avoid field at solve time).
    convergence_tol: optional; stop early once the max-norm change per
        unit time drops below it, flagging the result converged.
    snapshot_stride: store every k-th step; 0 picks a stride that keeps
        roughly 32 snapshots.
    """

    horizon: float
    cfl: float = 0.5
    integrator: str = "rk2"
    mode: str = "tube"
    convergence_tol: float | None = None
    snapshot_stride: int = 0

    def __post_init__(self):
        if not self.horizon > 0:
            raise UsageError("horizon must be positive")
        if not 0.0 < self.cfl <= 1.0:
            raise UsageError("CFL number must be in (0, 1]")
        if self.integrator not in ("euler", "rk2"):
            raise UsageError(f"unknown integrator {self.integrator!r}")
        if self.mode not in ("tube", "reach_avoid"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.convergence_tol is not None and not self.convergence_tol > 0:
            raise UsageError("convergence tolerance must be positive")
        if self.snapshot_stride < 0:
            raise UsageError("snapshot stride must be non-negative")


class ValueFunction:
    """Stored solve snapshots: times ascending in [-T, 0], one field each.

    In tube mode the final entry (t = 0) is the boundary-condition field
    itself, bit for bit, and values are pointwise non-increasing as |t|
    grows.  ``converged`` marks an early stop at the configured
    tolerance, meaning the earliest stored field is stationary.
    """

    __slots__ = ("grid", "times", "fields", "converged")

    def __init__(self, grid: GridSpec, times, fields, converged: bool = False):
        times = np.asarray(times, dtype=np.float64)
        if times.ndim != 1 or times.size == 0:
            raise UsageError("times must be a non-empty 1-D array")
        if not np.all(np.isfinite(times)):
            raise UsageError("times must be finite")
        if np.any(np.diff(times) <= 0):
            raise UsageError("times must be strictly ascending")
        if times[-1] != 0.0:
            raise UsageError("times must end at 0.0")
        if len(fields) != times.size:
            raise UsageError("one field per stored time required")
        for f in fields:
            if f.grid != grid:
                raise UsageError("all fields must share the grid")
        times.flags.writeable = False
        self.grid = grid
        self.times = times
        self.fields = list(fields)
        self.converged = bool(converged)

    @property
    def horizon(self) -> float:
        return float(-self.times[0])

    def snapshot_index(self, t: float) -> int:
        """Index of the stored time nearest t; range-checked.

        Times earlier than the stored range are allowed only for
        converged solves, where the earliest field is stationary.
        """
        if t > 1e-9:
            raise UsageError(f"time {t} is after the boundary time 0")
        if t < self.times[0] - 1e-9 and not self.converged:
            raise UsageError(
                f"time {t} precedes the stored horizon {self.times[0]}"
            )
        return int(np.argmin(np.abs(self.times - t)))

    def field_at(self, t: float) -> ScalarField:
        return self.fields[self.snapshot_index(t)]

    def dump(self, out_dir) -> None:
        """Write manifest.json plus one bit-exact field file per time."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = [f"V_{i:03d}.field" for i in range(len(self.fields))]
        manifest = {
            "grid": self.grid.to_header(),
            "names": list(self.grid.names) if self.grid.names else None,
            "times": [float(t) for t in self.times],
            "files": files,
            "converged": self.converged,
        }
        (out / "manifest.json").write_bytes(
            (_canonical_json(manifest) + "\n").encode("ascii")
        )
        for name, field in zip(files, self.fields):
            field.dump(out / name)

    @classmethod
    def load(cls, in_dir, *, mmap: bool = False) -> "ValueFunction":
        path = Path(in_dir) / "manifest.json"
        if not path.is_file():
            raise UsageError(f"{in_dir} does not contain a value-function manifest")
        manifest = json.loads(path.read_text())
        grid = GridSpec.from_header(manifest["grid"])
        if manifest.get("names"):
            grid = GridSpec(grid.lo, grid.hi, grid.counts, grid.periodic,
                            names=tuple(manifest["names"]))
        fields = [
            ScalarField.load(Path(in_dir) / name, mmap=mmap)
            for name in manifest["files"]
        ]
        fields = [ScalarField(grid, f.values, copy=False, check=False) for f in fields]
        return cls(grid, manifest["times"], fields, manifest["converged"])


def content_hash(dump_dir) -> str:
    """SHA-256 over the manifest and every field file, in manifest order."""
    path = Path(dump_dir)
    manifest_bytes = (path / "manifest.json").read_bytes()
    digest = hashlib.sha256(manifest_bytes)
    for name in json.loads(manifest_bytes)["files"]:
        digest.update((path / name).read_bytes())
    return digest.hexdigest()


def _substep(model, sigma, V: np.ndarray, out: np.ndarray, dt: float) -> None:
    """One frozen Euler substep, fused kernel or generic numpy path."""
    if getattr(model, "use_fused", False):
        model.fused_substep(V, out, dt)
        return
    grid = model.grid
    left, right = gradients_shaped(grid, V)
    p_avg = [0.5 * (left[i] + right[i]) for i in range(grid.ndim)]
    hhat = np.asarray(model.hamiltonian_fields(p_avg), dtype=np.float64)
    if hhat.shape != V.shape:
        hhat = np.broadcast_to(hhat, V.shape).copy()
    for i in range(grid.ndim):
        hhat += 0.5 * sigma[i] * (right[i] - left[i])
    np.minimum(hhat, 0.0, out=hhat)
    np.multiply(hhat, dt, out=out)
    out += V


def lf_step(field: ScalarField, model, dt: float) -> ScalarField:
    """One explicit Lax-Friedrichs Euler substep with freezing.

    Checks the CFL bound dt * max(sum_i sigma_i / h_i) <= 1 and raises
    CflError on violation; stable drivers pass dt from their own CFL
    number, so a violation here is a driver bug.
    """
    if field.grid != model.grid:
        raise UsageError("field and model grids differ")
    if not dt > 0:
        raise UsageError("dt must be positive")
    rate = model.max_speed_sum()
    if dt * rate > _CFL_SLACK:
        raise CflError(
            f"dt={dt} exceeds the stability bound {1.0 / rate if rate else math.inf}"
        )
    sigma = None if getattr(model, "use_fused", False) else model.sigma_fields()
    V = field.shaped.copy()
    out = np.empty_like(V)
    _substep(model, sigma, V, out, dt)
    return ScalarField(field.grid, out.ravel(), copy=False, check=False)


def _march(ell: ScalarField, model, cfg: SolveConfig, avoid: np.ndarray | None):
    grid = model.grid
    if ell.grid != grid:
        raise UsageError("boundary field and model grids differ")
    rate = model.max_speed_sum()
    horizon = float(cfg.horizon)

    V = ell.shaped.astype(np.float64, copy=True)
    if avoid is not None:
        np.maximum(V, -avoid, out=V)
        boundary = ScalarField(grid, V.ravel().copy(), copy=False, check=False)
    else:
        boundary = ell

    # a horizon shorter than one stable step stores only the boundary;
    # static dynamics (zero rate) never change the field at all
    if horizon * rate < cfg.cfl:
        return ValueFunction(grid, [0.0], [boundary], False)

    n_steps = max(1, math.ceil(horizon * rate / cfg.cfl))
    dt = horizon / n_steps
    stride = cfg.snapshot_stride or max(1, round(n_steps / (_AUTO_SNAPSHOTS - 1)))
    sigma = None if getattr(model, "use_fused", False) else model.sigma_fields()
    rk2 = cfg.integrator == "rk2"
    buf_b = np.empty_like(V)
    buf_c = np.empty_like(V) if rk2 else None

    s_list = [0.0]
    fields = [boundary]
    converged = False
    for k in range(1, n_steps + 1):
        if rk2:
            _substep(model, sigma, V, buf_b, dt)
            if avoid is not None:
                np.maximum(buf_b, -avoid, out=buf_b)
            _substep(model, sigma, buf_b, buf_c, dt)
            if avoid is not None:
                np.maximum(buf_c, -avoid, out=buf_c)
            np.add(V, buf_c, out=buf_b)
            buf_b *= 0.5
            if avoid is not None:
                np.maximum(buf_b, -avoid, out=buf_b)
        else:
            _substep(model, sigma, V, buf_b, dt)
            if avoid is not None:
                np.maximum(buf_b, -avoid, out=buf_b)
        delta = float(np.max(np.abs(buf_b - V)))
        if not math.isfinite(delta):
            raise NumericalError(
                f"non-finite values appeared at step {k}", step=k
            )
        V, buf_b = buf_b, V
        done = k == n_steps
        if cfg.convergence_tol is not None and delta / dt < cfg.convergence_tol:
            converged = True
            done = True
        if done or k % stride == 0:
            s_list.append(k * dt)
            fields.append(ScalarField(grid, V.ravel().copy(), copy=False, check=False))
        if done:
            break

    times = [0.0 - s for s in reversed(s_list)]
    return ValueFunction(grid, times, list(reversed(fields)), converged)


def solve_tube(ell: ScalarField, model, cfg: SolveConfig) -> ValueFunction:
    """March the frozen avoidance value backward from V(., 0) = l.

    Stops at the horizon, or earlier once the max-norm change per unit
    time falls below cfg.convergence_tol (result flagged converged).
    """
    if cfg.mode != "tube":
        raise UsageError("solve_tube requires mode 'tube'")
    return _march(ell, model, cfg, None)


def solve_reach_avoid(
    ell_reach: ScalarField,
    g_avoid: ScalarField | None,
    model,
    cfg: SolveConfig,
) -> ValueFunction:
    """Reach-avoid march: can the target {l_reach < 0} be attained while
    staying clear of the obstacle {g_avoid < 0}?

    Every substep is followed by the mask V := max(V, -g_avoid), and the
    stored boundary field is the masked l_reach, so obstacle states hold
    V > 0 at every time.  Passing None for g_avoid degenerates to
    solve_tube on l_reach.
    """
    if cfg.mode != "reach_avoid":
        raise UsageError("solve_reach_avoid requires mode 'reach_avoid'")
    avoid = None
    if g_avoid is not None:
        if g_avoid.grid != ell_reach.grid:
            raise UsageError("reach and avoid fields must share the grid")
        avoid = g_avoid.shaped
    return _march(ell_reach, model, cfg, avoid)


def unsafe_set(value: ValueFunction, t: float) -> np.ndarray:
    """Boolean indicator of {V(z, t) < 0} on the nearest stored snapshot."""
    return value.field_at(t).shaped < 0.0


def dilate_mask(mask: np.ndarray, periodic) -> np.ndarray:
    """Grow a boolean mask by one cell along every axis.

    Periodic axes wrap; non-periodic axes stop at the boundary.  Used for
    band-tolerant set-containment checks.
    """
    out = mask.copy()
    for axis, per in enumerate(periodic):
        if per:
            out |= np.roll(out, 1, axis=axis) | np.roll(out, -1, axis=axis)
        else:
            grown = out.copy()
            src = [slice(None)] * mask.ndim
            dst = [slice(None)] * mask.ndim
            src[axis] = slice(0, -1)
            dst[axis] = slice(1, None)
            grown[tuple(dst)] |= out[tuple(src)]
            src[axis] = slice(1, None)
            dst[axis] = slice(0, -1)
            grown[tuple(dst)] |= out[tuple(src)]
            out = grown
    return out
