"""Rectilinear n-dimensional grids and scalar fields sampled on them.

A :class:`GridSpec` describes up to seven axes, each a uniform partition
of ``[lo, hi]``.  Periodic axes identify ``hi`` with ``lo`` and do not
store the upper sample.  A :class:`ScalarField` couples a grid with one
64-bit value per node, stored flat in row-major order (last axis
fastest) so that file dumps are bit-exact and layout-stable.

Free functions provide node lookup with fractional offsets, first-order
one-sided differences (the gradient inputs of the level-set solver), and
multilinear interpolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import UsageError

MAX_DIMS = 7

_HEADER_DTYPE = "f64le"


@dataclass(frozen=True)
class GridSpec:
    """Axis bounds, point counts, and periodicity flags for one grid.

    Non-periodic axes sample both endpoints: spacing h = (hi-lo)/(count-1).
    Periodic axes sample only [lo, hi): spacing h = (hi-lo)/count.

    ``names`` is optional presentation metadata (axis labels for CLI
    slicing); it is excluded from equality and from field-dump headers.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    counts: tuple[int, ...]
    periodic: tuple[bool, ...]
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(x) for x in self.lo))
        object.__setattr__(self, "hi", tuple(float(x) for x in self.hi))
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        nd = len(self.counts)
        if not (1 <= nd <= MAX_DIMS):
            raise UsageError(f"grid must have 1..{MAX_DIMS} dimensions, got {nd}")
        if len(self.lo) != nd or len(self.hi) != nd or len(self.periodic) != nd:
            raise UsageError("grid field lengths disagree")
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))
            if len(self.names) != nd:
                raise UsageError("grid names length disagrees with dimension count")
        for i in range(nd):
            if not (np.isfinite(self.lo[i]) and np.isfinite(self.hi[i])):
                raise UsageError(f"dim {i}: bounds must be finite")
            if not self.lo[i] < self.hi[i]:
                raise UsageError(f"dim {i}: lower bound must be below upper bound")
            if self.counts[i] < 3:
                raise UsageError(f"dim {i}: need at least 3 points, got {self.counts[i]}")
        total = 1
        for n in self.counts:
            total *= n
        if total > np.iinfo(np.intp).max:
            raise UsageError("total point count exceeds the addressable index space")

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        out = []
        for lo, hi, n, per in zip(self.lo, self.hi, self.counts, self.periodic):
            out.append((hi - lo) / (n if per else n - 1))
        return tuple(out)

    @cached_property
    def num_points(self) -> int:
        total = 1
        for n in self.counts:
            total *= n
        return total

    def axis(self, i: int) -> np.ndarray:
        """Node coordinates along dimension i (periodic axes omit ``hi``)."""
        arr = self.lo[i] + self.spacing[i] * np.arange(self.counts[i], dtype=np.float64)
        arr.flags.writeable = False
        return arr

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.axis(i) for i in range(self.ndim))

    @cached_property
    def strides(self) -> tuple[int, ...]:
        """Flat-index strides for row-major (last axis fastest) layout."""
        out = [1] * self.ndim
        for i in range(self.ndim - 2, -1, -1):
            out[i] = out[i + 1] * self.counts[i + 1]
        return tuple(out)

    def name_index(self, name: str) -> int:
        """Resolve an axis label (or 'd<k>' fallback) to its dimension index."""
        if self.names is not None and name in self.names:
            return self.names.index(name)
        if name.startswith("d") and name[1:].isdigit():
            k = int(name[1:])
            if 0 <= k < self.ndim:
                return k
        raise UsageError(f"unknown grid dimension {name!r}")

    def to_header(self) -> dict:
        return {
            "dims": self.ndim,
            "lo": list(self.lo),
            "hi": list(self.hi),
            "counts": list(self.counts),
            "periodic": list(self.periodic),
            "count": self.num_points,
            "dtype": _HEADER_DTYPE,
        }

    @classmethod
    def from_header(cls, header: dict) -> "GridSpec":
        if header.get("dtype") != _HEADER_DTYPE:
            raise UsageError(f"unsupported field dtype {header.get('dtype')!r}")
        spec = cls(
            lo=tuple(header["lo"]),
            hi=tuple(header["hi"]),
            counts=tuple(header["counts"]),
            periodic=tuple(header["periodic"]),
        )
        if header["count"] != spec.num_points:
            raise UsageError("field header count disagrees with grid counts")
        return spec


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class ScalarField:
    """One float64 per grid node, immutable, flat row-major storage."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values, *, copy: bool = True, check: bool = True):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            arr = arr.reshape(-1)
        if arr.size != grid.num_points:
            raise UsageError(
                f"value count {arr.size} does not match grid point count {grid.num_points}"
            )
        if check and not np.all(np.isfinite(arr)):
            raise UsageError("scalar field values must all be finite")
        if copy or arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @property
    def shaped(self) -> np.ndarray:
        """Read-only view reshaped to the grid shape."""
        return self.values.reshape(self.grid.shape)

    def dump(self, path) -> None:
        """Write the bit-exact dump: one JSON header line, then raw bytes.

        The payload is the little-endian float64 array in row-major order.
        """
        header = _canonical_json(self.grid.to_header()) + "\n"
        data = np.ascontiguousarray(self.values, dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(data.tobytes())

    @classmethod
    def load(cls, path, *, mmap: bool = False) -> "ScalarField":
        with open(path, "rb") as fh:
            header_line = fh.readline()
            offset = fh.tell()
            header = json.loads(header_line.decode("ascii"))
            grid = GridSpec.from_header(header)
            if mmap:
                values = np.memmap(path, dtype="<f8", mode="r", offset=offset,
                                   shape=(grid.num_points,))
                return cls(grid, values, copy=False, check=False)
            raw = fh.read(8 * grid.num_points)
        if len(raw) != 8 * grid.num_points:
            raise UsageError(f"field file {path} is truncated")
        values = np.frombuffer(raw, dtype="<f8")
        return cls(grid, values, copy=False, check=False)


def _locate(grid: GridSpec, states: np.ndarray):
    """Cell indices, fractional offsets, and out-of-bounds flags for states.

    states: (n, ndim).  Returns (cells (n, ndim) int64, offs (n, ndim) f8,
    oob (n,) bool).  Cells index the lower corner of the containing cell;
    non-periodic queries outside the bounds clamp to the boundary cell with
    offset 0 or 1 and set the flag.
    """
    if not np.all(np.isfinite(states)):
        raise UsageError("state must be finite")
    n, nd = states.shape
    cells = np.empty((n, nd), dtype=np.int64)
    offs = np.empty((n, nd), dtype=np.float64)
    oob = np.zeros(n, dtype=bool)
    for i in range(nd):
        h = grid.spacing[i]
        u = (states[:, i] - grid.lo[i]) / h
        cnt = grid.counts[i]
        if grid.periodic[i]:
            u = np.mod(u, cnt)
            c = np.floor(u).astype(np.int64)
            c = np.clip(c, 0, cnt - 1)
            offs[:, i] = u - c
            cells[:, i] = c
        else:
            below = u < 0.0
            above = u > cnt - 1
            oob |= below | above
            u = np.clip(u, 0.0, float(cnt - 1))
            c = np.floor(u).astype(np.int64)
            c = np.minimum(c, cnt - 2)
            cells[:, i] = c
            offs[:, i] = u - c
    return cells, offs, oob


def state_to_index(grid: GridSpec, state):
    """Locate a state: containing-cell multi-index plus fractional offsets.

    Returns (cell multi-index tuple, offset tuple in [0,1]^d, out_of_bounds).
    Periodic dimensions wrap; non-periodic out-of-range states clamp to the
    boundary cell and raise the flag.
    """
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    if state.size != grid.ndim:
        raise UsageError(
            f"state has {state.size} components, grid has {grid.ndim} dimensions"
        )
    cells, offs, oob = _locate(grid, state[None, :])
    return tuple(int(c) for c in cells[0]), tuple(float(o) for o in offs[0]), bool(oob[0])


def interpolate(field: ScalarField, state, *, return_oob: bool = False):
    """Multilinear interpolation of the field at one state or a batch.

    ``state`` may be a single d-vector or an (n, d) array.  Periodic
    dimensions wrap; outside non-periodic bounds the boundary value is
    used (clamped extrapolation).  With ``return_oob`` the clamp flag(s)
    are returned alongside the value(s).
    """
    grid = field.grid
    arr = np.asarray(state, dtype=np.float64)
    single = arr.ndim == 1
    pts = arr[None, :] if single else arr
    if pts.ndim != 2 or pts.shape[1] != grid.ndim:
        raise UsageError(
            f"state has shape {arr.shape}, grid has {grid.ndim} dimensions"
        )
    cells, offs, oob = _locate(grid, pts)
    strides = np.asarray(grid.strides, dtype=np.int64)
    counts = np.asarray(grid.counts, dtype=np.int64)
    values = field.values
    acc = np.zeros(len(pts), dtype=np.float64)
    nd = grid.ndim
    for corner in range(1 << nd):
        bits = (corner >> np.arange(nd)) & 1
        idx = cells + bits
        for i in range(nd):
            if grid.periodic[i]:
                idx[:, i] %= counts[i]
        w = np.prod(np.where(bits.astype(bool), offs, 1.0 - offs), axis=1)
        acc += w * values[idx @ strides]
    if single:
        result = float(acc[0])
        return (result, bool(oob[0])) if return_oob else result
    return (acc, oob) if return_oob else acc


def one_sided_gradients(field: ScalarField):
    """First-order left and right difference quotients along every axis.

    Returns (left, right), each shaped (ndim, *grid.shape).  Periodic axes
    wrap; non-periodic boundaries use linear-extrapolation ghost nodes
    (ghost = 2*edge - interior), which makes both one-sided differences at
    an edge equal the adjacent interior difference.
    """
    return gradients_shaped(field.grid, field.shaped)


def gradients_shaped(grid: GridSpec, V: np.ndarray):
    """one_sided_gradients on a raw shaped array (solver working buffers)."""
    nd = grid.ndim
    left = np.empty((nd,) + grid.shape, dtype=np.float64)
    right = np.empty((nd,) + grid.shape, dtype=np.float64)
    for i in range(nd):
        h = grid.spacing[i]
        if grid.periodic[i]:
            vm = np.roll(V, 1, axis=i)
            vp = np.roll(V, -1, axis=i)
        else:
            vm = np.empty_like(V)
            vp = np.empty_like(V)
            src = [slice(None)] * nd
            dst = [slice(None)] * nd
            src[i] = slice(0, -1)
            dst[i] = slice(1, None)
            vm[tuple(dst)] = V[tuple(src)]
            src[i] = slice(1, None)
            dst[i] = slice(0, -1)
            vp[tuple(dst)] = V[tuple(src)]
            lo_edge = [slice(None)] * nd
            lo_in = [slice(None)] * nd
            lo_edge[i] = 0
            lo_in[i] = 1
            vm[tuple(lo_edge)] = 2.0 * V[tuple(lo_edge)] - V[tuple(lo_in)]
            hi_edge = [slice(None)] * nd
            hi_in = [slice(None)] * nd
            hi_edge[i] = -1
            hi_in[i] = -2
            vp[tuple(hi_edge)] = 2.0 * V[tuple(hi_edge)] - V[tuple(hi_in)]
        np.subtract(V, vm, out=left[i])
        left[i] /= h
        np.subtract(vp, V, out=right[i])
        right[i] /= h
    return left, right
