"""Boundary functions: signed distance between two oriented car bodies.

The collision criterion is a scalar over relative pose: positive when the
rectangular footprints are separated (Euclidean gap), negative when they
overlap (separating-axis penetration depth), zero exactly at contact.
Only the zero level set carries meaning for the reachability solve, so
the cheaper SAT depth is used inside the overlap region; it preserves
that zero set exactly.

An optional orientation-dependent margin lifts the zero set for poses
judged more dangerous (e.g. head-on), shrinking what counts as "safe
separation" there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .grid import GridSpec, ScalarField


@dataclass(frozen=True)
class BodyDims:
    """Rectangular footprint of one vehicle, meters."""

    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise UsageError("body length and width must be positive")

    @property
    def half(self) -> tuple[float, float]:
        return (self.length / 2.0, self.width / 2.0)


class SeverityShape:
    """Relative-heading margin m(dtheta) >= 0, sampled on a periodic grid.

    Samples cover [-pi, pi) uniformly (index 0 at -pi); evaluation wraps
    and interpolates linearly.  Subtracting the margin from the signed
    distance raises the unsafe threshold at the weighted headings.
    """

    __slots__ = ("margins",)

    def __init__(self, margins):
        arr = np.asarray(margins, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise UsageError("severity shape needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise UsageError("severity margins must be finite")
        if np.any(arr < 0):
            raise UsageError("severity margins must be non-negative")
        arr = arr.copy()
        arr.flags.writeable = False
        self.margins = arr

    def margin(self, dtheta):
        """Margin at heading(s), periodic linear interpolation."""
        m = self.margins
        n = m.size
        if n == 1:
            out = np.full_like(np.asarray(dtheta, dtype=np.float64), m[0])
            return float(out) if np.isscalar(dtheta) else out
        h = 2.0 * np.pi / n
        u = np.mod((np.asarray(dtheta, dtype=np.float64) + np.pi) / h, n)
        k = np.minimum(np.floor(u).astype(np.int64), n - 1)
        frac = u - k
        out = m[k] * (1.0 - frac) + m[(k + 1) % n] * frac
        return float(out) if np.isscalar(dtheta) else out


def _pt_seg_dist2(px, py, ax, ay, bx, by):
    """Squared distance from points to segments, elementwise broadcast."""
    dx = bx - ax
    dy = by - ay
    seg2 = dx * dx + dy * dy
    t = ((px - ax) * dx + (py - ay) * dy) / np.where(seg2 > 0, seg2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    cx = ax + t * dx
    cy = ay + t * dy
    return (px - cx) ** 2 + (py - cy) ** 2


def _signed_distance_core(dx, dy, cth, sth, half_a, half_b):
    """Vectorized signed distance for flat pose arrays.

    A is axis-aligned at the origin; B sits at (dx, dy) rotated by the
    angle whose cosine/sine are given.
    """
    ha0, ha1 = half_a
    hb0, hb1 = half_b
    acth = np.abs(cth)
    asth = np.abs(sth)

    # separating-axis overlaps along A's axes and B's axes
    o = np.empty((4,) + dx.shape, dtype=np.float64)
    o[0] = ha0 + hb0 * acth + hb1 * asth - np.abs(dx)
    o[1] = ha1 + hb0 * asth + hb1 * acth - np.abs(dy)
    o[2] = ha0 * acth + ha1 * asth + hb0 - np.abs(dx * cth + dy * sth)
    o[3] = ha0 * asth + ha1 * acth + hb1 - np.abs(-dx * sth + dy * cth)
    min_overlap = o.min(axis=0)
    overlapping = min_overlap >= 0.0

    # corner rings (counterclockwise), shape (..., 4)
    ux = np.array([1.0, -1.0, -1.0, 1.0])
    uy = np.array([1.0, 1.0, -1.0, -1.0])
    ax_ = ha0 * ux * np.ones_like(dx)[..., None]
    ay_ = ha1 * uy * np.ones_like(dx)[..., None]
    bx_ = dx[..., None] + hb0 * ux * cth[..., None] - hb1 * uy * sth[..., None]
    by_ = dy[..., None] + hb0 * ux * sth[..., None] + hb1 * uy * cth[..., None]

    def ring_min_dist2(px, py, qx, qy):
        # min over points (last axis) x edges of the q-ring
        best = None
        for k in range(4):
            k2 = (k + 1) % 4
            d2 = _pt_seg_dist2(
                px, py,
                qx[..., k : k + 1], qy[..., k : k + 1],
                qx[..., k2 : k2 + 1], qy[..., k2 : k2 + 1],
            ).min(axis=-1)
            best = d2 if best is None else np.minimum(best, d2)
        return best

    d2 = np.minimum(
        ring_min_dist2(ax_, ay_, bx_, by_),
        ring_min_dist2(bx_, by_, ax_, ay_),
    )
    dist = np.sqrt(d2)
    return np.where(overlapping, -min_overlap, dist)


def signed_distance_rect(relpose, dims_a: BodyDims, dims_b: BodyDims) -> float:
    """Signed distance between body A (axis-aligned at the origin) and
    body B at relative pose (dx, dy, dtheta).

    Positive: minimum Euclidean gap.  Negative: separating-axis minimum
    translation depth.  Zero exactly at contact.
    """
    pose = np.asarray(relpose, dtype=np.float64).reshape(-1)
    if pose.size != 3:
        raise UsageError("relative pose must be (dx, dy, dtheta)")
    if not np.all(np.isfinite(pose)):
        raise UsageError("relative pose must be finite")
    dx = np.array([pose[0]])
    dy = np.array([pose[1]])
    val = _signed_distance_core(
        dx, dy,
        np.array([np.cos(pose[2])]), np.array([np.sin(pose[2])]),
        dims_a.half, dims_b.half,
    )[0]
    return float(val) + 0.0  # normalize -0.0 at contact


def build_ell_field(
    grid: GridSpec,
    dims_a: BodyDims,
    dims_b: BodyDims,
    shape: SeverityShape | None = None,
) -> ScalarField:
    """Sample the (optionally shaped) signed distance over a pose grid.

    The grid's first three dimensions must be (dx, dy, dtheta) with only
    dtheta periodic; any trailing dimensions (velocities) broadcast, since
    the boundary function does not depend on them.
    """
    if grid.ndim < 3:
        raise UsageError("boundary field needs at least (dx, dy, dtheta) dimensions")
    if grid.periodic[0] or grid.periodic[1] or not grid.periodic[2]:
        raise UsageError(
            "grid layout mismatch: expected non-periodic dx, dy then periodic dtheta"
        )
    xs, ys, ts = grid.axes[0], grid.axes[1], grid.axes[2]
    dx, dy, th = np.meshgrid(xs, ys, ts, indexing="ij")
    block = _signed_distance_core(
        dx, dy, np.cos(th), np.sin(th), dims_a.half, dims_b.half
    )
    if shape is not None:
        block = block - shape.margin(ts)[None, None, :]
    full = np.broadcast_to(
        block.reshape(block.shape + (1,) * (grid.ndim - 3)), grid.shape
    )
    return ScalarField(grid, np.ascontiguousarray(full), copy=False, check=False)
