"""Two-vehicle relative dynamics and their game-theoretic structure.

The joint state z = [dx, dy, dtheta, v_a, v_b] lives in agent A's body
frame.  Each agent drives a kinematic car (controlled acceleration and
steering angle, yaw rate v/L * tan(delta)), giving

    dx'     = -v_a + v_b cos(dtheta) + w_a dy
    dy'     =  v_b sin(dtheta) - w_a dx
    dtheta' =  w_b - w_a
    v_a'    =  a_a        (zeroed at the velocity bounds when pushing out)
    v_b'    =  a_b

with w_i = (v_i / L_i) tan(delta_i).  The Hamiltonian p . f is affine in
each acceleration and monotone in each tan(delta), so every optimizing
agent plays an interval endpoint; that structure powers both the
analytic extremizers here and the fused solver kernel.

Grid-facing model classes at the bottom expose the contract the solver
consumes: per-dimension speed bounds for dissipation and the extremized
Hamiltonian evaluated on gradient fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import UsageError
from .grid import GridSpec

_HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class CarParams:
    """Physical envelope of one vehicle."""

    wheelbase: float = 2.7
    accel: tuple[float, float] = (-4.0, 3.0)
    steer: tuple[float, float] = (-0.3, 0.3)
    velocity: tuple[float, float] = (0.0, 15.0)

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise UsageError("wheelbase must be positive")
        if not self.accel[0] <= self.accel[1]:
            raise UsageError("accel interval is empty")
        if not self.steer[0] <= self.steer[1]:
            raise UsageError("steer interval is empty")
        if not (abs(self.steer[0]) < _HALF_PI and abs(self.steer[1]) < _HALF_PI):
            raise UsageError("steering angles must satisfy |delta| < pi/2")
        if not (0.0 <= self.velocity[0] < self.velocity[1]):
            raise UsageError("need 0 <= v_min < v_max")


@dataclass(frozen=True)
class RelativeState:
    dx: float
    dy: float
    dtheta: float
    v_a: float
    v_b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta, self.v_a, self.v_b])

    @classmethod
    def from_array(cls, arr) -> "RelativeState":
        a = np.asarray(arr, dtype=np.float64).reshape(-1)
        if a.size != 5:
            raise UsageError("relative state needs 5 components")
        return cls(*a)


def _state_array(z) -> np.ndarray:
    if isinstance(z, RelativeState):
        return z.as_array()
    a = np.asarray(z, dtype=np.float64).reshape(-1)
    if a.size != 5:
        raise UsageError("relative state needs 5 components")
    if not np.all(np.isfinite(a)):
        raise UsageError("relative state must be finite")
    return a


@dataclass(frozen=True)
class AgentBounds:
    """One agent's admissible control intervals, optionally state-scaled.

    With scaling "state", the steering interval shrinks with speed and
    the acceleration interval shrinks toward low speed:

        s = (v - v_min) / (v_max - v_min)
        steer *= alpha = gamma + (1 - s)(1 - gamma)
        accel *= beta  = gamma + s (1 - gamma)
    """

    accel: tuple[float, float]
    steer: tuple[float, float]
    scaling: str = "none"
    gamma: float = 0.2

    def __post_init__(self):
        if not self.accel[0] <= self.accel[1]:
            raise UsageError("accel interval is empty")
        if not self.steer[0] <= self.steer[1]:
            raise UsageError("steer interval is empty")
        if self.scaling not in ("none", "state"):
            raise UsageError(f"unknown scaling mode {self.scaling!r}")
        if self.scaling == "state" and not 0.0 < self.gamma <= 1.0:
            raise UsageError("state scaling needs 0 < gamma <= 1")


@dataclass(frozen=True)
class ControlBounds:
    agent_a: AgentBounds
    agent_b: AgentBounds

    @classmethod
    def from_params(cls, params_a: CarParams, params_b: CarParams | None = None,
                    scaling: str = "none", gamma: float = 0.2) -> "ControlBounds":
        params_b = params_b or params_a
        return cls(
            AgentBounds(params_a.accel, params_a.steer, scaling, gamma),
            AgentBounds(params_b.accel, params_b.steer, scaling, gamma),
        )


@dataclass(frozen=True)
class ConcreteBounds:
    """Scaled, ready-to-optimize intervals for both agents."""

    accel_a: tuple[float, float]
    steer_a: tuple[float, float]
    accel_b: tuple[float, float]
    steer_b: tuple[float, float]
    clamped: bool = False


@dataclass(frozen=True)
class GameConfig:
    """Optimization role of each agent and who moves second.

    Because the Hamiltonian separates across agents, the play order never
    changes the extremizers; it is carried for interface completeness.
    """

    role_a: str = "max"
    role_b: str = "min"
    second_mover: str = "b"

    def __post_init__(self):
        for role in (self.role_a, self.role_b):
            if role not in ("max", "min"):
                raise UsageError(f"role must be 'max' or 'min', got {role!r}")
        if self.second_mover not in ("a", "b"):
            raise UsageError("second mover must name agent 'a' or 'b'")


def _pair(params) -> tuple[CarParams, CarParams]:
    if isinstance(params, CarParams):
        return params, params
    pa, pb = params
    return pa, pb


def scaling_factors(v: float, params: CarParams, gamma: float = 0.2):
    """State-dependent steering/accel scale factors (alpha, beta, clamped).

    alpha scales steering (full authority at v_min), beta scales
    acceleration (full authority at v_max); alpha + beta = 1 + gamma.
    """
    vmin, vmax = params.velocity
    s = (v - vmin) / (vmax - vmin)
    clamped = bool(s < 0.0 or s > 1.0)
    s = min(max(s, 0.0), 1.0)
    alpha = gamma + (1.0 - s) * (1.0 - gamma)
    beta = gamma + s * (1.0 - gamma)
    return alpha, beta, clamped


def _scale_agent(ab: AgentBounds, v: float, params: CarParams):
    if ab.scaling == "none":
        return ab.accel, ab.steer, False
    alpha, beta, clamped = scaling_factors(v, params, ab.gamma)
    accel = (beta * ab.accel[0], beta * ab.accel[1])
    steer = (alpha * ab.steer[0], alpha * ab.steer[1])
    return accel, steer, clamped


def scaled_bounds(bounds: ControlBounds, v, params) -> ConcreteBounds:
    """Concrete control intervals at velocities v = (v_a, v_b).

    A scalar v applies to both agents.  Velocities outside the parameter
    range clamp the scaling coordinate and set the flag.
    """
    pa, pb = _pair(params)
    if np.isscalar(v):
        v_a = v_b = float(v)
    else:
        v_a, v_b = (float(x) for x in v)
    accel_a, steer_a, ca = _scale_agent(bounds.agent_a, v_a, pa)
    accel_b, steer_b, cb = _scale_agent(bounds.agent_b, v_b, pb)
    return ConcreteBounds(accel_a, steer_a, accel_b, steer_b, ca or cb)


def _concrete(bounds, z, params) -> ConcreteBounds:
    if isinstance(bounds, ConcreteBounds):
        return bounds
    return scaled_bounds(bounds, (z[3], z[4]), params)


def _sat(a: float, v: float, vmin: float, vmax: float) -> float:
    """Velocity flow with saturation: zero when pushing past a bound."""
    if v <= vmin and a < 0.0:
        return 0.0
    if v >= vmax and a > 0.0:
        return 0.0
    return a


def relative_flow(z, u_a, u_b, params) -> np.ndarray:
    """Joint flow f(z, u_a, u_b); controls are (accel, steer) pairs.

    Velocity components saturate at each agent's [v_min, v_max] so the
    state stays on a bounded grid.
    """
    z = _state_array(z)
    pa, pb = _pair(params)
    a_a, d_a = float(u_a[0]), float(u_a[1])
    a_b, d_b = float(u_b[0]), float(u_b[1])
    if abs(d_a) >= _HALF_PI or abs(d_b) >= _HALF_PI:
        raise UsageError("steering must satisfy |delta| < pi/2")
    dx, dy, dtheta, v_a, v_b = z
    w_a = (v_a / pa.wheelbase) * np.tan(d_a)
    w_b = (v_b / pb.wheelbase) * np.tan(d_b)
    return np.array(
        [
            -v_a + v_b * np.cos(dtheta) + w_a * dy,
            v_b * np.sin(dtheta) - w_a * dx,
            w_b - w_a,
            _sat(a_a, v_a, *pa.velocity),
            _sat(a_b, v_b, *pb.velocity),
        ]
    )


def _extremize(coef: float, lo: float, hi: float, maximize: bool) -> float:
    """Endpoint of [lo, hi] optimizing coef*u; ties prefer 0 if admissible."""
    if coef == 0.0:
        return 0.0 if lo <= 0.0 <= hi else lo
    return hi if (coef > 0.0) == maximize else lo


def hamiltonian_coefficients(z, p, params):
    """Per-channel coefficients of p . f.

    Returns (base, c_steer_a, c_accel_a, c_steer_b, c_accel_b) where
    c_steer_* multiplies tan(delta) and c_accel_* multiplies the
    (unsaturated) acceleration.
    """
    z = _state_array(z)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if p.size != 5:
        raise UsageError("gradient needs 5 components")
    pa, pb = _pair(params)
    dx, dy, dtheta, v_a, v_b = z
    base = p[0] * (-v_a + v_b * np.cos(dtheta)) + p[1] * (v_b * np.sin(dtheta))
    c_steer_a = (v_a / pa.wheelbase) * (p[0] * dy - p[1] * dx - p[2])
    c_steer_b = (v_b / pb.wheelbase) * p[2]
    return float(base), float(c_steer_a), float(p[3]), float(c_steer_b), float(p[4])


def optimal_controls(z, p, bounds, game: GameConfig, params):
    """Bang-bang extremizers of p . f for both agents.

    The Hamiltonian separates across agents, so each agent independently
    plays the interval endpoint matching its role and coefficient sign;
    the play order is irrelevant.  Bounds may be ControlBounds (scaled
    here at z's velocities) or already-concrete intervals.
    """
    z = _state_array(z)
    cb = _concrete(bounds, z, params)
    base, c_da, c_aa, c_db, c_ab = hamiltonian_coefficients(z, p, params)
    max_a = game.role_a == "max"
    max_b = game.role_b == "max"
    d_a = _extremize(c_da, *cb.steer_a, max_a)
    a_a = _extremize(c_aa, *cb.accel_a, max_a)
    d_b = _extremize(c_db, *cb.steer_b, max_b)
    a_b = _extremize(c_ab, *cb.accel_b, max_b)
    return (a_a, d_a), (a_b, d_b)


def hamiltonian(z, p, bounds, game: GameConfig, params) -> float:
    """Extremized p . f at one state, velocity saturation included."""
    z = _state_array(z)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    u_a, u_b = optimal_controls(z, p, bounds, game, params)
    return float(p @ relative_flow(z, u_a, u_b, params))


def speed_bounds(z, bounds, params) -> np.ndarray:
    """Per-dimension bounds sigma_i >= |f_i| over all admissible controls."""
    z = _state_array(z)
    pa, pb = _pair(params)
    cb = _concrete(bounds, z, params)
    dx, dy, dtheta, v_a, v_b = z
    tmax_a = max(abs(np.tan(cb.steer_a[0])), abs(np.tan(cb.steer_a[1])))
    tmax_b = max(abs(np.tan(cb.steer_b[0])), abs(np.tan(cb.steer_b[1])))
    w_a = (v_a / pa.wheelbase) * tmax_a
    w_b = (v_b / pb.wheelbase) * tmax_b
    return np.array(
        [
            abs(-v_a + v_b * np.cos(dtheta)) + w_a * abs(dy),
            abs(v_b * np.sin(dtheta)) + w_a * abs(dx),
            w_a + w_b,
            max(abs(cb.accel_a[0]), abs(cb.accel_a[1])),
            max(abs(cb.accel_b[0]), abs(cb.accel_b[1])),
        ]
    )


# ---------------------------------------------------------------------------
# Grid-facing models.  The solver consumes objects with:
#   grid               GridSpec
#   sigma_fields()     per-dimension speed-bound arrays, broadcastable to
#                      grid.shape (computed once per solve)
#   hamiltonian_fields(p)  extremized Hamiltonian on gradient arrays p[i]
# and optionally a fused Euler substep (use_fused / fused_substep).
# ---------------------------------------------------------------------------


def _extremize_fields(coef, lo, hi, maximize):
    """Branch-free endpoint optimum of coef*u over [lo, hi], elementwise.

    max: (u + w + |w - u|)/2, min: (u + w - |w - u|)/2 with u = coef*lo,
    w = coef*hi.  A zero coefficient contributes zero either way, which
    matches any tie-break choice.
    """
    u = coef * lo
    w = coef * hi
    s = 1.0 if maximize else -1.0
    return 0.5 * ((u + w) + s * np.abs(w - u))


def _clamp_rows(lo, hi, v_axis, vmin, vmax):
    """Zero out the outward half of accel intervals past the velocity range."""
    lo = lo.copy()
    hi = hi.copy()
    at_min = v_axis <= vmin + 1e-12
    at_max = v_axis >= vmax - 1e-12
    lo[at_min] = np.maximum(lo[at_min], 0.0)
    hi[at_min] = np.maximum(hi[at_min], 0.0)
    lo[at_max] = np.minimum(lo[at_max], 0.0)
    hi[at_max] = np.minimum(hi[at_max], 0.0)
    return lo, hi


class AgentTables:
    """Per-velocity-node concrete control intervals for one agent.

    Rows are indexed by the agent's velocity axis.  Steering endpoints
    are stored as tangents (monotone transform), acceleration endpoints
    are clamped to zero outward flow beyond [v_min, v_max], and the
    dissipation helpers wmax (yaw-rate bound) and amax (accel bound) are
    precomputed.
    """

    __slots__ = ("tan_lo", "tan_hi", "a_lo", "a_hi", "wmax", "amax", "v_over_l")

    def __init__(self, v_axis: np.ndarray, ab: AgentBounds, params: CarParams):
        v = np.asarray(v_axis, dtype=np.float64)
        n = v.size
        if ab.scaling == "state":
            vmin, vmax = params.velocity
            s = np.clip((v - vmin) / (vmax - vmin), 0.0, 1.0)
            alpha = ab.gamma + (1.0 - s) * (1.0 - ab.gamma)
            beta = ab.gamma + s * (1.0 - ab.gamma)
        else:
            alpha = np.ones(n)
            beta = np.ones(n)
        steer_lo = alpha * ab.steer[0]
        steer_hi = alpha * ab.steer[1]
        a_lo, a_hi = _clamp_rows(
            beta * ab.accel[0], beta * ab.accel[1], v, *params.velocity
        )
        self.tan_lo = np.tan(steer_lo)
        self.tan_hi = np.tan(steer_hi)
        self.a_lo = a_lo
        self.a_hi = a_hi
        self.v_over_l = v / params.wheelbase
        self.wmax = self.v_over_l * np.maximum(np.abs(self.tan_lo), np.abs(self.tan_hi))
        self.amax = np.maximum(np.abs(a_lo), np.abs(a_hi))


class TwoCarModel:
    """The 5-D relative two-car game bound to a grid.

    Axes must be (dx, dy, dtheta periodic, v_a, v_b).  Velocity axes may
    extend past an agent's parameter range; acceleration is clamped to
    point back inside wherever the range is exceeded, which is how an
    agent-specific velocity cap on a shared grid is realized.
    """

    def __init__(self, grid: GridSpec, params_a: CarParams, params_b: CarParams,
                 bounds: ControlBounds, game: GameConfig, *, use_fused: bool = True):
        if grid.ndim != 5:
            raise UsageError("two-car model needs a 5-D grid")
        if tuple(grid.periodic) != (False, False, True, False, False):
            raise UsageError("two-car grid must be periodic in dtheta only")
        self.grid = grid
        self.params_a = params_a
        self.params_b = params_b
        self.bounds = bounds
        self.game = game
        self.use_fused = bool(use_fused)
        self.tables_a = AgentTables(grid.axis(3), bounds.agent_a, params_a)
        self.tables_b = AgentTables(grid.axis(4), bounds.agent_b, params_b)
        self.sgn_a = 1.0 if game.role_a == "max" else -1.0
        self.sgn_b = 1.0 if game.role_b == "max" else -1.0

    @property
    def params(self) -> tuple[CarParams, CarParams]:
        return self.params_a, self.params_b

    @cached_property
    def _axis_views(self):
        g = self.grid
        x = g.axis(0)[:, None, None, None, None]
        y = g.axis(1)[None, :, None, None, None]
        th = g.axis(2)[None, None, :, None, None]
        va = g.axis(3)[None, None, None, :, None]
        vb = g.axis(4)[None, None, None, None, :]
        return x, y, np.cos(th), np.sin(th), va, vb

    def sigma_fields(self):
        x, y, cth, sth, va, vb = self._axis_views
        ta, tb = self.tables_a, self.tables_b
        wa = ta.wmax[None, None, None, :, None]
        wb = tb.wmax[None, None, None, None, :]
        return [
            np.abs(-va + vb * cth) + wa * np.abs(y),
            np.abs(vb * sth) + wa * np.abs(x),
            wa + wb,
            ta.amax[None, None, None, :, None],
            tb.amax[None, None, None, None, :],
        ]

    def hamiltonian_fields(self, p):
        x, y, cth, sth, va, vb = self._axis_views
        ta, tb = self.tables_a, self.tables_b
        vla = ta.v_over_l[None, None, None, :, None]
        vlb = tb.v_over_l[None, None, None, None, :]
        base = p[0] * (-va + vb * cth) + p[1] * (vb * sth)
        c_da = vla * (p[0] * y - p[1] * x - p[2])
        c_db = vlb * p[2]
        h = base
        h = h + _extremize_fields(
            c_da, ta.tan_lo[None, None, None, :, None],
            ta.tan_hi[None, None, None, :, None], self.sgn_a > 0
        )
        h = h + _extremize_fields(
            p[3], ta.a_lo[None, None, None, :, None],
            ta.a_hi[None, None, None, :, None], self.sgn_a > 0
        )
        h = h + _extremize_fields(
            c_db, tb.tan_lo[None, None, None, None, :],
            tb.tan_hi[None, None, None, None, :], self.sgn_b > 0
        )
        h = h + _extremize_fields(
            p[4], tb.a_lo[None, None, None, None, :],
            tb.a_hi[None, None, None, None, :], self.sgn_b > 0
        )
        return h

    def max_speed_sum(self) -> float:
        """Max over nodes of sum_i sigma_i / h_i (the CFL rate)."""
        sigma = self.sigma_fields()
        h = self.grid.spacing
        total = sigma[0] / h[0]
        for i in range(1, 5):
            total = total + sigma[i] / h[i]
        return float(np.max(total))

    def fused_substep(self, V: np.ndarray, out: np.ndarray, dt: float) -> None:
        from ._kernels import two_car_substep

        g = self.grid
        ta, tb = self.tables_a, self.tables_b
        two_car_substep(
            V, out,
            np.asarray(g.spacing), g.axis(0), g.axis(1),
            np.cos(g.axis(2)), np.sin(g.axis(2)), g.axis(3), g.axis(4),
            ta.tan_lo, ta.tan_hi, ta.a_lo, ta.a_hi, ta.wmax, ta.amax, ta.v_over_l,
            tb.tan_lo, tb.tan_hi, tb.a_lo, tb.a_hi, tb.wmax, tb.amax, tb.v_over_l,
            self.sgn_a, self.sgn_b, dt,
        )

    def flow_pinned(self, z) -> np.ndarray:
        """Autonomous flow when every control interval is a singleton."""
        cb = scaled_bounds(self.bounds, (z[3], z[4]), self.params)
        for lo, hi in (cb.accel_a, cb.steer_a, cb.accel_b, cb.steer_b):
            if lo != hi:
                raise UsageError("pinned flow needs singleton control sets")
        return relative_flow(
            z, (cb.accel_a[0], cb.steer_a[0]), (cb.accel_b[0], cb.steer_b[0]),
            self.params,
        )


class Advection1D:
    """Constant-speed 1-D transport, the solver's exactness fixture."""

    def __init__(self, grid: GridSpec, speed: float = -1.0):
        if grid.ndim != 1:
            raise UsageError("advection model is 1-D")
        self.grid = grid
        self.speed = float(speed)

    def sigma_fields(self):
        return [np.array(abs(self.speed))]

    def hamiltonian_fields(self, p):
        return self.speed * p[0]

    def max_speed_sum(self) -> float:
        return abs(self.speed) / self.grid.spacing[0]


class Braking2D:
    """Gap/speed model: d' = -v, v' = a in [-a_max, a_max].

    One agent controls acceleration; with role "max" it avoids the
    collision set {d < 0} and the converged unsafe boundary is the
    minimum braking distance d = v^2 / (2 a_max).  Velocity flow clamps
    at the grid's v-range so braking stops at the lower edge.
    """

    def __init__(self, grid: GridSpec, accel_max: float, role: str = "max"):
        if grid.ndim != 2:
            raise UsageError("braking model is 2-D (gap, speed)")
        if accel_max <= 0:
            raise UsageError("accel_max must be positive")
        if role not in ("max", "min"):
            raise UsageError("role must be 'max' or 'min'")
        self.grid = grid
        self.accel_max = float(accel_max)
        self.role = role
        v = grid.axis(1)
        self.a_lo, self.a_hi = _clamp_rows(
            np.full(v.size, -self.accel_max), np.full(v.size, self.accel_max),
            v, grid.lo[1], grid.hi[1],
        )

    def sigma_fields(self):
        v = np.abs(self.grid.axis(1))[None, :]
        amax = np.maximum(np.abs(self.a_lo), np.abs(self.a_hi))[None, :]
        return [v, amax]

    def hamiltonian_fields(self, p):
        v = self.grid.axis(1)[None, :]
        h = p[0] * (-v)
        return h + _extremize_fields(
            p[1], self.a_lo[None, :], self.a_hi[None, :], self.role == "max"
        )

    def max_speed_sum(self) -> float:
        g = self.grid
        vmax = max(abs(g.lo[1]), abs(g.hi[1]))
        return vmax / g.spacing[0] + self.accel_max / g.spacing[1]


class RssLongitudinal:
    """Following-gap model (gap, v_a, v_b) under fixed decelerations.

    gap' = v_b - v_a (A behind B), v_i' = b_i held until standstill.
    Control sets are singletons, so the Hamiltonian involves no
    optimization.
    """

    def __init__(self, grid: GridSpec, decel_a: float, decel_b: float):
        if grid.ndim != 3:
            raise UsageError("longitudinal model is 3-D (gap, v_a, v_b)")
        if decel_a >= 0 or decel_b >= 0:
            raise UsageError("decelerations must be negative")
        self.grid = grid
        self.decel_a = float(decel_a)
        self.decel_b = float(decel_b)
        self._flow_a = np.where(grid.axis(1) > grid.lo[1] + 1e-12, self.decel_a, 0.0)
        self._flow_b = np.where(grid.axis(2) > grid.lo[2] + 1e-12, self.decel_b, 0.0)

    def sigma_fields(self):
        va = self.grid.axis(1)[None, :, None]
        vb = self.grid.axis(2)[None, None, :]
        return [
            np.abs(vb - va),
            np.abs(self._flow_a)[None, :, None],
            np.abs(self._flow_b)[None, None, :],
        ]

    def hamiltonian_fields(self, p):
        va = self.grid.axis(1)[None, :, None]
        vb = self.grid.axis(2)[None, None, :]
        return (
            p[0] * (vb - va)
            + p[1] * self._flow_a[None, :, None]
            + p[2] * self._flow_b[None, None, :]
        )

    def max_speed_sum(self) -> float:
        g = self.grid
        span = max(abs(g.hi[2] - g.lo[1]), abs(g.hi[1] - g.lo[2]))
        return (
            span / g.spacing[0]
            + abs(self.decel_a) / g.spacing[1]
            + abs(self.decel_b) / g.spacing[2]
        )

    def flow_pinned(self, z) -> np.ndarray:
        g = self.grid
        fa = self.decel_a if z[1] > g.lo[1] + 1e-12 else 0.0
        fb = self.decel_b if z[2] > g.lo[2] + 1e-12 else 0.0
        return np.array([z[2] - z[1], fa, fb])


class RssLateral:
    """Lateral offset double integrator with fixed deceleration to rest.

    y' = vy, vy' = -b_lat * sign(vy): lateral speed decays to zero while
    the offset drifts; the unsafe set is where the drift eats the lateral
    clearance.
    """

    def __init__(self, grid: GridSpec, decel: float):
        if grid.ndim != 2:
            raise UsageError("lateral model is 2-D (offset, lateral speed)")
        if decel <= 0:
            raise UsageError("lateral deceleration must be positive")
        self.grid = grid
        self.decel = float(decel)

    def sigma_fields(self):
        vy = self.grid.axis(1)[None, :]
        return [np.abs(vy), np.full_like(vy, self.decel)]

    def hamiltonian_fields(self, p):
        vy = self.grid.axis(1)[None, :]
        return p[0] * vy + p[1] * (-self.decel * np.sign(vy))

    def max_speed_sum(self) -> float:
        g = self.grid
        vmax = max(abs(g.lo[1]), abs(g.hi[1]))
        return vmax / g.spacing[0] + self.decel / g.spacing[1]

    def flow_pinned(self, z) -> np.ndarray:
        return np.array([z[1], -self.decel * np.sign(z[1])])
