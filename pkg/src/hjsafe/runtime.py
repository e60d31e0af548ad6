"""Online safety queries over a solved value function.

Everything here reads immutable solve output: interpolated values and
gradients, optimal control pairs, the safety-preserving control set

    {u_A : dV/dt + grad V . f(z, u_A, u_B) >= 0},

a least-restrictive filter built on it, and a closed-loop simulator for
consistency checks. Queries are pure functions; concurrent use is fine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import optimal_controls, relative_flow, scaled_bounds
from .errors import UsageError
from .grid import interpolate
from .solver import ValueFunction

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class SafetyQueryResult:
    """Value, gradient, and time slope of V at one (state, time) query."""

    value: float
    unsafe: bool
    gradient: np.ndarray
    dvdt: float
    oob: bool


def _clamped_time(value: ValueFunction, t: float) -> float:
    if t > _TIME_TOL:
        raise UsageError(f"time {t} is after the boundary time 0")
    t0 = float(value.times[0])
    if t < t0 - _TIME_TOL and not value.converged:
        raise UsageError(f"time {t} precedes the stored horizon {t0}")
    return min(max(t, t0), 0.0)


def _bracket(value: ValueFunction, tc: float):
    """Snapshot indices and weights for linear interpolation at tc."""
    times = value.times
    k = int(np.searchsorted(times, tc, side="left"))
    k = min(k, times.size - 1)
    if abs(times[k] - tc) <= _TIME_TOL:
        return ((k, 1.0),)
    lo, hi = k - 1, k
    w = (tc - times[lo]) / (times[hi] - times[lo])
    return ((lo, 1.0 - w), (hi, w))


def value_at(value: ValueFunction, z, t: float) -> SafetyQueryResult:
    """V, grad V, and dV/dt at (z, t).

    Multilinear in state, linear in time between snapshots. The gradient
    uses central differences of interpolated values at +-h/2 along each
    axis; dV/dt uses one-sided snapshot differences at the ends of the
    stored range and central ones at interior stored times. Queries
    earlier than the stored horizon are allowed only for converged
    solves, where the earliest snapshot is stationary.
    """
    grid = value.grid
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (grid.ndim,):
        raise UsageError(f"state must be a {grid.ndim}-vector")
    tc = _clamped_time(value, t)
    pairs = _bracket(value, tc)

    probes = np.tile(z, (1 + 2 * grid.ndim, 1))
    for i in range(grid.ndim):
        half = 0.5 * grid.spacing[i]
        probes[1 + 2 * i, i] -= half
        probes[2 + 2 * i, i] += half

    acc = np.zeros(probes.shape[0])
    oob = False
    for idx, w in pairs:
        vals, flags = interpolate(value.fields[idx], probes, return_oob=True)
        acc += w * vals
        oob = oob or bool(flags[0])

    val = float(acc[0])
    gradient = np.array(
        [(acc[2 + 2 * i] - acc[1 + 2 * i]) / grid.spacing[i] for i in range(grid.ndim)]
    )

    times = value.times
    if times.size == 1:
        dvdt = 0.0
    else:
        def at(i):
            return float(interpolate(value.fields[i], z))

        j = int(np.argmin(np.abs(times - tc)))
        if abs(times[j] - tc) <= _TIME_TOL:
            if j == times.size - 1:
                dvdt = (at(j) - at(j - 1)) / (times[j] - times[j - 1])
            elif j == 0:
                dvdt = (at(1) - at(0)) / (times[1] - times[0])
            else:
                dvdt = (at(j + 1) - at(j - 1)) / (times[j + 1] - times[j - 1])
        else:
            lo = pairs[0][0]
            dvdt = (at(lo + 1) - at(lo)) / (times[lo + 1] - times[lo])

    return SafetyQueryResult(
        value=val, unsafe=val < 0.0, gradient=gradient, dvdt=float(dvdt), oob=oob
    )


def optimal_pair(value: ValueFunction, z, t: float, bounds, game, params):
    """Extremizing control pair at the interpolated gradient."""
    q = value_at(value, z, t)
    return optimal_controls(z, q.gradient, bounds, game, params)


@dataclass(frozen=True)
class SafetyControlSet:
    """Safety-preserving controls for A as accel intervals per steering.

    steer holds the sampled steering values; accel_lo/accel_hi the
    admissible acceleration interval at each sample, NaN where the slab
    is empty. The exact region is curved in (a, delta); the sampling
    bounds the representation error by the bin width.
    """

    steer: np.ndarray
    accel_lo: np.ndarray
    accel_hi: np.ndarray
    query: SafetyQueryResult

    @property
    def empty(self) -> bool:
        return bool(np.all(np.isnan(self.accel_lo)))

    def contains(self, u) -> bool:
        """Membership of (accel, steer) by the nearest steering sample."""
        a, d = float(u[0]), float(u[1])
        if d < self.steer[0] - _TIME_TOL or d > self.steer[-1] + _TIME_TOL:
            return False
        k = int(np.argmin(np.abs(self.steer - d)))
        lo, hi = self.accel_lo[k], self.accel_hi[k]
        if math.isnan(lo):
            return False
        return lo - 1e-12 <= a <= hi + 1e-12


def _params_pair(params):
    return params if isinstance(params, tuple) else (params, params)


def _sat_interval(a_lo, a_hi, v, params_a):
    """Image of [a_lo, a_hi] under the velocity-rail saturation at v."""
    vmin, vmax = params_a.velocity
    if v <= vmin:
        return max(a_lo, 0.0), max(a_hi, 0.0)
    if v >= vmax:
        return min(a_lo, 0.0), min(a_hi, 0.0)
    return a_lo, a_hi


def _unsat_interval(w_lo, w_hi, a_lo, a_hi, v, params_a):
    """Preimage in [a_lo, a_hi] of a saturated-flow interval [w_lo, w_hi]."""
    vmin, vmax = params_a.velocity
    if v <= vmin:
        if w_hi < 0:
            return None
        if w_lo > 0:
            lo, hi = w_lo, w_hi
        else:
            lo, hi = a_lo, w_hi  # every braking input maps to zero flow
    elif v >= vmax:
        if w_lo > 0:
            return None
        if w_hi < 0:
            lo, hi = w_lo, w_hi
        else:
            lo, hi = w_lo, a_hi
    else:
        lo, hi = w_lo, w_hi
    lo, hi = max(lo, a_lo), min(hi, a_hi)
    return (lo, hi) if lo <= hi else None


def safety_preserving_set(
    value: ValueFunction, z, t: float, u_b, bounds, game, params, n_steer: int = 64
) -> SafetyControlSet:
    """Controls for A keeping dV/dt + grad V . f non-negative given u_b.

    The constraint is affine in A's saturated acceleration at fixed
    steering, so each steering sample carries one admissible interval,
    solved exactly. An empty set is a valid result.
    """
    if n_steer < 2:
        raise UsageError("n_steer must be at least 2")
    z = np.asarray(z, dtype=np.float64)
    params_a, params_b = _params_pair(params)
    q = value_at(value, z, t)
    cb = scaled_bounds(bounds, (z[3], z[4]), params)
    if not (
        cb.accel_b[0] - 1e-9 <= u_b[0] <= cb.accel_b[1] + 1e-9
        and cb.steer_b[0] - 1e-9 <= u_b[1] <= cb.steer_b[1] + 1e-9
    ):
        raise UsageError("u_b lies outside B's admissible box")

    a_lo, a_hi = cb.accel_a
    steer = np.linspace(cb.steer_a[0], cb.steer_a[1], n_steer)
    lo_out = np.full(n_steer, np.nan)
    hi_out = np.full(n_steer, np.nan)
    p = q.gradient
    c = p[3]  # constraint slope in A's saturated acceleration
    w_lo, w_hi = _sat_interval(a_lo, a_hi, z[3], params_a)
    for k, d in enumerate(steer):
        base = q.dvdt + float(p @ relative_flow(z, (0.0, d), u_b, params))
        # relative slack so exactly-critical (e.g. flat-field) queries do
        # not flip on rounding noise in the interpolated gradient
        tol = 1e-9 * (
            1.0
            + abs(q.dvdt)
            + abs(base - q.dvdt)
            + abs(c) * max(abs(w_lo), abs(w_hi))
        )
        shifted = base + tol
        if c > 0.0:
            w_adm = (max(w_lo, -shifted / c), w_hi)
        elif c < 0.0:
            w_adm = (w_lo, min(w_hi, -shifted / c))
        else:
            w_adm = (w_lo, w_hi) if shifted >= 0.0 else None
        if w_adm is not None and w_adm[0] <= w_adm[1]:
            span = _unsat_interval(*w_adm, a_lo, a_hi, z[3], params_a)
            if span is not None:
                lo_out[k], hi_out[k] = span
    return SafetyControlSet(steer=steer, accel_lo=lo_out, accel_hi=hi_out, query=q)


@dataclass(frozen=True)
class FilterOutcome:
    """Filter decision: the control to apply and how it was obtained.

    status is "pass" (desired control already preserves safety),
    "projected" (nearest admissible control substituted), or
    "best_effort" (preserving set empty; extremal control returned).
    """

    control: tuple[float, float]
    status: str
    query: SafetyQueryResult


def safety_filter(
    value: ValueFunction,
    z,
    t: float,
    u_desired,
    u_b,
    bounds,
    game,
    params,
    n_steer: int = 64,
) -> FilterOutcome:
    """Least-restrictive override of u_desired.

    Passes the desired control through when it already satisfies the
    preserving inequality (checked directly, not through the sampled
    representation); otherwise substitutes the admissible control of
    minimum squared (accel, steer) deviation over the sampled set, or
    the extremal control when nothing is admissible.
    """
    z = np.asarray(z, dtype=np.float64)
    sset = safety_preserving_set(value, z, t, u_b, bounds, game, params, n_steer)
    q = sset.query
    cb = scaled_bounds(bounds, (z[3], z[4]), params)
    a_des, d_des = float(u_desired[0]), float(u_desired[1])

    inside = (
        cb.accel_a[0] - 1e-12 <= a_des <= cb.accel_a[1] + 1e-12
        and cb.steer_a[0] - 1e-12 <= d_des <= cb.steer_a[1] + 1e-12
    )
    if inside:
        rate = q.dvdt + float(q.gradient @ relative_flow(z, u_desired, u_b, params))
        if rate >= -1e-9 * (1.0 + abs(q.dvdt) + abs(rate - q.dvdt)):
            return FilterOutcome((a_des, d_des), "pass", q)

    if not sset.empty:
        best = None
        for k in range(sset.steer.size):
            lo = sset.accel_lo[k]
            if math.isnan(lo):
                continue
            a = min(max(a_des, lo), sset.accel_hi[k])
            dist = (a - a_des) ** 2 + (sset.steer[k] - d_des) ** 2
            if best is None or dist < best[0]:
                best = (dist, (float(a), float(sset.steer[k])))
        return FilterOutcome(best[1], "projected", q)

    u_a, _ = optimal_controls(z, q.gradient, bounds, game, params)
    return FilterOutcome(u_a, "best_effort", q)


@dataclass(frozen=True)
class SimResult:
    """Closed-loop rollout record.

    elapsed holds forward simulation times s in [0, T_sim]; the value
    trace entry k is V(states[k], -(T_sim - s_k)). truncated marks an
    early stop when the state left the grid.
    """

    elapsed: np.ndarray
    states: np.ndarray
    trace: np.ndarray
    truncated: bool


def simulate(
    z0, policy_a, policy_b, dt: float, t_sim: float, value: ValueFunction, params
) -> SimResult:
    """RK4 closed-loop rollout of the relative dynamics.

    Policies are callables (z, t) -> (accel, steer), sampled once per
    step (zero-order hold). The trace records V along the path at the
    matching backward times, so under safety-preserving play it should
    never dip below the numerical tolerance band.
    """
    if not dt > 0:
        raise UsageError("dt must be positive")
    if not t_sim > 0:
        raise UsageError("simulation horizon must be positive")
    if t_sim > value.horizon + _TIME_TOL and not value.converged:
        raise UsageError("simulation horizon exceeds the stored value horizon")

    n = math.ceil(t_sim / dt)
    h = t_sim / n
    z = np.asarray(z0, dtype=np.float64).copy()

    elapsed = [0.0]
    states = [z.copy()]
    q = value_at(value, z, -t_sim)
    trace = [q.value]
    truncated = q.oob
    if not truncated:
        for k in range(n):
            t_k = -(t_sim - k * h)
            u_a = policy_a(z, t_k)
            u_b = policy_b(z, t_k)

            def f(y):
                return relative_flow(y, u_a, u_b, params)

            k1 = f(z)
            k2 = f(z + 0.5 * h * k1)
            k3 = f(z + 0.5 * h * k2)
            k4 = f(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            s = (k + 1) * h
            q = value_at(value, z, -(t_sim - s))
            elapsed.append(s)
            states.append(z.copy())
            trace.append(q.value)
            if q.oob:
                truncated = True
                break

    return SimResult(
        elapsed=np.asarray(elapsed),
        states=np.vstack(states),
        trace=np.asarray(trace),
        truncated=truncated,
    )


def constant_policy(u):
    """Policy closure returning the same control at every step."""
    u = (float(u[0]), float(u[1]))

    def policy(z, t):
        return u

    return policy


def extremal_policies(value: ValueFunction, bounds, game, params):
    """Policy pair playing the game extremizers of the stored value."""

    def pol_a(z, t):
        return optimal_pair(value, z, t, bounds, game, params)[0]

    def pol_b(z, t):
        return optimal_pair(value, z, t, bounds, game, params)[1]

    return pol_a, pol_b
