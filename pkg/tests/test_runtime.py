"""Online queries: interpolation, control sets, filter, closed loop."""

import math

import numpy as np
import pytest

from hjsafe.concepts import SafetyConceptSpec, Scenario, build, run_concept
from hjsafe.dynamics import (
    Advection1D,
    CarParams,
    ControlBounds,
    GameConfig,
    optimal_controls,
    relative_flow,
    scaled_bounds,
)
from hjsafe.errors import UsageError
from hjsafe.grid import GridSpec, ScalarField, interpolate
from hjsafe.runtime import (
    SafetyControlSet,
    constant_policy,
    extremal_policies,
    optimal_pair,
    safety_filter,
    safety_preserving_set,
    simulate,
    value_at,
)
from hjsafe.solver import SolveConfig, ValueFunction, solve_tube

from oracles import control_grid, dot_flow_matrix, game_value

PARAMS = CarParams()
BOUNDS = ControlBounds.from_params(PARAMS)
GAME = GameConfig("max", "min")


# --- fixtures ---------------------------------------------------------------


@pytest.fixture(scope="module")
def advected():
    """1-D transport of a linear boundary: V(x, t) = x - 4 + t exactly."""
    grid = GridSpec((0.0,), (10.0,), (101,), (False,))
    ell = ScalarField(grid, grid.axis(0) - 4.0)
    model = Advection1D(grid, speed=-1.0)
    return solve_tube(ell, model, SolveConfig(horizon=1.0, snapshot_stride=1))


def two_car_grid():
    return GridSpec(
        (-12.0, -6.0, -np.pi, 0.0, 0.0),
        (12.0, 6.0, np.pi, 15.0, 15.0),
        (9, 7, 8, 5, 5),
        (False, False, True, False, False),
    )


@pytest.fixture(scope="module")
def worst_case():
    """Coarse adversarial solve used for self-consistency checks."""
    cb = build(
        SafetyConceptSpec(kind="worst_case"),
        Scenario(grid=two_car_grid()),
        SolveConfig(horizon=0.6, snapshot_stride=1),
    )
    return run_concept(cb).values["main"]


@pytest.fixture(scope="module")
def mid_case():
    """Finer solve for closed-loop runs, where gradient quality matters."""
    grid = GridSpec(
        (-12.0, -6.0, -np.pi, 0.0, 0.0),
        (12.0, 6.0, np.pi, 15.0, 15.0),
        (21, 13, 12, 7, 7),
        (False, False, True, False, False),
    )
    cb = build(
        SafetyConceptSpec(kind="worst_case"),
        Scenario(grid=grid),
        SolveConfig(horizon=0.8),
    )
    return run_concept(cb).values["main"]


def flat_value(level=10.0, times=(-0.5, -0.25, 0.0)):
    grid = two_car_grid()
    f = ScalarField(grid, np.full(grid.num_points, level))
    return ValueFunction(grid, list(times), [f] * len(times))


def random_states(rng, grid, n):
    lo = np.asarray(grid.lo) + 0.25 * np.asarray(grid.spacing)
    hi = np.asarray(grid.hi) - 0.25 * np.asarray(grid.spacing)
    return rng.uniform(lo, hi, size=(n, grid.ndim))


def random_u_b(rng, z):
    cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
    return (
        rng.uniform(*cb.accel_b),
        rng.uniform(*cb.steer_b),
    )


def direct_rate(q, z, u_a, u_b):
    return q.dvdt + float(q.gradient @ relative_flow(z, u_a, u_b, PARAMS))


# --- value_at ---------------------------------------------------------------


class TestValueAt:
    def test_stored_node_exact(self, advected):
        grid = advected.grid
        for k in (0, 7, len(advected.times) - 1):
            x = grid.axis(0)[50]
            got = value_at(advected, [x], float(advected.times[k]))
            assert got.value == advected.fields[k].values[50]

    def test_boundary_time_is_ell(self, advected):
        q = value_at(advected, [3.3], 0.0)
        assert q.value == pytest.approx(3.3 - 4.0, abs=1e-12)
        assert q.unsafe

    def test_linear_in_time_between_snapshots(self, advected):
        rng = np.random.default_rng(7)
        for _ in range(40):
            x = rng.uniform(2.0, 8.0)
            t = rng.uniform(-1.0, 0.0)
            q = value_at(advected, [x], t)
            assert q.value == pytest.approx(x - 4.0 + t, abs=1e-9)

    def test_gradient_exact_on_linear_field(self, advected):
        for x in (1.0, 4.05, 8.9):
            q = value_at(advected, [x], -0.3)
            assert q.gradient[0] == pytest.approx(1.0, abs=1e-9)

    def test_dvdt_all_regimes(self, advected):
        times = advected.times
        mid = len(times) // 2
        for t in (0.0, float(times[0]), float(times[mid]),
                  0.5 * (times[mid] + times[mid + 1])):
            q = value_at(advected, [5.0], float(t))
            assert q.dvdt == pytest.approx(1.0, abs=1e-9)

    def test_time_range_errors(self, advected):
        with pytest.raises(UsageError):
            value_at(advected, [5.0], 0.1)
        with pytest.raises(UsageError):
            value_at(advected, [5.0], -1.5)

    def test_converged_clamps_early_times(self):
        grid = GridSpec((0.0,), (10.0,), (11,), (False,))
        f0 = ScalarField(grid, grid.axis(0) - 6.0)
        f1 = ScalarField(grid, grid.axis(0) - 4.0)
        vf = ValueFunction(grid, [-1.0, 0.0], [f0, f1], converged=True)
        q = value_at(vf, [3.0], -50.0)
        assert q.value == pytest.approx(-3.0, abs=1e-12)

    def test_oob_flag(self, advected):
        assert value_at(advected, [-1.0], -0.2).oob
        assert not value_at(advected, [5.0], -0.2).oob

    def test_bad_state_shape(self, advected):
        with pytest.raises(UsageError):
            value_at(advected, [1.0, 2.0], -0.2)

    def test_unsafe_iff_negative(self, worst_case):
        rng = np.random.default_rng(3)
        for z in random_states(rng, worst_case.grid, 60):
            q = value_at(worst_case, z, rng.uniform(-worst_case.horizon, 0.0))
            assert q.unsafe == (q.value < 0.0)

    def test_lipschitz_bound(self, worst_case):
        grid = worst_case.grid
        slopes = np.zeros(grid.ndim)
        for f in worst_case.fields:
            shaped = f.values.reshape(grid.shape)
            for i in range(grid.ndim):
                d = np.abs(np.diff(shaped, axis=i)).max() / grid.spacing[i]
                slopes[i] = max(slopes[i], d)
        rng = np.random.default_rng(11)
        pts = random_states(rng, grid, 200)
        for z in pts:
            t = rng.uniform(-worst_case.horizon, 0.0)
            dz = rng.uniform(-1.0, 1.0, grid.ndim) * 0.1 * np.asarray(grid.spacing)
            a = value_at(worst_case, z, t).value
            b = value_at(worst_case, z + dz, t).value
            assert abs(a - b) <= float(slopes @ np.abs(dz)) * (1 + 1e-9) + 1e-12


# --- optimal_pair -----------------------------------------------------------


class TestOptimalPair:
    def test_delegates_to_extremizers(self, worst_case):
        rng = np.random.default_rng(5)
        for z in random_states(rng, worst_case.grid, 50):
            t = rng.uniform(-worst_case.horizon, 0.0)
            u_a, u_b = optimal_pair(worst_case, z, t, BOUNDS, GAME, PARAMS)
            q = value_at(worst_case, z, t)
            want = optimal_controls(z, q.gradient, BOUNDS, GAME, PARAMS)
            assert (u_a, u_b) == want

    def test_matches_control_grid_game(self, worst_case):
        rng = np.random.default_rng(9)
        for z in random_states(rng, worst_case.grid, 40):
            t = rng.uniform(-worst_case.horizon, 0.0)
            q = value_at(worst_case, z, t)
            u_a, u_b = optimal_pair(worst_case, z, t, BOUNDS, GAME, PARAMS)
            achieved = float(q.gradient @ relative_flow(z, u_a, u_b, PARAMS))
            cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
            m = dot_flow_matrix(
                z,
                q.gradient,
                control_grid(cb.accel_a, cb.steer_a),
                control_grid(cb.accel_b, cb.steer_b),
                PARAMS,
                PARAMS,
            )
            ref = game_value(m, "max", "min")
            assert achieved == pytest.approx(ref, abs=1e-9 * (1 + abs(ref)))


# --- safety_preserving_set --------------------------------------------------


class TestPreservingSet:
    def test_flat_safe_region_admits_everything(self):
        vf = flat_value()
        z = np.array([6.0, 3.0, 0.5, 7.0, 7.0])
        s = safety_preserving_set(vf, z, -0.1, (0.0, 0.0), BOUNDS, GAME, PARAMS)
        cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
        assert not s.empty
        assert np.allclose(s.accel_lo, cb.accel_a[0])
        assert np.allclose(s.accel_hi, cb.accel_a[1])
        assert s.contains((1.7, -0.21))
        assert not s.contains((1.7, 0.31))  # outside the steering box

    def test_slab_endpoints_satisfy_constraint(self, worst_case):
        rng = np.random.default_rng(21)
        for z in random_states(rng, worst_case.grid, 20):
            t = rng.uniform(-worst_case.horizon, 0.0)
            u_b = random_u_b(rng, z)
            s = safety_preserving_set(worst_case, z, t, u_b, BOUNDS, GAME, PARAMS)
            q = s.query
            for k in range(s.steer.size):
                if math.isnan(s.accel_lo[k]):
                    continue
                d = float(s.steer[k])
                for a in (float(s.accel_lo[k]), float(s.accel_hi[k])):
                    assert direct_rate(q, z, (a, d), u_b) >= -1e-6

    def test_extremal_control_decides_emptiness(self, worst_case):
        rng = np.random.default_rng(33)
        checked = 0
        for z in random_states(rng, worst_case.grid, 60):
            t = rng.uniform(-worst_case.horizon, 0.0)
            q = value_at(worst_case, z, t)
            u_a, u_b = optimal_controls(z, q.gradient, BOUNDS, GAME, PARAMS)
            s = safety_preserving_set(worst_case, z, t, u_b, BOUNDS, GAME, PARAMS)
            best = direct_rate(q, z, u_a, u_b)
            if best > 1e-6:
                assert s.contains(u_a)
                checked += 1
            elif best < -1e-6:
                assert s.empty
                checked += 1
        assert checked >= 40

    def test_membership_matches_direct_evaluation(self, worst_case):
        rng = np.random.default_rng(17)
        compared = 0
        for z in random_states(rng, worst_case.grid, 12):
            t = rng.uniform(-worst_case.horizon, 0.0)
            u_b = random_u_b(rng, z)
            s = safety_preserving_set(worst_case, z, t, u_b, BOUNDS, GAME, PARAMS)
            q = s.query
            cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
            acc = np.linspace(*cb.accel_a, 41)
            ste = np.linspace(*cb.steer_a, 41)
            want = np.empty((41, 41), dtype=bool)
            got = np.empty((41, 41), dtype=bool)
            for i, a in enumerate(acc):
                for j, d in enumerate(ste):
                    want[i, j] = direct_rate(q, z, (a, d), u_b) >= 0.0
                    got[i, j] = s.contains((a, d))
            # boundary cells: any 3x3 neighborhood with mixed verdicts
            interior = np.ones_like(want)
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    shifted = np.roll(np.roll(want, di, 0), dj, 1)
                    interior &= shifted == want
            interior[0, :] = interior[-1, :] = False
            interior[:, 0] = interior[:, -1] = False
            assert np.array_equal(got[interior], want[interior])
            compared += int(interior.sum())
        assert compared > 10000

    def test_u_b_outside_box_rejected(self, worst_case):
        z = np.array([2.0, 1.0, 0.3, 7.0, 7.0])
        with pytest.raises(UsageError):
            safety_preserving_set(worst_case, z, -0.1, (9.0, 0.0), BOUNDS, GAME, PARAMS)

    def test_n_steer_validation(self, worst_case):
        z = np.array([2.0, 1.0, 0.3, 7.0, 7.0])
        with pytest.raises(UsageError):
            safety_preserving_set(
                worst_case, z, -0.1, (0.0, 0.0), BOUNDS, GAME, PARAMS, n_steer=1
            )

    def test_velocity_rail_saturation(self):
        # static field increasing in v_a, state at the lower rail: braking
        # produces zero flow, so every a <= 0 is admissible but no a < 0
        # would be off the rail
        grid = two_car_grid()
        f = ScalarField(grid, np.broadcast_to(
            grid.axis(3)[None, None, None, :, None] - 8.0, grid.shape
        ))
        vf = ValueFunction(grid, [-0.5, 0.0], [f, f])
        z = np.array([6.0, 3.0, 0.5, 0.0, 7.0])
        s = safety_preserving_set(vf, z, -0.1, (0.0, 0.0), BOUNDS, GAME, PARAMS)
        assert not s.empty
        assert np.allclose(s.accel_lo, PARAMS.accel[0])
        assert np.allclose(s.accel_hi, PARAMS.accel[1])


# --- safety_filter ----------------------------------------------------------


class TestSafetyFilter:
    def test_pass_through(self):
        vf = flat_value()
        z = np.array([6.0, 3.0, 0.5, 7.0, 7.0])
        out = safety_filter(vf, z, -0.1, (1.0, 0.1), (0.0, 0.0), BOUNDS, GAME, PARAMS)
        assert out.status == "pass"
        assert out.control == (1.0, 0.1)

    def test_projection_is_nearest_sampled(self):
        grid = two_car_grid()
        f = ScalarField(grid, np.broadcast_to(
            grid.axis(3)[None, None, None, :, None] - 8.0, grid.shape
        ))
        vf = ValueFunction(grid, [-0.5, 0.0], [f, f])
        z = np.array([6.0, 3.0, 0.5, 7.0, 7.0])
        out = safety_filter(vf, z, -0.1, (-2.0, 0.1), (0.0, 0.0), BOUNDS, GAME, PARAMS)
        assert out.status == "projected"
        # admissible acceleration is [0, 3] at every steering sample, and
        # 0.1 lies exactly on the 64-point steering partition
        assert out.control[0] == pytest.approx(0.0, abs=1e-6)
        assert out.control[1] == pytest.approx(0.1, abs=1e-12)
        assert direct_rate(out.query, z, out.control, (0.0, 0.0)) >= -1e-6

    def test_projection_minimality(self, worst_case):
        rng = np.random.default_rng(41)
        seen = 0
        for z in random_states(rng, worst_case.grid, 60):
            t = rng.uniform(-worst_case.horizon, 0.0)
            u_b = random_u_b(rng, z)
            cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
            u_des = (rng.uniform(*cb.accel_a), rng.uniform(*cb.steer_a))
            out = safety_filter(vf := worst_case, z, t, u_des, u_b, BOUNDS, GAME, PARAMS)
            if out.status != "projected":
                continue
            seen += 1
            s = safety_preserving_set(vf, z, t, u_b, BOUNDS, GAME, PARAMS)
            found = (out.control[0] - u_des[0]) ** 2 + (out.control[1] - u_des[1]) ** 2
            for k in range(s.steer.size):
                if math.isnan(s.accel_lo[k]):
                    continue
                a = min(max(u_des[0], s.accel_lo[k]), s.accel_hi[k])
                dist = (a - u_des[0]) ** 2 + (s.steer[k] - u_des[1]) ** 2
                assert found <= dist + 1e-12
        assert seen >= 5

    def test_best_effort_when_empty(self):
        grid = two_car_grid()
        hi = ScalarField(grid, np.full(grid.num_points, 100.0))
        lo = ScalarField(grid, np.full(grid.num_points, -100.0))
        vf = ValueFunction(grid, [-0.5, 0.0], [hi, lo])
        z = np.array([6.0, 3.0, 0.5, 7.0, 7.0])
        out = safety_filter(vf, z, -0.1, (1.0, 0.0), (0.0, 0.0), BOUNDS, GAME, PARAMS)
        assert out.status == "best_effort"
        cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
        assert cb.accel_a[0] <= out.control[0] <= cb.accel_a[1]
        assert cb.steer_a[0] <= out.control[1] <= cb.steer_a[1]

    def test_output_always_inside_box(self, worst_case):
        rng = np.random.default_rng(55)
        for z in random_states(rng, worst_case.grid, 50):
            t = rng.uniform(-worst_case.horizon, 0.0)
            u_b = random_u_b(rng, z)
            u_des = (rng.uniform(-8.0, 8.0), rng.uniform(-0.6, 0.6))
            out = safety_filter(worst_case, z, t, u_des, u_b, BOUNDS, GAME, PARAMS)
            cb = scaled_bounds(BOUNDS, (z[3], z[4]), PARAMS)
            assert cb.accel_a[0] - 1e-9 <= out.control[0] <= cb.accel_a[1] + 1e-9
            assert cb.steer_a[0] - 1e-9 <= out.control[1] <= cb.steer_a[1] + 1e-9
            if out.status == "pass":
                assert out.control == u_des


# --- simulate ---------------------------------------------------------------


class TestSimulate:
    def test_zero_relative_motion_is_constant(self, worst_case):
        z0 = np.array([6.0, 3.0, 0.0, 7.5, 7.5])
        hold = constant_policy((0.0, 0.0))
        res = simulate(z0, hold, hold, 0.05, 0.5, worst_case, PARAMS)
        assert not res.truncated
        assert np.allclose(res.states, res.states[0], atol=1e-12)
        assert np.allclose(res.trace, res.trace[0], atol=1e-12)
        assert res.elapsed[-1] == pytest.approx(0.5)

    def test_truncates_on_grid_exit(self, worst_case):
        z0 = np.array([10.0, 0.0, 0.0, 0.0, 15.0])
        res = simulate(
            z0,
            constant_policy((-4.0, 0.0)),
            constant_policy((3.0, 0.0)),
            0.02,
            0.5,
            worst_case,
            PARAMS,
        )
        assert res.truncated
        assert res.elapsed[-1] < 0.5
        assert res.states.shape[0] == res.trace.size == res.elapsed.size

    def test_argument_validation(self, worst_case):
        z0 = np.zeros(5)
        with pytest.raises(UsageError):
            simulate(z0, constant_policy((0, 0)), constant_policy((0, 0)),
                     0.0, 0.5, worst_case, PARAMS)
        with pytest.raises(UsageError):
            simulate(z0, constant_policy((0, 0)), constant_policy((0, 0)),
                     0.05, -1.0, worst_case, PARAMS)
        with pytest.raises(UsageError):
            simulate(z0, constant_policy((0, 0)), constant_policy((0, 0)),
                     0.05, worst_case.horizon + 1.0, worst_case, PARAMS)

    def test_filtered_play_keeps_value_up(self, mid_case):
        # starts at least two local grid cells inside the safe region stay
        # at positive value under the filter, B playing its extremizer
        grid = mid_case.grid
        h = np.asarray(grid.spacing)
        _, pol_b = extremal_policies(mid_case, BOUNDS, GAME, PARAMS)

        def pol_a(z, t):
            out = safety_filter(
                mid_case, z, t, (3.0, 0.0), pol_b(z, t), BOUNDS, GAME, PARAMS
            )
            return out.control

        rng = np.random.default_rng(77)
        t_sim = 0.6
        starts = 0
        for z in random_states(rng, grid, 200):
            q = value_at(mid_case, z, -t_sim)
            margin = 2.0 * float(np.max(h * np.abs(q.gradient)))
            if q.oob or q.value < margin:
                continue
            res = simulate(z, pol_a, pol_b, 0.02, t_sim, mid_case, PARAMS)
            assert res.trace.min() > 0.0, f"value dipped from start {z}"
            starts += 1
            if starts >= 10:
                break
        assert starts >= 10

    def test_optimal_play_trace_consistent(self, mid_case):
        pol_a, pol_b = extremal_policies(mid_case, BOUNDS, GAME, PARAMS)
        z0 = np.array([-8.0, -2.0, 0.0, 6.0, 6.0])
        res = simulate(z0, pol_a, pol_b, 0.02, 0.6, mid_case, PARAMS)
        assert res.trace[0] == pytest.approx(
            value_at(mid_case, z0, -0.6).value, abs=1e-12
        )
        if not res.truncated:
            assert res.trace.size == len(res.elapsed) == 31
