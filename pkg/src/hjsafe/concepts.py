"""Named safety concepts as parameterizations of one backward solve.

Every concept answers "is this relative state safe" by thresholding a
value function, but they disagree about who optimizes what: the game
roles, the admissible control sets, the boundary scalar, and whether
the question is avoidance (tube) or guaranteed stopping (reach-avoid).
This module maps each named concept to those four choices and hands the
result to the solver unchanged, so concepts differ only in
configuration, never in numerics.

Kinds:
  worst_case       A max vs B min over full feasible sets.
  frs              both min: unsafe iff forward-reachable sets overlap.
  sff              both min over restricted stopping procedures.
  rss              two decoupled singleton-control solves (longitudinal
                   gap chart and lateral offset chart); unsafe is the
                   intersection of the per-chart unsafe sets.
  contingency      reach-avoid: A seeks a near-stop speed while staying
                   out of collision against an assumed B behavior.
  constant_motion  both agents pinned to their current controls.
  custom           explicit game/bounds/boundary combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import (
    AgentBounds,
    CarParams,
    ControlBounds,
    GameConfig,
    RssLateral,
    RssLongitudinal,
    TwoCarModel,
)
from .errors import ConfigError, UsageError
from .geometry import BodyDims, SeverityShape, build_ell_field
from .grid import GridSpec, ScalarField
from .solver import SolveConfig, ValueFunction, solve_reach_avoid, solve_tube

KINDS = (
    "worst_case",
    "frs",
    "sff",
    "rss",
    "contingency",
    "constant_motion",
    "custom",
)

B_MODELS = ("maintain", "brake", "adversarial")


@dataclass(frozen=True)
class Scenario:
    """Physical setting shared by every concept: grid, cars, base sets."""

    grid: GridSpec
    params_a: CarParams = CarParams()
    params_b: CarParams = CarParams()
    bounds: ControlBounds | None = None
    dims_a: BodyDims = field(default_factory=BodyDims)
    dims_b: BodyDims = field(default_factory=BodyDims)
    shape: SeverityShape | None = None

    def full_bounds(self) -> ControlBounds:
        if self.bounds is not None:
            return self.bounds
        return ControlBounds(
            AgentBounds(self.params_a.accel, self.params_a.steer),
            AgentBounds(self.params_b.accel, self.params_b.steer),
        )


@dataclass(frozen=True)
class SafetyConceptSpec:
    """Which concept to build, plus its kind-specific parameters.

    Fields irrelevant to the chosen kind keep their defaults; build()
    checks that everything the kind needs is present and consistent.
    """

    kind: str
    game: GameConfig | None = None  # custom only
    bounds: ControlBounds | None = None  # full-set override where applicable
    mode: str | None = None  # custom only; presets fix their own
    ell_field: ScalarField | None = None  # custom boundary override
    # stopping-procedure family: accel in [b_hard, b_soft], steering
    # shrunk to a fraction of the feasible interval
    sff_brake: tuple[float, float] = (-8.0, -2.0)
    sff_steer_frac: float = 0.25
    rss_decel_a: float = -4.0
    rss_decel_b: float = -4.0
    rss_lat_decel: float = 2.0
    rss_lat_vmax: float = 5.0
    rss_long_grid: GridSpec | None = None
    rss_lat_grid: GridSpec | None = None
    contingency_v_stop: float = 0.5
    contingency_b_model: str = "maintain"
    contingency_b_decel: float = -4.0
    const_steer_a: float = 0.0
    const_steer_b: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown concept kind {self.kind!r}")
        if self.mode is not None and self.mode not in ("tube", "reach_avoid"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        b_hard, b_soft = self.sff_brake
        if not (b_hard <= b_soft < 0):
            raise ConfigError("sff_brake must satisfy b_hard <= b_soft < 0")
        if not 0.0 <= self.sff_steer_frac <= 1.0:
            raise ConfigError("sff_steer_frac must lie in [0, 1]")
        if self.rss_decel_a >= 0 or self.rss_decel_b >= 0:
            raise ConfigError("rss decelerations must be negative")
        if self.rss_lat_decel <= 0 or self.rss_lat_vmax <= 0:
            raise ConfigError("rss lateral decel and speed bound must be positive")
        if self.contingency_b_model not in B_MODELS:
            raise ConfigError(
                f"contingency_b_model must be one of {B_MODELS}"
            )
        if self.contingency_b_model == "brake" and self.contingency_b_decel >= 0:
            raise ConfigError("contingency_b_decel must be negative")


@dataclass(frozen=True)
class SolveJob:
    """One solver invocation: model, boundary, optional obstacle, config.

    chart names how a relative state maps onto this job's grid:
    "identity" for the full 5-D pose grid, "longitudinal" for
    (gap, v_A, v_B), "lateral" for (offset, lateral speed).
    """

    name: str
    model: object
    ell: ScalarField
    config: SolveConfig
    avoid: ScalarField | None = None
    chart: str = "identity"


@dataclass(frozen=True)
class ConceptBuild:
    """Everything needed to run and later query one safety concept."""

    kind: str
    jobs: tuple[SolveJob, ...]
    combine: str  # "single" | "intersection"
    unsafe_below_zero: bool
    long_clearance: float = 0.0

    def job(self, name: str) -> SolveJob:
        for j in self.jobs:
            if j.name == name:
                return j
        raise UsageError(f"no job named {name!r}")


@dataclass(frozen=True)
class ConceptResult:
    """Solved concept: one value function per job plus combine metadata."""

    build: ConceptBuild
    values: dict[str, ValueFunction]

    @property
    def kind(self) -> str:
        return self.build.kind

    @property
    def unsafe_below_zero(self) -> bool:
        return self.build.unsafe_below_zero


def chart_state(name: str, z, long_clearance: float = 0.0) -> np.ndarray:
    """Map a 5-D relative state onto a job's chart coordinates.

    The lateral chart reads the sideways closing speed off the heading
    difference (straight-lane approximation, A's own turning ignored).
    """
    z = np.asarray(z, dtype=np.float64)
    if name == "identity":
        return z
    if z.shape[-1] != 5:
        raise UsageError("chart projections expect 5-D relative states")
    if name == "longitudinal":
        return np.stack(
            [z[..., 0] - long_clearance, z[..., 3], z[..., 4]], axis=-1
        )
    if name == "lateral":
        return np.stack(
            [z[..., 1], z[..., 4] * np.sin(z[..., 2])], axis=-1
        )
    raise UsageError(f"unknown chart {name!r}")


def _collision_field(scenario: Scenario) -> ScalarField:
    return build_ell_field(
        scenario.grid, scenario.dims_a, scenario.dims_b, scenario.shape
    )


def _reject_override(spec, kind, *fields):
    for name in fields:
        if getattr(spec, name) is not None:
            raise ConfigError(f"concept '{kind}' does not accept {name}")


def _pose_job(scenario, bounds, game, ell, config, avoid=None) -> SolveJob:
    model = TwoCarModel(
        scenario.grid, scenario.params_a, scenario.params_b, bounds, game
    )
    mode = "reach_avoid" if avoid is not None else "tube"
    return SolveJob(
        name="main",
        model=model,
        ell=ell,
        config=replace(config, mode=mode),
        avoid=avoid,
    )


def _build_full_set_game(spec, scenario, config, role_a):
    game = GameConfig(role_a=role_a, role_b="min")
    bounds = spec.bounds if spec.bounds is not None else scenario.full_bounds()
    return _pose_job(scenario, bounds, game, _collision_field(scenario), config)


def _build_sff(spec, scenario, config):
    _reject_override(spec, "sff", "bounds", "game")

    def procedures(params):
        lo, hi = params.steer
        f = spec.sff_steer_frac
        return AgentBounds(spec.sff_brake, (f * lo, f * hi))

    bounds = ControlBounds(
        procedures(scenario.params_a), procedures(scenario.params_b)
    )
    game = GameConfig(role_a="min", role_b="min")
    return _pose_job(scenario, bounds, game, _collision_field(scenario), config)


def _build_constant_motion(spec, scenario, config):
    _reject_override(spec, "constant_motion", "bounds", "game")

    def pinned(params, steer):
        lo, hi = params.steer
        if not lo <= steer <= hi:
            raise ConfigError(
                f"pinned steering {steer} outside the feasible interval"
            )
        return AgentBounds((0.0, 0.0), (steer, steer))

    bounds = ControlBounds(
        pinned(scenario.params_a, spec.const_steer_a),
        pinned(scenario.params_b, spec.const_steer_b),
    )
    game = GameConfig(role_a="min", role_b="min")
    return _pose_job(scenario, bounds, game, _collision_field(scenario), config)


def _build_contingency(spec, scenario, config):
    grid = scenario.grid
    v_lo, v_hi = grid.lo[3], grid.hi[3]
    if not v_lo < spec.contingency_v_stop <= v_hi:
        raise ConfigError(
            "contingency_v_stop must leave a nonempty sub-stop region on the grid"
        )
    full = spec.bounds if spec.bounds is not None else scenario.full_bounds()
    if spec.contingency_b_model == "maintain":
        agent_b = AgentBounds((0.0, 0.0), (0.0, 0.0))
        role_b = "min"
    elif spec.contingency_b_model == "brake":
        b = spec.contingency_b_decel
        agent_b = AgentBounds((b, b), (0.0, 0.0))
        role_b = "min"
    else:  # adversarial: B fights the stopping attempt
        agent_b = full.agent_b
        role_b = "max"
    bounds = ControlBounds(full.agent_a, agent_b)
    game = GameConfig(role_a="min", role_b=role_b)

    v_a = grid.axis(3).reshape(1, 1, 1, -1, 1)
    reach = np.broadcast_to(v_a - spec.contingency_v_stop, grid.shape)
    ell = ScalarField(grid, reach.ravel())
    return _pose_job(
        scenario, bounds, game, ell, config, avoid=_collision_field(scenario)
    )


def _default_long_grid(scenario: Scenario, clearance: float) -> GridSpec:
    g = scenario.grid
    gap_hi = g.hi[0] - clearance
    if gap_hi <= 0:
        raise ConfigError("grid x-range too small for the body clearance")
    return GridSpec(
        (0.0, g.lo[3], g.lo[4]),
        (gap_hi, g.hi[3], g.hi[4]),
        (g.counts[0], g.counts[3], g.counts[4]),
        (False, False, False),
        names=("gap", "v_a", "v_b"),
    )


def _default_lat_grid(scenario: Scenario, vmax: float) -> GridSpec:
    g = scenario.grid
    return GridSpec(
        (g.lo[1], -vmax),
        (g.hi[1], vmax),
        (g.counts[1], 21),
        (False, False),
        names=("y", "vy"),
    )


def _build_rss(spec, scenario, config):
    _reject_override(spec, "rss", "bounds", "game")
    long_clear = 0.5 * (scenario.dims_a.length + scenario.dims_b.length)
    lat_clear = 0.5 * (scenario.dims_a.width + scenario.dims_b.width)

    long_grid = spec.rss_long_grid or _default_long_grid(scenario, long_clear)
    lat_grid = spec.rss_lat_grid or _default_lat_grid(scenario, spec.rss_lat_vmax)

    gap = long_grid.axis(0).reshape(-1, 1, 1)
    ell_long = ScalarField(
        long_grid, np.broadcast_to(gap, long_grid.shape).ravel()
    )
    y = lat_grid.axis(0).reshape(-1, 1)
    ell_lat = ScalarField(
        lat_grid, np.broadcast_to(np.abs(y) - lat_clear, lat_grid.shape).ravel()
    )
    cfg = replace(config, mode="tube")
    jobs = (
        SolveJob(
            name="longitudinal",
            model=RssLongitudinal(long_grid, spec.rss_decel_a, spec.rss_decel_b),
            ell=ell_long,
            config=cfg,
            chart="longitudinal",
        ),
        SolveJob(
            name="lateral",
            model=RssLateral(lat_grid, spec.rss_lat_decel),
            ell=ell_lat,
            config=cfg,
            chart="lateral",
        ),
    )
    return jobs, long_clear


def _build_custom(spec, scenario, config):
    if spec.game is None:
        raise ConfigError("concept 'custom' requires game")
    bounds = spec.bounds if spec.bounds is not None else scenario.full_bounds()
    mode = spec.mode or "tube"
    collision = _collision_field(scenario)
    if mode == "tube":
        ell = spec.ell_field if spec.ell_field is not None else collision
        if ell.grid != scenario.grid:
            raise ConfigError("ell_field must live on the scenario grid")
        return _pose_job(scenario, bounds, spec.game, ell, config)
    if spec.ell_field is None:
        raise ConfigError("concept 'custom' in reach_avoid mode requires ell_field")
    if spec.ell_field.grid != scenario.grid:
        raise ConfigError("ell_field must live on the scenario grid")
    return _pose_job(
        scenario, bounds, spec.game, spec.ell_field, config, avoid=collision
    )


def build(spec: SafetyConceptSpec, scenario: Scenario, config: SolveConfig) -> ConceptBuild:
    """Resolve a concept into concrete solver inputs.

    The returned jobs carry their own SolveConfig copies with the mode
    the concept demands; the caller's config supplies horizon, CFL,
    integrator, and snapshot settings.
    """
    kind = spec.kind
    if kind == "worst_case":
        jobs = (_build_full_set_game(spec, scenario, config, "max"),)
    elif kind == "frs":
        jobs = (_build_full_set_game(spec, scenario, config, "min"),)
    elif kind == "sff":
        jobs = (_build_sff(spec, scenario, config),)
    elif kind == "constant_motion":
        jobs = (_build_constant_motion(spec, scenario, config),)
    elif kind == "contingency":
        jobs = (_build_contingency(spec, scenario, config),)
    elif kind == "custom":
        jobs = (_build_custom(spec, scenario, config),)
    else:  # rss
        jobs, long_clear = _build_rss(spec, scenario, config)
        return ConceptBuild(
            kind=kind,
            jobs=jobs,
            combine="intersection",
            unsafe_below_zero=True,
            long_clearance=long_clear,
        )
    return ConceptBuild(
        kind=kind,
        jobs=jobs,
        combine="single",
        unsafe_below_zero=kind != "contingency",
    )


def run_concept(build: ConceptBuild) -> ConceptResult:
    """Solve every job of a built concept."""
    values = {}
    for job in build.jobs:
        if job.config.mode == "reach_avoid":
            values[job.name] = solve_reach_avoid(
                job.ell, job.avoid, job.model, job.config
            )
        else:
            values[job.name] = solve_tube(job.ell, job.model, job.config)
    return ConceptResult(build=build, values=values)


def rollout_value(z0, model, ell: Callable, horizon: float, dt: float) -> float:
    """Minimum of ell along the pinned-control trajectory from z0.

    Integrates the model's singleton-control flow with classical RK4 at
    step dt and takes the running minimum of ell over all sample points
    (including z0 itself, so a state already in collision returns its
    own boundary value). Serves as the PDE-free oracle for concepts
    whose control sets are singletons.
    """
    if not horizon > 0:
        raise UsageError("horizon must be positive")
    if not 0 < dt <= horizon:
        raise UsageError("dt must lie in (0, horizon]")
    flow = getattr(model, "flow_pinned", None)
    if flow is None:
        raise UsageError("model does not expose a pinned flow")
    n = math.ceil(horizon / dt)
    h = horizon / n
    z = np.asarray(z0, dtype=np.float64).copy()
    best = float(ell(z))
    for _ in range(n):
        k1 = flow(z)
        k2 = flow(z + 0.5 * h * k1)
        k3 = flow(z + 0.5 * h * k2)
        k4 = flow(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        best = min(best, float(ell(z)))
    return best


class RssVerdict(NamedTuple):
    unsafe: bool
    gap_crit: float


def rss_closed_form(v_a: float, v_b: float, decels, gap: float) -> RssVerdict:
    """Kinematic critical gap for simultaneous fixed-rate braking.

    A follows B with the given free gap; both brake at their fixed
    (negative) decelerations until standstill. The critical gap is the
    largest closure of the initial separation over the whole episode,
    so the pair is unsafe exactly when gap < gap_crit (a grazing
    contact at zero clearance counts as safe).
    """
    b_a, b_b = decels
    if b_a >= 0 or b_b >= 0:
        raise UsageError("decelerations must be negative")
    if v_a < 0 or v_b < 0:
        raise UsageError("speeds must be non-negative")

    t_a = v_a / -b_a
    t_b = v_b / -b_b

    def pos(v, b, t_stop, t):
        if t >= t_stop:
            return v * t_stop + 0.5 * b * t_stop * t_stop
        return v * t + 0.5 * b * t * t

    def closure(t):
        return pos(v_a, b_a, t_a, t) - pos(v_b, b_b, t_b, t)

    candidates = [t_a, t_b]
    if b_a != b_b:
        t_star = (v_a - v_b) / (b_b - b_a)
        if 0.0 < t_star < min(t_a, t_b):
            candidates.append(t_star)
    gap_crit = max(0.0, max(closure(t) for t in candidates))
    return RssVerdict(unsafe=gap < gap_crit, gap_crit=gap_crit)
