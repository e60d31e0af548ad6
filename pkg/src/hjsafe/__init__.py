"""Grid-based Hamilton-Jacobi reachability for two-vehicle collision avoidance."""

__version__ = "0.1.0"

from .concepts import (
    SafetyConceptSpec,
    Scenario,
    build,
    rollout_value,
    rss_closed_form,
    run_concept,
)
from .dynamics import (
    AgentBounds,
    Braking2D,
    CarParams,
    ControlBounds,
    GameConfig,
    TwoCarModel,
    hamiltonian,
    optimal_controls,
    relative_flow,
    scaled_bounds,
)
from .errors import CflError, ConfigError, NumericalError, UsageError
from .geometry import BodyDims, build_ell_field, signed_distance_rect
from .grid import GridSpec, ScalarField, interpolate, one_sided_gradients, state_to_index
from .runtime import (
    constant_policy,
    extremal_policies,
    optimal_pair,
    safety_filter,
    safety_preserving_set,
    simulate,
    value_at,
)
from .solver import (
    SolveConfig,
    ValueFunction,
    content_hash,
    dilate_mask,
    solve_reach_avoid,
    solve_tube,
    unsafe_set,
)

__all__ = [
    "CflError",
    "ConfigError",
    "NumericalError",
    "UsageError",
    "GridSpec",
    "ScalarField",
    "interpolate",
    "one_sided_gradients",
    "state_to_index",
    "BodyDims",
    "build_ell_field",
    "signed_distance_rect",
    "AgentBounds",
    "Braking2D",
    "CarParams",
    "ControlBounds",
    "GameConfig",
    "TwoCarModel",
    "hamiltonian",
    "optimal_controls",
    "relative_flow",
    "scaled_bounds",
    "SolveConfig",
    "ValueFunction",
    "content_hash",
    "dilate_mask",
    "solve_reach_avoid",
    "solve_tube",
    "unsafe_set",
    "SafetyConceptSpec",
    "Scenario",
    "build",
    "rollout_value",
    "rss_closed_form",
    "run_concept",
    "constant_policy",
    "extremal_policies",
    "optimal_pair",
    "safety_filter",
    "safety_preserving_set",
    "simulate",
    "value_at",
]
