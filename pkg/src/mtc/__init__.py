"""Controllability of linear multitime PDE systems ``dx/dt^a = M_a x + N_a u_a``."""

__version__ = "0.1.0"

from .control import (  # noqa: E402
    FunctionalSpec,
    GramianControl,
    MinResult,
    TransferPlan,
    extended_functional,
    functional_value,
    functional_value_dual,
    minimize_functional,
    plan_transfer,
    synthesize_control,
    verify_transfer,
)
from .curves import (  # noqa: E402
    MonotoneProfile,
    PiecewiseCurve,
    curve_from_spec,
    increasing_family,
    is_monotone,
    monotone_curve,
    monotone_family,
    reverse,
    segment_curve,
    staircase_curve,
)
from .defaults import DEFAULT_TOLERANCES, Tolerances  # noqa: E402
from .demos import list_scenarios, run_scenario  # noqa: E402
from .expressions import diff_expr, eval_expr, parse_expr  # noqa: E402
from .gramian import (  # noqa: E402
    GramianResult,
    Subspace,
    curve_gramian,
    im_gramian_space,
    image_subspace,
    intersect_subspaces,
    kernel_vanishing,
    path_independence_check,
    reversal_check,
    w_flow_check,
)
from .propagator import (  # noqa: E402
    Phase,
    PropagatorConfig,
    compose_check,
    fundamental_matrix,
    propagate,
    solve_state,
)
from .system import (  # noqa: E402
    MultitimeSystem,
    ResidualReport,
    check_control,
    check_II4,
    check_II6,
    load_system,
)
