"""Numerical laboratory for semilinear Schrodinger boundary value problems
with boundary-singular potentials and measure data."""

from .grid import GridDomain, Strip, Exhaustion, build_domain, build_exhaustion, extract_strip
from .hardy import (
    Potential,
    build_hardy_potential,
    check_form_inequality,
    estimate_hardy_constant,
)
from .measures import (
    BoundaryMeasure,
    InteriorMeasure,
    MeasureCouple,
    couple_leq,
    diffuse_concentrated_split,
    jordan_split,
    restrict,
)
from .reduced import (
    ReducedResult,
    reduced_boundary,
    reduced_couple,
    reduced_signed,
    verify_independence,
    verify_l1_convergence,
    verify_lattice,
    verify_positive_part_characterization,
    verify_sandwich_goodness,
)
from .semilinear import (
    Nonlinearity,
    SolveOptions,
    SolveResult,
    exponential_nonlinearity,
    kato_check,
    linear_nonlinearity,
    make_nonlinearity,
    positive_power_nonlinearity,
    power_nonlinearity,
    reflect,
    solve_bvp,
    solve_by_exhaustion,
    truncate,
    zero_nonlinearity,
)
from .spectral import (
    GreenOperator,
    MartinOperator,
    OperatorLV,
    SpectralData,
    Workspace,
    build_workspace,
    check_ground_state_boundary,
    ground_state,
    verify_weighted_estimates,
)
from .trace import TraceReport, check_trace_equivalence, trace_lv, trace_normalized

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
