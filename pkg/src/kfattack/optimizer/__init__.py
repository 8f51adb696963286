"""Attack-design solvers for the trace and determinant objectives."""

from .determinant import (
    DetQuadratic,
    PvDetMultiSolution,
    WaterfillSolution,
    det_objective,
    det_pv_multi,
    det_pv_multi_objective,
    det_pv_single_waterfill,
    det_quadratic,
    det_total,
    waterfill,
)
from .multitime import multitime_objective, time_coefficients, trace_multitime
from .position import (
    TraceSolutionPosition,
    det_position,
    equal_split_correlated,
    fused_variance,
    trace_position_correlated,
    trace_position_independent,
)
from .pv import (
    PvGainCoefficients,
    PvMultiSolution,
    pv_coefficients,
    pv_trace_gain,
    trace_pv_multi,
    trace_pv_multi_eigen,
    trace_pv_multi_objective,
    trace_pv_single,
)

__all__ = [name for name in dir() if not name.startswith("_")]
