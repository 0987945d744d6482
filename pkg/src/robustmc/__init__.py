"""Monte Carlo robustness analysis of uncertain control systems.

Confidence limits for binomial proportions, uniform sampling over
homogeneous uncertainty sets, probabilistic robustness margins and
robustness degradation curves with sample reuse.
"""

__version__ = "0.1.0"

from .binom import (ConfidenceBounds, Method, SampleSizeParams, TrialCounts, binomial_cdf,
                    clopper_pearson_limits, clopper_pearson_table, explicit_limits, explicit_table,
                    massart_tail_bound, normal_approx_limits, required_sample_size)
from .curve import (CurvePoint, DegradationCurve, GlobalStrategyResult, RadiusGrid, global_strategy,
                    sample_reuse_curve, separability_diagnostic)
from .margin import (IntervalEstimate, MarginParams, Verdict, estimate_margin, initial_interval,
                     probabilistic_bisection, probabilistic_comparison)
from .rng import RngStream
from .systems import (Compensator, DStability, NumericalError, PoleRegion, RobustnessProblem,
                      SimParams, Stability, TimeDomain, TimeSpec, UncertainPlant, poly_roots,
                      step_response_specs)
from .uncertainty import Box, LpBall, ScalarBlockSpectral, StarSimplex, sample_uniform, size_of

__all__ = [
    "ConfidenceBounds", "Method", "SampleSizeParams", "TrialCounts", "binomial_cdf", "clopper_pearson_limits",
    "clopper_pearson_table", "explicit_limits", "explicit_table", "massart_tail_bound", "normal_approx_limits",
    "required_sample_size", "CurvePoint", "DegradationCurve", "GlobalStrategyResult", "RadiusGrid",
    "global_strategy", "sample_reuse_curve", "separability_diagnostic", "IntervalEstimate", "MarginParams",
    "Verdict", "estimate_margin", "initial_interval", "probabilistic_bisection", "probabilistic_comparison",
    "RngStream", "Compensator", "DStability", "NumericalError", "PoleRegion", "RobustnessProblem", "SimParams",
    "Stability", "TimeDomain", "TimeSpec", "UncertainPlant", "poly_roots", "step_response_specs", "Box",
    "LpBall", "ScalarBlockSpectral", "StarSimplex", "sample_uniform", "size_of",
]
