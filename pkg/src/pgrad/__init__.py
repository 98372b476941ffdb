"""P-gradient methods for quadratic minimization and their renormalized measure dynamics."""

__version__ = "0.1.0"

from .attractor import (
    AttractorEstimate,
    StabilityReport,
    extract_p,
    p_from_L,
    phi_density,
    run_to_attractor,
    s_of_lambda,
    stability_intervals,
    stability_probe,
)
from .pgradient import (
    RunConfig,
    TrajectoryRecord,
    estimate_inner_products,
    gradient_eval_count,
    iterate,
    oracle_step_length,
    step_length,
)
from .pspec import PSpec
from .quadratic import QuadraticProblem, Spectrum
from .rates import RateSummary, delta_N, geometric_mean_rate, r_of_p, rate_bounds
from .renorm import (
    FiniteConvergence,
    MomentVector,
    SpectralMeasure,
    diagnostics,
    moment_update,
    moments,
    renormalize,
    transform,
)
