"""Distributionally robust probabilistic reachable sets and indirect-feedback SMPC."""

from .constraints import Halfspaces, TightenedSet, contains, tighten, tighten_with_box
from .drprs import (
    DrConfig,
    DrPrsResult,
    RiskResult,
    SampleSet,
    dr_cvar_closed_form,
    empirical_cvar,
    synthesize_box_prs,
    synthesize_halfspace_prs,
    wc_cvar_program,
)
from .linalg import lqr_gain, psd_factor, solve_discrete_lyapunov, std_normal_quantile
from .model import (
    LtiSystem,
    NoiseModel,
    TubeGain,
    error_step,
    predicted_error,
    stationary_error_cov,
    true_gaussian_prs,
)
from .qp import QpProblem, QpSolution, feasibility_slack, kkt_residuals, solve_qp
from .sim import (
    ClosedLoopExperiment,
    ReliabilityRow,
    RngStream,
    SimMetrics,
    draw_error_samples,
    monte_carlo,
    reliability_experiment,
    run_closed_loop,
    sample_noise,
)
from .smpc import (
    ControllerState,
    MpcConfig,
    StepResult,
    build_mpc_qp,
    feasible_region_scan,
    mpc_step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
