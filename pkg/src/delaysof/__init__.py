"""Static output feedback design and certification for input-delayed discrete-time plants."""

__version__ = "0.1.0"

from .model import DelayBounds, FeedbackGain, PlantModel, discretize_zoh, gamma, spectral_radius
from .lmi_core import (
    AffineMatrixExpr,
    DecisionLayout,
    LmiSystem,
    SelectorBank,
    build_analysis_system,
    build_design_system,
    build_phi,
    build_psi_z,
    build_selectors,
    build_upsilon,
)
from .conic import (
    SolveResult,
    SolveStatus,
    SolverOptions,
    SvecProblem,
    compile_system,
    smat,
    solve,
    solve_system,
    svec,
)
from .synthesis import DesignOutcome, RhoGrid, design_gain, max_certified_delay_design, sweep_rho
from .analysis import StabilityCertificate, certify, max_certified_delay_analysis
from . import benchmarks, verify

__all__ = [
    "__version__",
    "PlantModel", "DelayBounds", "FeedbackGain",
    "gamma", "discretize_zoh", "spectral_radius",
    "AffineMatrixExpr", "DecisionLayout", "LmiSystem", "SelectorBank",
    "build_selectors", "build_phi", "build_psi_z", "build_upsilon",
    "build_design_system", "build_analysis_system",
    "svec", "smat", "compile_system", "solve", "solve_system",
    "SvecProblem", "SolveResult", "SolveStatus", "SolverOptions",
    "DesignOutcome", "RhoGrid", "design_gain", "sweep_rho", "max_certified_delay_design",
    "StabilityCertificate", "certify", "max_certified_delay_analysis",
    "benchmarks", "verify",
]
