"""Physics-informed networks for 1D two-phase Darcy filling.

Three small networks (velocity, pressure, fraction) are trained jointly on
the PDE and boundary residuals, either on a fixed collocation grid or with
collocation points added where the residuals are largest.
"""
from .analytic import fraction_exact, front_from_model, front_position, pressure_exact
from .diffnet import Activation, NetworkParams, NetworkSpec, forward, forward_with_input_derivatives
from .errors import ConfigurationError, DomainError, NumericalError
from .experiment import ErrorReport, RunManifest, compare_runs, load_manifest, run_experiment
from .optim import AdamConfig, adam_step, quasi_newton_minimize
from .physics import CostWeights, FieldTriple, PointSets, ProblemConfig, assemble_cost, pde_residuals
from .sampling import AdaptivityConfig, build_density, draw_points, enrichment_step
from .training import Schedule, train_adaptive, train_fixed

__version__ = "0.1.0"

__all__ = [
    "Activation", "AdaptivityConfig", "AdamConfig", "ConfigurationError", "CostWeights",
    "DomainError", "ErrorReport", "FieldTriple", "NetworkParams", "NetworkSpec", "NumericalError",
    "PointSets", "ProblemConfig", "RunManifest", "Schedule", "adam_step", "assemble_cost",
    "build_density", "compare_runs", "draw_points", "enrichment_step", "forward",
    "forward_with_input_derivatives", "fraction_exact", "front_from_model", "front_position",
    "load_manifest", "pde_residuals", "pressure_exact", "quasi_newton_minimize",
    "run_experiment", "train_adaptive", "train_fixed",
]
