"""Third-order Newton optimization: each step jumps to the local minimum of the
cubic Taylor model, found through a small semidefinite program."""

from ._kernels import BACKEND
from .cubic_localmin import (
    DEFAULT_SHIFTS, LocalMinConfig, LocalMinResult, Outcome, find_local_min, find_local_min_with_shift,
)
from .cubic_model import CubicModel, UnivariateCubic, taylor3, univariate_local_min
from .fractal import FractalImage, FractalSpec, render, write_image
from .objectives import Objective, get_objective
from .optimizers import (
    OptimizerConfig, OptimizerTrace, Termination, estimate_convergence_order, gradient_descent_fixed,
    gradient_descent_quadratic_fit, run_optimizer, second_order_newton, third_order_newton,
)
from .sdp_solver import SdpProblem, SolverConfig, SolverStatus, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DEFAULT_SHIFTS", "CubicModel", "FractalImage", "FractalSpec", "LocalMinConfig",
    "LocalMinResult", "Objective", "OptimizerConfig", "OptimizerTrace", "Outcome", "SdpProblem",
    "SolverConfig", "SolverStatus", "Termination", "UnivariateCubic", "estimate_convergence_order",
    "find_local_min", "find_local_min_with_shift", "get_objective", "gradient_descent_fixed",
    "gradient_descent_quadratic_fit", "render", "run_optimizer", "second_order_newton", "solve",
    "taylor3", "third_order_newton", "univariate_local_min", "write_image",
]
