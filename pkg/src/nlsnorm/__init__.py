"""Normalized solutions of the radial NLS with a Sobolev-critical term.

The main entry points are re-exported here.  The command-line driver lives in
``nlsnorm.cli``.
"""

__version__ = "0.1.0"

from .errors import (CheckFailure, ConvergenceFailure, InvalidArgument, NlsNormError,
                     NoLocalGeometry, NumericError, SearchFailure)
from .radial import RadialFunction, RadialGrid, make_grid
from .energy import ProblemParams, SolutionCertificate, certify, energy_F, pohozaev_Q
from .fibermap import FiberCoeffs, classify, critical_points
from .bubble import asymptotic_exponents, bubble_norms
from .solvers import (SolverOptions, asymptotic_sweep, m_curve, solve_ground_state,
                      solve_mountain_pass)
from .pathlab import build_and_check_path, exponent_battle, two_center_integral
from .dynamics import ComplexField, conservation_check, evolve, instability_experiment

__all__ = [
    "CheckFailure", "ConvergenceFailure", "InvalidArgument", "NlsNormError", "NoLocalGeometry",
    "NumericError", "SearchFailure", "RadialFunction", "RadialGrid", "make_grid",
    "ProblemParams", "SolutionCertificate", "certify", "energy_F", "pohozaev_Q",
    "FiberCoeffs", "classify", "critical_points", "asymptotic_exponents", "bubble_norms",
    "SolverOptions", "asymptotic_sweep", "m_curve", "solve_ground_state", "solve_mountain_pass",
    "build_and_check_path", "exponent_battle", "two_center_integral", "ComplexField",
    "conservation_check", "evolve", "instability_experiment",
]
