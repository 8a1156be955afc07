"""Galerkin solver for positive solutions of N-Laplacian problems with
convection and exponential-growth nonlinearities."""

from .constants import ConstantsReport, alpha_N, certify
from .mesh import GalerkinSpace, build_space, prolong, refine, xi_norm
from .nonlinearity import NonlinearitySpec, RegularizedNonlinearity, from_name, make_fk
from .operators import DiscreteField, ProblemSpec, jacobian, make_field, residual
from .solver import (
    ContinuationSchedule,
    SolveReport,
    coercivity_certificate,
    continue_in_n,
    final_weak_form_check,
    negative_part_check,
    refine_in_m,
    solve_fixed,
)
from .subsolution import comparison_check, solve_p5

__version__ = "0.1.0"

__all__ = [
    "ConstantsReport", "ContinuationSchedule", "DiscreteField", "GalerkinSpace",
    "NonlinearitySpec", "ProblemSpec", "RegularizedNonlinearity", "SolveReport",
    "alpha_N", "build_space", "certify", "coercivity_certificate", "comparison_check",
    "continue_in_n", "final_weak_form_check", "from_name", "jacobian", "make_field",
    "make_fk", "negative_part_check", "prolong", "refine", "refine_in_m", "residual",
    "solve_fixed", "solve_p5", "xi_norm",
]
