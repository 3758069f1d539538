"""rankqp: interior point QP solver with low-rank objective maintenance,
plus SVM training reductions and a Gaussian-kernel factorizer."""

from .barrier import BlockDomain
from .exceptions import (DomainError, InvariantViolation, ParseError,
                         RankQPError, SolverError, ValidationError)
from .ipm import IpmParams, Solution, solve
from .kernel import gaussian_lowrank_factor, exact_gaussian_kernel
from .model import QPInstance, build_qp_instance
from .oracle import dense_solve_qp, kkt_residuals
from .svm import SvmModel, SvmSpec, predict, train

__all__ = [
    "BlockDomain", "DomainError", "InvariantViolation", "IpmParams",
    "ParseError", "QPInstance", "RankQPError", "Solution", "SolverError",
    "SvmModel", "SvmSpec", "ValidationError", "build_qp_instance",
    "dense_solve_qp", "exact_gaussian_kernel", "gaussian_lowrank_factor",
    "kkt_residuals", "predict", "solve", "train",
]

__version__ = "0.1.0"
