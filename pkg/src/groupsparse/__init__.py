"""Group-sparse least squares with l_{p,q} regularization.

The main entry points are :func:`pgm_solve` (proximal gradient solver),
:func:`prox_group` (single-group proximal operators) and the experiment
drivers in :mod:`groupsparse.simlab`.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, GroupSparseError, InputError, NumericalError, PreconditionError
from .model import GroupPartition, Problem, Regularizer, group_norms, lpq_norm, objective, penalty, smallest_k, support
from .prox import ProxResult, prox_group, prox_group_apply
from .solver import SolveReport, SolverConfig, lambda_from_target_sparsity, pgm_solve

__all__ = [
    "ConfigurationError",
    "GroupPartition",
    "GroupSparseError",
    "InputError",
    "NumericalError",
    "PreconditionError",
    "Problem",
    "ProxResult",
    "Regularizer",
    "SolveReport",
    "SolverConfig",
    "group_norms",
    "lambda_from_target_sparsity",
    "lpq_norm",
    "objective",
    "penalty",
    "pgm_solve",
    "prox_group",
    "prox_group_apply",
    "smallest_k",
    "support",
]
