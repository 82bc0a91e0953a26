"""Doubly reweighted solver for group-sparse problems with concave loss budgets."""

from .model import (BregmanFunction, CappedLog, CauchyLoss, GroupPartition,
                    IdentityLoss, LogPenalty, ProblemInstance, constraint_value,
                    group_norms, min_norm_solution, objective_value,
                    squared_norm_bregman, validate_partition, weights)
from .solver import IrParams, SolveReport, ir_solve
from .kkt import kkt_report, stationarity_residual

__version__ = "0.1.0"
