"""Outer reweighting loop.

Each outer step linearizes penalty and loss at the current feasible point,
solves the resulting convex subproblem inexactly with proximal ADMM and
retracts the result towards ``A^+ b`` so every iterate stays feasible.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .admm import (AdmmParams, InnerSolverExhausted,
                   build_subproblem, retract, solve_subproblem, warm_state,
                   weighted_group_l1)
from .kkt import kkt_report
from .model import (BregmanFunction, ProblemInstance, constraint_value,
                    objective_value, squared_norm_bregman)

__all__ = ["IrParams", "IterRecord", "SolveReport", "ir_solve", "retract",
           "default_tau", "default_mu"]

log = logging.getLogger(__name__)


def default_tau(k: int) -> float:
    return max(5.0 ** (-k - 1), 1e-8)


def default_mu(k: int) -> float:
    return max(1.2 ** (-k - 1), 1e-8)


@dataclass
class IrParams:
    tau: Callable[[int], float] = default_tau
    mu: Callable[[int], float] = default_mu
    outer_tol: float = 1e-4
    max_outer: int = 1000
    max_inner: int = 50000
    bregman: BregmanFunction = squared_norm_bregman
    record_inner: bool = False


@dataclass
class IterRecord:
    k: int
    objective: float
    constraint: float
    sigma_k: float
    eps_k: float
    mu_k: float
    inner_iters: int
    lambda_tilde: float
    rel_change: float
    retraction_dist: float
    bregman: float
    primal_residual: float
    subproblem_objective: float
    anchor_subproblem_objective: float
    degraded: bool = False
    inner_trace: Optional[list] = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "inner_trace"}
        if self.inner_trace is not None:
            d["inner_trace"] = self.inner_trace
        return d


@dataclass
class SolveReport:
    x: np.ndarray
    fval: float
    constraint_value: float
    res: float
    outer_iters: int
    total_inner_iters: int
    lambda_tilde: float
    status: str
    kkt: dict
    trace: list = field(default_factory=list)
    x0_objective: float = 0.0
    wall_s: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self, emit_x: bool = False) -> dict:
        d = {
            "fval": self.fval,
            "constraint_value": self.constraint_value,
            "res": self.res,
            "outer_iters": self.outer_iters,
            "total_inner_iters": self.total_inner_iters,
            "lambda_tilde": self.lambda_tilde,
            "status": self.status,
            "wall_s": self.wall_s,
            "kkt": self.kkt,
            "trace": [rec.to_dict() for rec in self.trace],
        }
        if emit_x:
            d["final_x"] = [float(v) for v in self.x]
        return d


def ir_solve(prob: ProblemInstance, params: Optional[IrParams] = None,
             x0: Optional[np.ndarray] = None) -> SolveReport:
    """Run the reweighting loop from ``A^+ b`` (or a given feasible ``x0``).

    Stops when ``||x+ - x|| / max(||x||, 1) <= outer_tol`` or after
    ``max_outer`` steps. If ADMM exhausts its budget the last inner iterate
    is retracted (falling back to the anchor if that would break the
    descent test) and the run ends with status ``"degraded"``.
    """
    params = params or IrParams()
    t0 = time.perf_counter()
    x = np.array(prob.x_feasible if x0 is None else x0, dtype=float)
    x_init_obj = objective_value(x, prob)
    z = None
    trace = []
    total_inner = 0
    lam = 0.0
    status = "max_outer"
    for k in range(params.max_outer):
        sub = build_subproblem(prob, x)
        aparams = AdmmParams.for_subproblem(sub, params.tau(k), params.mu(k),
                                            params.max_inner)
        warm = warm_state(sub, aparams, z)
        degraded = False
        try:
            res = solve_subproblem(sub, aparams, warm, params.bregman,
                                   record=params.record_inner)
            x_tilde, z, lam, n_inner = res.x, res.z, res.lambda_tilde, res.inner_iters
            crit = res.criteria
            inner_trace = res.trace
        except InnerSolverExhausted as exc:
            log.warning("outer step %d: %s", k, exc)
            x_tilde, z, n_inner = exc.state.x, exc.state.z, exc.state.l
            crit = exc.criteria
            inner_trace = exc.trace
            degraded = True
        x_new = retract(x_tilde, sub)
        if degraded and weighted_group_l1(x_new, sub) > sub.anchor_objective + aparams.mu_k:
            x_new = x.copy()
        total_inner += n_inner
        rel = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x)), 1.0)
        trace.append(IterRecord(
            k=k,
            objective=objective_value(x_new, prob),
            constraint=constraint_value(x_new, prob),
            sigma_k=sub.sigma_k,
            eps_k=aparams.eps_k,
            mu_k=aparams.mu_k,
            inner_iters=n_inner,
            lambda_tilde=lam,
            rel_change=rel,
            retraction_dist=float(np.linalg.norm(x_new - x_tilde)),
            bregman=crit.bregman_value if crit else math.nan,
            primal_residual=crit.primal_residual if crit else math.nan,
            subproblem_objective=weighted_group_l1(x_new, sub),
            anchor_subproblem_objective=sub.anchor_objective,
            degraded=degraded,
            inner_trace=inner_trace if params.record_inner else None,
        ))
        x = x_new
        if degraded:
            status = "degraded"
            break
        if rel <= params.outer_tol:
            status = "converged"
            break
    cval = constraint_value(x, prob)
    report = kkt_report(x, prob, lam)
    return SolveReport(
        x=x,
        fval=objective_value(x, prob),
        constraint_value=cval,
        res=(cval - prob.sigma) / prob.sigma,
        outer_iters=len(trace),
        total_inner_iters=total_inner,
        lambda_tilde=lam,
        status=status,
        kkt=report.to_dict(),
        trace=trace,
        x0_objective=x_init_obj,
        wall_s=time.perf_counter() - t0,
    )
