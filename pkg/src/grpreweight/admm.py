"""Reweighted convex subproblem and its proximal ADMM solver.

Around a feasible anchor ``x_k`` both concave terms are linearized, giving::

    minimize    sum_i w_i ||x_{G_i}||
    subject to  A_k x - u = b_k,   ||u||^2 <= sigma_k

where ``w = psi'(||x_k,G||)``, ``A_k = diag(v) A``, ``b_k = v * b`` and
``v = sqrt(phi'((A x_k - b)^2))``. The ADMM below adds the proximal term
``0.5 (x - x_l)^T (rho I - beta A_k^T A_k) (x - x_l)`` so that the x-step is
a plain group soft-threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (BregmanFunction, GroupPartition, ProblemInstance,
                    constraint_value, squared_norm_bregman)
from .prox import group_soft_threshold_all, project_ball

__all__ = [
    "InfeasibleAnchorError",
    "SubproblemInvariantError",
    "InnerSolverExhausted",
    "SubproblemData",
    "AdmmParams",
    "AdmmState",
    "Criteria",
    "SubproblemResult",
    "build_subproblem",
    "x_update",
    "u_update",
    "z_update",
    "retract",
    "check_termination",
    "solve_subproblem",
    "GOLDEN_R",
]

GOLDEN_R = 0.99 * (1.0 + math.sqrt(5.0)) / 2.0
FEAS_TOL = 1e-10
RETRACT_GUARD = 2e-11


class InfeasibleAnchorError(ValueError):
    pass


class SubproblemInvariantError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SubproblemData:
    weights: np.ndarray
    A_k: np.ndarray
    b_k: np.ndarray
    sigma_k: float
    L_bar: float
    anchor: np.ndarray
    slater: np.ndarray
    partition: GroupPartition
    upsilon: np.ndarray
    sigma: float

    @property
    def anchor_objective(self) -> float:
        """``||w o G(x_k)||_1``, the reference value for the descent test."""
        return weighted_group_l1(self.anchor, self)


@dataclass(frozen=True)
class AdmmParams:
    beta: float
    r: float
    rho: float
    eps_k: float
    mu_k: float
    max_inner: int = 50000

    def __post_init__(self):
        if not (self.beta > 0 and self.rho > 0 and self.eps_k > 0 and self.mu_k > 0):
            raise ValueError("beta, rho, eps_k and mu_k must be positive")
        if not 0 < self.r < (1 + math.sqrt(5)) / 2:
            raise ValueError("r must lie in (0, (1+sqrt5)/2)")

    @classmethod
    def for_subproblem(cls, sub: SubproblemData, tau_k: float, mu_k: float,
                       max_inner: int = 50000, r: float = GOLDEN_R) -> "AdmmParams":
        """``beta = L^-1/2``, ``rho = L*beta`` and ``eps_k = min(sigma_k, sqrt(sigma_k), tau_k)``."""
        beta = sub.L_bar ** -0.5
        eps_k = min(sub.sigma_k, math.sqrt(sub.sigma_k), tau_k)
        return cls(beta=beta, r=r, rho=sub.L_bar * beta, eps_k=eps_k, mu_k=mu_k,
                   max_inner=max_inner)


@dataclass
class AdmmState:
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    l: int = 0

    def copy(self) -> "AdmmState":
        return AdmmState(self.x.copy(), self.u.copy(), self.z.copy(), self.l)


@dataclass
class Criteria:
    crit1: bool
    crit2: bool
    crit3: bool
    member: np.ndarray
    bregman_value: float
    primal_residual: float
    retracted_objective: Optional[float]

    @property
    def all(self) -> bool:
        return self.crit1 and self.crit2 and self.crit3


@dataclass
class SubproblemResult:
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    lambda_tilde: float
    inner_iters: int
    criteria: Criteria
    trace: list = field(default_factory=list)


class InnerSolverExhausted(RuntimeError):
    """ADMM hit ``max_inner``; ``state`` holds the last iterate."""

    def __init__(self, message, state: AdmmState, criteria: Optional[Criteria],
                 trace=None):
        super().__init__(message)
        self.state = state
        self.criteria = criteria
        self.trace = trace or []


def weighted_group_l1(x, sub: SubproblemData) -> float:
    return float(np.dot(sub.weights, sub.partition.norms(x)))


def build_subproblem(prob: ProblemInstance, x_k: np.ndarray) -> SubproblemData:
    x_k = np.asarray(x_k, dtype=float)
    cval = constraint_value(x_k, prob)
    if cval > prob.sigma + FEAS_TOL:
        raise InfeasibleAnchorError(
            f"anchor violates the budget: {cval!r} > sigma={prob.sigma!r}")
    y = prob.A @ x_k - prob.b
    y2 = y * y
    dphi = prob.phi.rderiv(y2)
    upsilon = np.sqrt(dphi)
    A_k = upsilon[:, None] * prob.A
    b_k = upsilon * prob.b
    r_k = A_k @ x_k - b_k
    sigma_k = prob.sigma + float(np.dot(r_k, r_k)) - float(np.sum(prob.phi.eval(y2)))
    if not sigma_k > 0:
        raise SubproblemInvariantError(f"sigma_k={sigma_k!r} is not positive")
    L_bar = float(np.max(dphi)) * prob.lambda_max
    w = prob.psi.rderiv(prob.partition.norms(x_k))
    return SubproblemData(weights=w, A_k=A_k, b_k=b_k, sigma_k=sigma_k, L_bar=L_bar,
                          anchor=x_k, slater=prob.x_feasible,
                          partition=prob.partition, upsilon=upsilon,
                          sigma=prob.sigma)


def x_update(state: AdmmState, sub: SubproblemData, params: AdmmParams) -> np.ndarray:
    """Linearized x-step: group soft-threshold of a gradient step from ``x``."""
    Ax = sub.A_k @ state.x
    return _x_step(state.x, Ax, state.u, state.z, sub, params)


def _x_step(x, Ax, u, z, sub, params):
    grad = sub.A_k.T @ (Ax - sub.b_k - u - z / params.beta)
    v = x - (params.beta / params.rho) * grad
    # threshold tested on ||v_G||, the argument of the prox
    return group_soft_threshold_all(v, sub.weights / params.rho, sub.partition)


def u_update(state: AdmmState, sub: SubproblemData, params: AdmmParams) -> np.ndarray:
    """Project ``A_k x - b_k - z/beta`` onto the ball of radius ``sqrt(sigma_k)``.

    ``state.x`` must already hold the new x.
    """
    return _u_step(sub.A_k @ state.x, state.z, sub, params)


def _u_step(Ax, z, sub, params):
    return project_ball(Ax - sub.b_k - z / params.beta, math.sqrt(sub.sigma_k))


def z_update(state: AdmmState, sub: SubproblemData, params: AdmmParams) -> np.ndarray:
    """Multiplier step ``z - r*beta*(A_k x - b_k - u)`` with the new x and u."""
    return state.z - params.r * params.beta * (sub.A_k @ state.x - sub.b_k - state.u)


def retract(x: np.ndarray, sub: SubproblemData, residual_norm: Optional[float] = None
            ) -> np.ndarray:
    """Pull ``x`` back into ``{||A_k x - b_k||^2 <= sigma_k}`` along the segment to ``A^+ b``.

    ``A_k A^+ b = b_k`` so the convex combination scales the residual by
    ``theta`` exactly.
    """
    if residual_norm is None:
        residual_norm = float(np.linalg.norm(sub.A_k @ x - sub.b_k))
    if residual_norm ** 2 <= sub.sigma_k * (1.0 - RETRACT_GUARD):
        return x
    # land just inside the boundary so rounding cannot push Phi above sigma
    theta = math.sqrt(sub.sigma_k * (1.0 - RETRACT_GUARD)) / residual_norm
    return (1.0 - theta) * sub.slater + theta * x


def _member(prev_x, prev_u, prev_Ax, x, u, Ax, sub, params):
    # -beta A_k^T (u+ - u) - (rho I - beta A_k^T A_k)(x+ - x)
    return (-params.beta * (sub.A_k.T @ ((u - prev_u) - (Ax - prev_Ax)))
            - params.rho * (x - prev_x))


def check_termination(prev: AdmmState, curr: AdmmState, sub: SubproblemData,
                      params: AdmmParams, f: BregmanFunction = squared_norm_bregman,
                      retractor: Callable = retract, lazy: bool = False) -> Criteria:
    """Evaluate the three inexactness tests at ``curr`` after one sweep from ``prev``.

    The first test bounds the Bregman distance of the set
    ``w o dG(x) + A_k^T N_U(u)`` to 0 by that of one certified member.
    With ``lazy=True`` the retraction test is skipped unless the other two
    pass.
    """
    Ax_prev = sub.A_k @ prev.x
    Ax = sub.A_k @ curr.x
    return _criteria(prev.x, prev.u, Ax_prev, curr.x, curr.u, Ax, sub, params, f,
                     retractor, lazy)


def _criteria(prev_x, prev_u, prev_Ax, x, u, Ax, sub, params, f, retractor, lazy):
    member = _member(prev_x, prev_u, prev_Ax, x, u, Ax, sub, params)
    dval = f.distance(member, np.zeros_like(member))
    crit1 = dval <= params.eps_k
    pres = float(np.linalg.norm(Ax - sub.b_k - u))
    crit2 = pres <= params.eps_k
    robj = None
    crit3 = False
    if not lazy or (crit1 and crit2):
        rnorm = float(np.linalg.norm(Ax - sub.b_k))
        if retractor is retract:
            xr = retract(x, sub, rnorm)
        else:
            xr = retractor(x, sub)
        robj = weighted_group_l1(xr, sub)
        crit3 = robj <= sub.anchor_objective + params.mu_k
    return Criteria(crit1, crit2, crit3, member, dval, pres, robj)


def _lambda_tilde(d, u, sigma_k):
    uu = float(np.dot(u, u))
    if uu < sigma_k * (1 - 1e-8) or uu == 0:
        return 0.0
    return max(0.0, float(np.dot(d, u)) / uu)


def warm_state(sub: SubproblemData, params: AdmmParams, z0=None) -> AdmmState:
    """``(x_k, P_U(A_k x_k - b_k), z0)``; ``z0`` defaults to zero."""
    x0 = sub.anchor.copy()
    u0 = project_ball(sub.A_k @ x0 - sub.b_k, math.sqrt(sub.sigma_k))
    z = np.zeros(sub.b_k.shape) if z0 is None else np.array(z0, dtype=float)
    return AdmmState(x0, u0, z, 0)


def solve_subproblem(sub: SubproblemData, params: AdmmParams,
                     warm: Optional[AdmmState] = None,
                     f: BregmanFunction = squared_norm_bregman,
                     retractor: Callable = retract,
                     record: bool = False) -> SubproblemResult:
    """Run proximal ADMM until the three inexactness tests hold.

    Raises
    ------
    InnerSolverExhausted
        If ``params.max_inner`` sweeps pass without all tests holding; the
        exception carries the last iterate.
    """
    if warm is None:
        warm = warm_state(sub, params)
    x, u, z = warm.x.copy(), warm.u.copy(), warm.z.copy()
    beta, r, rho = params.beta, params.r, params.rho
    A_k, b_k = sub.A_k, sub.b_k
    Ax = A_k @ x
    trace = []
    crit = None
    for l in range(1, params.max_inner + 1):
        x_new = _x_step(x, Ax, u, z, sub, params)
        Ax_new = A_k @ x_new
        u_new = _u_step(Ax_new, z, sub, params)
        res = Ax_new - b_k - u_new
        z_new = z - r * beta * res
        crit = _criteria(x, u, Ax, x_new, u_new, Ax_new, sub, params, f, retractor,
                         lazy=True)
        if record:
            trace.append({
                "l": l,
                "primal_residual": crit.primal_residual,
                "dz_over_rbeta": float(np.linalg.norm(z - z_new)) / (r * beta),
                "bregman": crit.bregman_value,
                "objective": weighted_group_l1(x_new, sub),
                "u_norm_sq": float(np.dot(u_new, u_new)),
            })
        if crit.all:
            # normal-cone element from the u-step optimality condition
            d = beta * res - z
            lam = _lambda_tilde(d, u_new, sub.sigma_k)
            return SubproblemResult(x_new, u_new, z_new, lam, l, crit, trace)
        x, u, z, Ax = x_new, u_new, z_new, Ax_new
    raise InnerSolverExhausted(
        f"ADMM did not meet the inexactness tests in {params.max_inner} iterations",
        AdmmState(x, u, z, params.max_inner), crit, trace)
