"""Stationarity checks for the original (non-linearized) problem.

A feasible ``x`` is stationary when some ``lam >= 0`` gives complementarity
``lam * (Phi - sigma) = 0`` and

    0 in psi'(||x_G||) o dG(x) + 2*lam*g(x),
    g(x) = sum_j phi'((a_j^T x - b_j)^2) (a_j^T x - b_j) a_j.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .model import ProblemInstance, constraint_value

__all__ = ["KktResidual", "MfcqResult", "constraint_gradient",
           "stationarity_residual", "kkt_report", "mfcq_boundary_check"]


@dataclass(frozen=True)
class KktResidual:
    feasibility: float
    stationarity: float
    complementarity: float
    lambda_star: float
    scaled: float

    def to_dict(self) -> dict:
        return asdict(self)


class MfcqResult(NamedTuple):
    status: str  # "pass", "fail" or "not-applicable"
    grad_norm: float


def constraint_gradient(x, prob: ProblemInstance) -> np.ndarray:
    """Half the gradient of ``x -> Phi((Ax - b)^2)``."""
    y = prob.A @ x - prob.b
    return prob.A.T @ (prob.phi.rderiv(y * y) * y)


def _stationarity_parts(x, prob):
    norms = prob.partition.norms(x)
    w = prob.psi.rderiv(norms)
    g = constraint_gradient(x, prob)
    nz = norms > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = np.where(prob.partition.expand(nz), x / prob.partition.expand(norms), 0.0)
    a = prob.partition.expand(w) * unit
    return w, g, a, nz


def _residual_sq(lam, w, g, a, nz, partition):
    v = a + 2.0 * lam * g
    per_group = np.bincount(partition.group_id, weights=v * v, minlength=partition.q)
    # zero groups: distance from -2*lam*g_G to the ball of radius w_i
    gap = np.maximum(np.sqrt(per_group) - w, 0.0)
    return float(np.sum(np.where(nz, per_group, gap * gap)))


def stationarity_residual(x, lam: float, prob: ProblemInstance) -> float:
    """Distance from 0 to ``psi'(x_G) o dG(x) + 2*lam*g(x)``."""
    if lam < 0:
        raise ValueError("multiplier must be nonnegative")
    w, g, a, nz = _stationarity_parts(np.asarray(x, dtype=float), prob)
    return float(np.sqrt(_residual_sq(lam, w, g, a, nz, prob.partition)))


def kkt_report(x, prob: ProblemInstance, lambda_hint: float = 0.0,
               iters: int = 200) -> KktResidual:
    """Residuals at the best multiplier for ``x``.

    ``lambda_hint`` is on the ADMM scale; it is halved before use. The
    squared stationarity residual is convex in the multiplier, so a ternary
    search over ``[0, max(10*(hint + 1), 1e6)]`` finds the minimizer.
    """
    x = np.asarray(x, dtype=float)
    w, g, a, nz = _stationarity_parts(x, prob)

    def fn(lam):
        return _residual_sq(lam, w, g, a, nz, prob.partition)

    lo, hi = 0.0, max(10.0 * (lambda_hint + 1.0), 1e6)
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fn(m1) <= fn(m2):
            hi = m2
        else:
            lo = m1
    candidates = [0.5 * (lo + hi), 0.0, max(lambda_hint, 0.0) / 2.0]
    lam = min(candidates, key=fn)
    cval = constraint_value(x, prob)
    stat = float(np.sqrt(fn(lam)))
    return KktResidual(
        feasibility=max(cval - prob.sigma, 0.0),
        stationarity=stat,
        complementarity=lam * abs(cval - prob.sigma),
        lambda_star=lam,
        scaled=stat / (1.0 + float(np.linalg.norm(w))),
    )


def mfcq_boundary_check(x, prob: ProblemInstance, tol_boundary=None) -> MfcqResult:
    """On the boundary ``Phi = sigma``, MFCQ reduces to a nonzero constraint gradient."""
    tol = 1e-6 * prob.sigma if tol_boundary is None else tol_boundary
    gnorm = float(np.linalg.norm(constraint_gradient(x, prob)))
    if abs(constraint_value(x, prob) - prob.sigma) > tol:
        return MfcqResult("not-applicable", gnorm)
    return MfcqResult("pass" if gnorm > 1e-8 else "fail", gnorm)
