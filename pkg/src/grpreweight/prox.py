"""Closed-form proximal maps and projections.

Scalar prox objectives use the ``0.5*(u - t)**2 + lam*penalty(u)``
convention, which has the same minimizer as the ``1/(2*lam)`` form.
"""

import math

import numpy as np

from .model import CappedLog

__all__ = [
    "group_soft_threshold",
    "group_soft_threshold_all",
    "project_ball",
    "prox_log_scalar",
    "prox_log_objective",
    "capped_log_objective",
    "prox_capped_log_scalar",
    "prox_capped_log_group",
    "prox_capped_log_partition",
]


def group_soft_threshold(v, t):
    """Prox of ``t*||.||``: shrink ``v`` towards 0 by ``t`` in norm."""
    v = np.asarray(v, dtype=float)
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    nv = np.linalg.norm(v)
    if nv <= t:
        return np.zeros_like(v)
    return (1.0 - t / nv) * v


def group_soft_threshold_all(v, thresholds, partition):
    """Apply :func:`group_soft_threshold` to every group of ``partition`` at once.

    Parameters
    ----------
    v : ndarray, shape (n,)
    thresholds : ndarray, shape (q,)
        Per-group threshold.
    partition : GroupPartition
    """
    norms = partition.norms(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > thresholds, 1.0 - thresholds / norms, 0.0)
    return v * partition.expand(scale)


def project_ball(v, radius):
    """Euclidean projection onto ``{u : ||u|| <= radius}``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    return radius * v / max(radius, nv)


def prox_log_objective(u, t, lam, eps):
    return 0.5 * (u - t) ** 2 + lam * np.log1p(u / eps)


def prox_log_scalar(t, lam, eps):
    """Prox of ``lam*log(1 + u/eps)`` at ``t >= 0``, restricted to ``u >= 0``.

    Stationary points solve ``u**2 + (eps - t)*u + (lam - eps*t) = 0``; the
    global minimizer is the best of 0 and the nonnegative real roots.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    best_u = 0.0
    best_f = prox_log_objective(0.0, t, lam, eps)
    p = eps - t
    c = lam - eps * t
    disc = p * p - 4.0 * c
    if disc >= 0:
        sq = math.sqrt(disc)
        # numerically stable pair of roots
        big = -0.5 * (p + math.copysign(sq, p)) if p != 0 else 0.5 * sq
        roots = [big, c / big] if big != 0 else [0.0, 0.0]
        for u in sorted(roots):
            if u > 0:
                fu = prox_log_objective(u, t, lam, eps)
                if fu < best_f:
                    best_u, best_f = u, fu
    return float(best_u)


def capped_log_objective(u, t, lam, spec: CappedLog):
    """``0.5*(u - t)**2 + lam*capped_log(u)`` for ``u >= 0``."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (u - t) ** 2 + lam * spec.eval(u)


def prox_capped_log_scalar(t, lam, spec: CappedLog):
    """Prox of ``lam*capped_log`` at ``t >= 0``.

    Compares the best point below the cap, ``min(prox_log(t), nu)``, with the
    best point above it, ``max(t, nu)``; ties go to the former.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    u1 = min(max(prox_log_scalar(t, lam, spec.eps), 0.0), spec.nu)
    u2 = max(t, spec.nu)
    f1 = float(capped_log_objective(u1, t, lam, spec))
    f2 = float(capped_log_objective(u2, t, lam, spec))
    return u1 if f1 <= f2 else float(u2)


def prox_capped_log_group(x, lam, spec: CappedLog):
    """Prox of ``lam*capped_log(||.||)``; radial, so it rescales ``x``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0:
        return np.zeros_like(x)
    return (prox_capped_log_scalar(nx, lam, spec) / nx) * x


def prox_capped_log_partition(x, lam, spec: CappedLog, partition):
    """Prox of ``lam * sum_i capped_log(||x_{G_i}||)``, group by group."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for g in partition.groups:
        idx = list(g)
        out[idx] = prox_capped_log_group(x[idx], lam, spec)
    return out
