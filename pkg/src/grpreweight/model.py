"""Problem data model for group-sparse problems with a concave loss budget.

The problem handled throughout the package is::

    minimize    sum_i psi(||x_{G_i}||)
    subject to  sum_j phi((a_j^T x - b_j)^2) <= sigma

with ``psi`` a concave sparsity penalty and ``phi`` a concave loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "PartitionError",
    "RankDeficientError",
    "GroupPartition",
    "validate_partition",
    "ConcaveScalarFunction",
    "LogPenalty",
    "CauchyLoss",
    "IdentityLoss",
    "CappedLog",
    "BregmanFunction",
    "squared_norm_bregman",
    "ProblemInstance",
    "group_norms",
    "objective_value",
    "constraint_value",
    "weights",
    "min_norm_solution",
    "lambda_max_gram",
]

RANK_TOL = 1e-10


class PartitionError(ValueError):
    """Raised when index groups do not form a partition of ``range(n)``."""


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when the measurement matrix is not numerically full row rank."""


def validate_partition(groups: Sequence[Sequence[int]], n: int) -> list[str]:
    """Check that ``groups`` is a partition of ``{0, ..., n-1}``.

    Returns a list of human-readable violations; an empty list means the
    groups are valid.
    """
    problems = []
    if len(groups) == 0:
        problems.append("no groups given")
    seen = {}
    for gi, g in enumerate(groups):
        if len(g) == 0:
            problems.append(f"group {gi} is empty")
        for idx in g:
            if not 0 <= idx < n:
                problems.append(f"index {idx} in group {gi} is out of range [0, {n})")
            elif idx in seen:
                problems.append(
                    f"index {idx} duplicated (groups {seen[idx]} and {gi})")
            else:
                seen[idx] = gi
    missing = sorted(set(range(n)) - set(seen))
    if missing:
        shown = ", ".join(str(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        problems.append(f"indices not covered: {shown}{more}")
    return problems


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint index groups covering ``range(n)``.

    Group membership is stored as a per-coordinate group id so group
    reductions are single ``np.bincount`` calls.
    """

    n: int
    groups: tuple[tuple[int, ...], ...]
    group_id: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        problems = validate_partition(groups, self.n)
        if problems:
            raise PartitionError("; ".join(problems))
        gid = np.empty(self.n, dtype=np.intp)
        for gi, g in enumerate(groups):
            gid[list(g)] = gi
        gid.setflags(write=False)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "group_id", gid)

    @classmethod
    def contiguous(cls, n: int, block_size: int) -> "GroupPartition":
        """Consecutive blocks ``[0..J-1], [J..2J-1], ...``; ``J`` must divide ``n``."""
        if block_size <= 0 or n % block_size:
            raise PartitionError(f"block size {block_size} does not divide n={n}")
        return cls(n, tuple(tuple(range(s, s + block_size))
                            for s in range(0, n, block_size)))

    @property
    def q(self) -> int:
        return len(self.groups)

    def norms(self, x: np.ndarray) -> np.ndarray:
        sq = np.bincount(self.group_id, weights=np.square(x), minlength=self.q)
        return np.sqrt(sq)

    def expand(self, per_group: np.ndarray) -> np.ndarray:
        """Broadcast a length-``q`` vector to length ``n``."""
        return np.asarray(per_group)[self.group_id]


class ConcaveScalarFunction:
    """Concave nondecreasing map ``R_+ -> R_+`` with ``f(0) = 0``.

    Subclasses implement :meth:`eval` and :meth:`rderiv`; both act
    elementwise on arrays. ``rderiv(0)`` is the exact right-limit of the
    derivative, not a numerical estimate.
    """

    kind = "abstract"

    def eval(self, t):
        raise NotImplementedError

    def rderiv(self, t):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    def __call__(self, t):
        return self.eval(t)


@dataclass(frozen=True)
class LogPenalty(ConcaveScalarFunction):
    """``t -> log(1 + t/eps)``."""

    eps: float
    kind = "log"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def eval(self, t):
        return np.log1p(np.asarray(t, dtype=float) / self.eps)

    def rderiv(self, t):
        return 1.0 / (self.eps + np.asarray(t, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "eps": self.eps}


@dataclass(frozen=True)
class CauchyLoss(ConcaveScalarFunction):
    """``t -> log(1 + t/delta^2)``; applied to squared residuals."""

    delta: float
    kind = "cauchy"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def eval(self, t):
        return np.log1p(np.asarray(t, dtype=float) / self.delta ** 2)

    def rderiv(self, t):
        return 1.0 / (self.delta ** 2 + np.asarray(t, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


@dataclass(frozen=True)
class IdentityLoss(ConcaveScalarFunction):
    """``t -> t``; turns the constraint into ``||Ax - b||^2 <= sigma``."""

    kind = "identity"

    def eval(self, t):
        return np.asarray(t, dtype=float) * 1.0

    def rderiv(self, t):
        return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class CappedLog(ConcaveScalarFunction):
    """Log penalty capped at ``cap`` beyond ``nu = eps*(exp(cap) - 1)``.

    The two pieces meet continuously at ``nu`` since ``log(1 + nu/eps) = cap``.
    """

    eps: float
    nu: float
    cap: float
    kind = "capped_log"

    def __post_init__(self):
        if not (self.eps > 0 and self.nu > 0 and self.cap > 0):
            raise ValueError("eps, nu and cap must be positive")
        expected = self.eps * math.expm1(self.cap)
        if abs(self.nu - expected) > 1e-12 * expected:
            raise ValueError(
                f"nu={self.nu!r} inconsistent with eps*(exp(cap)-1)={expected!r}")

    @classmethod
    def from_cap(cls, eps: float, cap: float) -> "CappedLog":
        return cls(eps, eps * math.expm1(cap), cap)

    @classmethod
    def from_feasible_point(cls, eps: float, x_feas: np.ndarray,
                            partition: GroupPartition) -> "CappedLog":
        """Cap at the log-penalty value of a feasible point (typically ``A^+ b``).

        Every minimizer of the uncapped log objective has all group norms
        at most ``nu``, so the capped and uncapped problems share solutions.
        """
        cap = float(np.sum(np.log1p(partition.norms(x_feas) / eps)))
        return cls.from_cap(eps, cap)

    def eval(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        return np.where(t < self.nu, np.log1p(np.minimum(t, self.nu) / self.eps),
                        self.cap)

    def rderiv(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.nu, 1.0 / (self.eps + t), 0.0)

    def to_dict(self):
        return {"kind": self.kind, "eps": self.eps, "nu": self.nu, "C": self.cap}


@dataclass(frozen=True)
class BregmanFunction:
    """Strictly convex, differentiable kernel generating a Bregman distance."""

    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def distance(self, x, x0) -> float:
        x = np.asarray(x, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        return float(self.eval(x) - self.eval(x0) - np.dot(self.grad(x0), x - x0))


def _sq_norm(x):
    return float(np.dot(x, x))


def _sq_norm_grad(x):
    return 2.0 * np.asarray(x, dtype=float)


# D(x, x0) = ||x - x0||^2; module-level callables keep it picklable
squared_norm_bregman = BregmanFunction(_sq_norm, _sq_norm_grad, "squared_norm")


def min_norm_solution(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-norm solution ``A^+ b`` of ``Ax = b`` via a thin QR of ``A^T``.

    Raises :class:`RankDeficientError` when ``min|R_ii| / max|R_ii|`` falls
    below ``1e-10``.
    """
    A = np.asarray(A, dtype=float)
    Q, R = np.linalg.qr(A.T, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.max() == 0 or diag.min() / diag.max() < RANK_TOL:
        raise RankDeficientError("matrix is not numerically full row rank")
    y = solve_triangular(R, np.asarray(b, dtype=float), trans="T", lower=False)
    return Q @ y


def lambda_max_gram(A: np.ndarray, rtol: float = 1e-6, max_iter: int = 1000,
                    seed: int = 0) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration on ``A A^T``.

    Iteration stops once the eigen-residual ``||M v - theta v||`` falls below
    ``rtol * theta``. The returned value is ``theta`` plus that residual, so
    it errs on the high side: the proximal ADMM step needs an upper bound.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    v = np.random.default_rng(seed).standard_normal(m)
    v /= np.linalg.norm(v)
    bound = 0.0
    for _ in range(max_iter):
        w = A @ (A.T @ v)
        theta = float(np.dot(v, w))
        if theta <= 0:
            return 0.0
        resid = float(np.linalg.norm(w - theta * v))
        bound = theta + resid
        if resid <= rtol * theta:
            break
        v = w / np.linalg.norm(w)
    return bound


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """``min sum psi(||x_G||)  s.t.  sum phi((Ax - b)^2) <= sigma``.

    Construction checks ``m <= n``, full row rank and
    ``0 < sigma < sum phi(b^2)`` (so that ``x = 0`` is infeasible).
    """

    A: np.ndarray
    b: np.ndarray
    sigma: float
    partition: GroupPartition
    psi: ConcaveScalarFunction
    phi: ConcaveScalarFunction
    check: bool = True

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=float)
        b = np.ascontiguousarray(self.b, dtype=float).ravel()
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", float(self.sigma))
        m, n = A.shape
        if b.shape != (m,):
            raise ValueError(f"b has shape {b.shape}, expected ({m},)")
        if self.partition.n != n:
            raise ValueError("partition dimension does not match A")
        if not self.check:
            return
        if m > n:
            raise ValueError(f"need m <= n, got m={m}, n={n}")
        upper = float(np.sum(self.phi.eval(b * b)))
        if not 0 < self.sigma < upper:
            raise ValueError(
                f"sigma={self.sigma!r} must lie in (0, {upper!r}) so that 0 is infeasible")

    @property
    def shape(self):
        return self.A.shape

    @property
    def x_feasible(self) -> np.ndarray:
        """Cached ``A^+ b`` (raises if ``A`` is rank deficient)."""
        cached = self.__dict__.get("_x_feas")
        if cached is None:
            cached = min_norm_solution(self.A, self.b)
            cached.setflags(write=False)
            self.__dict__["_x_feas"] = cached
        return cached

    @property
    def lambda_max(self) -> float:
        """Cached largest eigenvalue of ``A^T A``."""
        cached = self.__dict__.get("_lam_max")
        if cached is None:
            cached = lambda_max_gram(self.A)
            self.__dict__["_lam_max"] = cached
        return cached


def group_norms(x: np.ndarray, partition: GroupPartition) -> np.ndarray:
    return partition.norms(np.asarray(x, dtype=float))


def objective_value(x: np.ndarray, prob: ProblemInstance) -> float:
    return float(np.sum(prob.psi.eval(prob.partition.norms(x))))


def constraint_value(x: np.ndarray, prob: ProblemInstance) -> float:
    """``Phi((Ax - b)^2)``; ``x`` is feasible iff this is ``<= sigma``."""
    y = prob.A @ x - prob.b
    return float(np.sum(prob.phi.eval(y * y)))


def weights(x: np.ndarray, prob: ProblemInstance) -> np.ndarray:
    """Reweighting vector ``psi'_+(||x_{G_i}||)`` for each group."""
    return prob.psi.rderiv(prob.partition.norms(x))
