"""Synthetic block-sparse recovery benchmark.

Instances follow the usual compressed-sensing recipe: Gaussian ``A``, a
signal with ``s`` nonzero blocks of size ``J`` at uniformly chosen block
positions, small additive noise, and a budget ``sigma`` set to a multiple
of the loss incurred by the noise alone.

Random numbers come from PCG64 seeded per instance; normal deviates are
produced from its uniforms with the Box-Muller transform so the stream is
fully specified by this module.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (CauchyLoss, GroupPartition, IdentityLoss, LogPenalty,
                    ProblemInstance, constraint_value, objective_value)
from .solver import IrParams, ir_solve

__all__ = [
    "InstanceSpec",
    "RecoveryMetrics",
    "ExperimentRow",
    "generate_instance",
    "recovery_metrics",
    "run_experiment",
    "aggregate",
    "rows_to_csv",
    "rows_from_csv",
    "parse_sizes",
    "instance_seed",
    "check_aggregates",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["instance_id", "m", "n", "s", "success", "nnz_match", "outer_iters",
               "inner_iters", "wall_s", "fval", "recerr", "res"]
SUCCESS_TOL = 0.01
SUPPORT_REL_TOL = 1e-5


@dataclass(frozen=True)
class InstanceSpec:
    m: int
    n: int
    s: int
    block_size: int = 2
    noise_scale: float = 0.005
    sigma_factor: float = 1.2
    delta: float = 0.05
    eps: float = 0.1
    seed: int = 0
    loss_kind: str = "cauchy"
    noise_kind: str = "gaussian"

    def __post_init__(self):
        if self.block_size <= 0 or self.n % self.block_size:
            raise ValueError(f"block size {self.block_size} must divide n={self.n}")
        if not 0 < self.s <= self.n // self.block_size:
            raise ValueError(f"need 0 < s <= n/J = {self.n // self.block_size}")
        if not 0 < self.m < self.n:
            raise ValueError("need 0 < m < n")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive (sigma would be 0)")
        if not self.sigma_factor > 0:
            raise ValueError("sigma_factor must be positive")
        if self.loss_kind not in ("cauchy", "identity"):
            raise ValueError(f"unknown loss {self.loss_kind!r}")
        if self.noise_kind not in ("gaussian", "cauchy"):
            raise ValueError(f"unknown noise {self.noise_kind!r}")

    @property
    def label(self) -> str:
        return f"{self.m}x{self.n}x{self.s}"


def _box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    k = (size + 1) // 2
    u1 = 1.0 - rng.random(k)  # (0, 1], keeps log finite
    u2 = rng.random(k)
    rad = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * k)
    out[0::2] = rad * np.cos(2.0 * np.pi * u2)
    out[1::2] = rad * np.sin(2.0 * np.pi * u2)
    return out[:size]


def _standard_cauchy(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.tan(np.pi * (rng.random(size) - 0.5))


def instance_seed(base_seed: int, spec_index: int, trial: int) -> int:
    """Independent 64-bit seed for one (spec, trial) cell."""
    ss = np.random.SeedSequence([base_seed, spec_index, trial])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_instance(spec: InstanceSpec):
    """Build ``(problem, x_orig)`` for ``spec``; equal seeds give equal instances.

    Draw order: ``A`` (row-major), block permutation, block values, noise.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    m, n, J = spec.m, spec.n, spec.block_size
    nb = n // J
    A = _box_muller(rng, m * n).reshape(m, n)
    support = np.sort(rng.permutation(nb)[:spec.s])
    blocks = _box_muller(rng, J * nb).reshape(nb, J)
    mask = np.zeros(nb, dtype=bool)
    mask[support] = True
    blocks[~mask] = 0.0
    x_orig = blocks.ravel()  # block j occupies [j*J, (j+1)*J)
    if spec.noise_kind == "gaussian":
        eta = spec.noise_scale * _box_muller(rng, m)
    else:
        eta = spec.noise_scale * _standard_cauchy(rng, m)
    b = A @ x_orig + eta
    if spec.loss_kind == "cauchy":
        phi = CauchyLoss(spec.delta)
        sigma = spec.sigma_factor * float(np.sum(np.log1p(eta ** 2 / spec.delta ** 2)))
    else:
        phi = IdentityLoss()
        sigma = spec.sigma_factor * float(np.dot(eta, eta))
    prob = ProblemInstance(A, b, sigma, GroupPartition.contiguous(n, J),
                           LogPenalty(spec.eps), phi)
    return prob, x_orig


@dataclass(frozen=True)
class RecoveryMetrics:
    recerr: float
    success: bool
    res: float
    fval: float
    nnz_match: bool


def support_blocks(x, partition: GroupPartition, rel_tol=SUPPORT_REL_TOL) -> frozenset:
    norms = partition.norms(x)
    top = norms.max() if norms.size else 0.0
    if top == 0:
        return frozenset()
    return frozenset(np.flatnonzero(norms > rel_tol * top).tolist())


def recovery_metrics(x_hat, x_orig, prob: ProblemInstance) -> RecoveryMetrics:
    x_hat = np.asarray(x_hat, dtype=float)
    x_orig = np.asarray(x_orig, dtype=float)
    if x_hat.shape != x_orig.shape:
        raise ValueError("dimension mismatch")
    recerr = float(np.linalg.norm(x_hat - x_orig)) / max(float(np.linalg.norm(x_orig)), 1.0)
    true_support = frozenset(np.flatnonzero(prob.partition.norms(x_orig) > 0).tolist())
    return RecoveryMetrics(
        recerr=recerr,
        success=recerr <= SUCCESS_TOL,
        res=(constraint_value(x_hat, prob) - prob.sigma) / prob.sigma,
        fval=objective_value(x_hat, prob),
        nnz_match=support_blocks(x_hat, prob.partition) == true_support,
    )


@dataclass(frozen=True)
class ExperimentRow:
    instance_id: str
    m: int
    n: int
    s: int
    success: bool
    nnz_match: bool
    outer_iters: int
    inner_iters: int
    wall_s: float
    fval: float
    recerr: float
    res: float
    kkt_scaled: float = math.nan
    status: str = "converged"
    error: str = ""


def _solve_one(task):
    spec, instance_id, params = task
    prob, x_orig = generate_instance(spec)
    t0 = time.perf_counter()
    try:
        rep = ir_solve(prob, params)
    except Exception as exc:  # a failed instance must not abort the batch
        return ExperimentRow(instance_id, spec.m, spec.n, spec.s, False, False, 0, 0,
                             time.perf_counter() - t0, math.nan, math.nan, math.nan,
                             status="error", error=f"{type(exc).__name__}: {exc}")
    wall = time.perf_counter() - t0
    met = recovery_metrics(rep.x, x_orig, prob)
    return ExperimentRow(instance_id, spec.m, spec.n, spec.s, met.success, met.nnz_match,
                         rep.outer_iters, rep.total_inner_iters, wall, met.fval,
                         met.recerr, met.res, rep.kkt["scaled"], rep.status)


def run_experiment(specs: Sequence[InstanceSpec], trials: int,
                   params: Optional[IrParams] = None, workers: int = 1,
                   base_seed: int = 0) -> list[ExperimentRow]:
    """Solve ``trials`` independently seeded instances of every spec.

    Row order and content (apart from ``wall_s``) depend only on
    ``(specs, trials, base_seed)``, never on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = params or IrParams()
    tasks = []
    for si, spec in enumerate(specs):
        for t in range(trials):
            seeded = replace(spec, seed=instance_seed(base_seed, si, t))
            tasks.append((seeded, f"{spec.label}-{t}", params))
    if workers <= 1:
        return [_solve_one(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_one, tasks))


def _mean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def aggregate(rows: Iterable[ExperimentRow]) -> dict:
    """Summary columns, split into successful (``_s``) and failed (``_f``) runs.

    ``CPU`` columns report wall-clock seconds of the single-threaded solver.
    """
    rows = list(rows)
    ok = [r for r in rows if r.success]
    bad = [r for r in rows if not r.success]
    res = [r.res for r in rows if not math.isnan(r.res)]
    n = len(rows)
    return {
        "count": n,
        "Success": 100.0 * len(ok) / n if n else math.nan,
        "nnz": 100.0 * sum(r.nnz_match for r in rows) / n if n else math.nan,
        "Iter_s": _mean([r.inner_iters for r in ok]),
        "Iter_f": _mean([r.inner_iters for r in bad]),
        "CPU_s": _mean([r.wall_s for r in ok]),
        "CPU_f": _mean([r.wall_s for r in bad]),
        "Fval": _mean([r.fval for r in rows]),
        "RecErr_s": _mean([r.recerr for r in ok]),
        "RecErr_f": _mean([r.recerr for r in bad]),
        "Res_min": min(res) if res else math.nan,
        "Res_max": max(res) if res else math.nan,
    }


def aggregate_by_size(rows: Iterable[ExperimentRow]) -> dict:
    groups = {}
    for r in rows:
        groups.setdefault(f"{r.m}x{r.n}x{r.s}", []).append(r)
    return {k: aggregate(v) for k, v in groups.items()}


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def check_aggregates(rows: Iterable[ExperimentRow], emitted: dict) -> list[str]:
    """Keys of ``emitted`` that differ from a recomputation over ``rows``.

    Comparison is exact; ``None`` in ``emitted`` stands for NaN (as in JSON).
    """
    fresh = aggregate(rows)
    bad = []
    for key, val in emitted.items():
        if key not in fresh:
            bad.append(key)
            continue
        val = math.nan if val is None else val
        if not _same(fresh[key], val):
            bad.append(key)
    return bad


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Iterable[ExperimentRow], timings: bool = False) -> str:
    """Render rows with exactly :data:`CSV_COLUMNS`.

    ``wall_s`` is left empty unless ``timings`` is set so that repeated runs
    produce byte-identical files.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        d = asdict(r)
        if not timings:
            d["wall_s"] = ""
        w.writerow([_fmt(d[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ExperimentRow]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(ExperimentRow(
            instance_id=rec["instance_id"],
            m=int(rec["m"]), n=int(rec["n"]), s=int(rec["s"]),
            success=rec["success"] == "1",
            nnz_match=rec["nnz_match"] == "1",
            outer_iters=int(rec["outer_iters"]),
            inner_iters=int(rec["inner_iters"]),
            wall_s=float(rec["wall_s"]) if rec["wall_s"] else math.nan,
            fval=float(rec["fval"]),
            recerr=float(rec["recerr"]),
            res=float(rec["res"]),
        ))
    return out


def parse_sizes(text: str) -> list[tuple[int, int, int]]:
    """Parse ``"108x512x16,216x1024x32"`` into ``[(m, n, s), ...]``."""
    sizes = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.lower().split("x")
        if len(bits) != 3:
            raise ValueError(f"bad size {part!r}; expected MxNxS")
        sizes.append(tuple(int(b) for b in bits))
    if not sizes:
        raise ValueError("no sizes given")
    return sizes
