"""Problem files: a JSON header plus sibling CSV files.

Explicit problems::

    {"m": 3, "n": 4, "sigma": 0.5,
     "penalty": {"kind": "log", "eps": 0.1},
     "loss": {"kind": "cauchy", "delta": 0.05},
     "partition": [[0, 1], [2, 3]],
     "matrix_csv": "A.csv", "b_csv": "b.csv"}

Partition indices are 0-based. ``penalty.kind`` is ``log`` or
``capped_log`` (with ``eps``, ``nu``, ``C``); ``loss.kind`` is ``cauchy`` or
``identity``. An optional ``x_orig_csv`` names a reference signal.

Generator-defined problems instead carry
``{"seed", "m", "n", "s", "block_size", "noise_scale", "sigma_factor"}``
and optionally ``delta``, ``eps``, ``loss_kind``, ``noise_kind``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .bench import InstanceSpec, generate_instance
from .model import (CappedLog, CauchyLoss, ConcaveScalarFunction, GroupPartition,
                    IdentityLoss, LogPenalty, ProblemInstance)

__all__ = ["penalty_from_dict", "loss_from_dict", "load_problem", "save_problem",
           "read_vector_csv", "write_vector_csv"]

GENERATOR_KEYS = ("seed", "m", "n", "s", "block_size", "noise_scale", "sigma_factor")


def penalty_from_dict(d: dict) -> ConcaveScalarFunction:
    kind = d.get("kind", "log")
    if kind == "log":
        return LogPenalty(float(d["eps"]))
    if kind == "capped_log":
        return CappedLog(float(d["eps"]), float(d["nu"]), float(d["C"]))
    raise ValueError(f"unknown penalty kind {kind!r}")


def loss_from_dict(d: dict) -> ConcaveScalarFunction:
    kind = d.get("kind", "cauchy")
    if kind == "cauchy":
        return CauchyLoss(float(d["delta"]))
    if kind == "identity":
        return IdentityLoss()
    raise ValueError(f"unknown loss kind {kind!r}")


def read_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))


def read_vector_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=float, ndmin=1).ravel()


def write_matrix_csv(path, A) -> None:
    np.savetxt(path, np.atleast_2d(A), delimiter=",", fmt="%.17g")


def write_vector_csv(path, v) -> None:
    np.savetxt(path, np.asarray(v, dtype=float).reshape(-1, 1), delimiter=",",
               fmt="%.17g")


def load_problem(path) -> tuple[ProblemInstance, Optional[np.ndarray]]:
    """Read a problem file; returns ``(problem, x_orig or None)``."""
    path = Path(path)
    doc = json.loads(path.read_text())
    if "matrix_csv" not in doc and all(k in doc for k in GENERATOR_KEYS):
        fields = {k: doc[k] for k in GENERATOR_KEYS}
        for k in ("delta", "eps", "loss_kind", "noise_kind"):
            if k in doc:
                fields[k] = doc[k]
        return generate_instance(InstanceSpec(**fields))
    base = path.parent
    A = read_matrix_csv(base / doc["matrix_csv"])
    b = read_vector_csv(base / doc["b_csv"])
    m, n = A.shape
    if (doc.get("m", m), doc.get("n", n)) != (m, n):
        raise ValueError(f"header says {doc['m']}x{doc['n']} but matrix is {m}x{n}")
    partition = GroupPartition(n, doc["partition"])
    prob = ProblemInstance(A, b, float(doc["sigma"]), partition,
                           penalty_from_dict(doc["penalty"]),
                           loss_from_dict(doc["loss"]))
    x_orig = None
    if doc.get("x_orig_csv"):
        x_orig = read_vector_csv(base / doc["x_orig_csv"])
    return prob, x_orig


def save_problem(out_dir, prob: ProblemInstance, x_orig=None,
                 name: str = "problem") -> Path:
    """Write ``<name>.json`` plus CSVs into ``out_dir``; returns the JSON path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m, n = prob.shape
    doc = {
        "m": m,
        "n": n,
        "sigma": prob.sigma,
        "penalty": prob.psi.to_dict(),
        "loss": prob.phi.to_dict(),
        "partition": [list(g) for g in prob.partition.groups],
        "matrix_csv": f"{name}_A.csv",
        "b_csv": f"{name}_b.csv",
    }
    write_matrix_csv(out / doc["matrix_csv"], prob.A)
    write_vector_csv(out / doc["b_csv"], prob.b)
    if x_orig is not None:
        doc["x_orig_csv"] = f"{name}_x_orig.csv"
        write_vector_csv(out / doc["x_orig_csv"], x_orig)
    target = out / f"{name}.json"
    target.write_text(json.dumps(doc, indent=1))
    return target
