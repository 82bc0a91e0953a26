"""Command line entry point: ``grpreweight gen|solve|bench|verify``.

Exit status is 0 on completion, 1 on a hard error and 2 on bad arguments.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from .files import load_problem, read_vector_csv, save_problem, write_vector_csv
from .kkt import kkt_report, mfcq_boundary_check
from .model import CauchyLoss, IdentityLoss, LogPenalty
from .solver import IrParams, ir_solve


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _clean(obj):
    # strict JSON has no NaN/Infinity
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default))),
                      indent=1)


def _fail(exc: Exception):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Group-sparse recovery with a reweighted proximal ADMM solver."""


@main.command()
@click.option("--m", type=click.IntRange(min=1), required=True, help="Measurements.")
@click.option("--n", type=click.IntRange(min=2), required=True, help="Signal length.")
@click.option("--s", type=click.IntRange(min=1), required=True, help="Nonzero blocks.")
@click.option("--block-size", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--noise-scale", type=float, default=0.005, show_default=True)
@click.option("--sigma-factor", type=float, default=1.2, show_default=True)
@click.option("--loss", type=click.Choice(["cauchy", "identity"]), default="cauchy",
              show_default=True)
@click.option("--noise", type=click.Choice(["gaussian", "cauchy"]), default="gaussian",
              show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Output directory.")
def gen(m, n, s, block_size, seed, noise_scale, sigma_factor, loss, noise, out):
    """Generate a synthetic instance as problem JSON plus CSVs."""
    try:
        spec = bench_mod.InstanceSpec(m, n, s, block_size=block_size,
                                      noise_scale=noise_scale,
                                      sigma_factor=sigma_factor, seed=seed,
                                      loss_kind=loss, noise_kind=noise)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    try:
        prob, x_orig = bench_mod.generate_instance(spec)
        path = save_problem(out, prob, x_orig)
    except Exception as exc:
        _fail(exc)
    click.echo(str(path))


def _override_model(prob, loss, eps, delta):
    if eps is not None:
        prob = replace(prob, psi=LogPenalty(eps))
    if loss == "identity":
        prob = replace(prob, phi=IdentityLoss())
    elif loss == "cauchy" or delta is not None:
        d = delta if delta is not None else getattr(prob.phi, "delta", 0.05)
        prob = replace(prob, phi=CauchyLoss(d))
    return prob


@main.command()
@click.option("--problem", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--loss", type=click.Choice(["cauchy", "identity"]), default=None,
              help="Override the loss stored in the problem.")
@click.option("--eps", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Override with a log penalty of this epsilon.")
@click.option("--delta", type=click.FloatRange(min=0, min_open=True), default=None,
              help="Cauchy loss scale.")
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-4,
              show_default=True, help="Relative outer stopping tolerance.")
@click.option("--max-outer", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--max-inner", type=click.IntRange(min=1), default=50000, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None,
              help="Write the full JSON report here.")
@click.option("--emit-x", is_flag=True, help="Include the solution vector in the report.")
@click.option("--x-out", type=click.Path(dir_okay=False), default=None,
              help="Write the solution vector as CSV (readable by verify).")
def solve(problem, loss, eps, delta, tol, max_outer, max_inner, report, emit_x, x_out):
    """Solve a problem file and print a JSON summary."""
    try:
        prob, x_orig = load_problem(problem)
        prob = _override_model(prob, loss, eps, delta)
        params = IrParams(outer_tol=tol, max_outer=max_outer, max_inner=max_inner)
        rep = ir_solve(prob, params)
    except Exception as exc:
        _fail(exc)
    full = rep.to_dict(emit_x=emit_x)
    if x_orig is not None and x_orig.shape == rep.x.shape:
        full["recovery"] = vars(bench_mod.recovery_metrics(rep.x, x_orig, prob))
    try:
        if report:
            Path(report).write_text(_dumps(full))
        if x_out:
            write_vector_csv(x_out, rep.x)
    except OSError as exc:
        _fail(exc)
    summary = {k: v for k, v in full.items() if k != "trace"}
    click.echo(_dumps(summary))


@main.command()
@click.option("--sizes", required=True, help='Comma list like "108x512x16,216x1024x32".')
@click.option("--trials", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Per-instance CSV output (stdout gets the aggregates).")
@click.option("--block-size", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--loss", type=click.Choice(["cauchy", "identity"]), default="cauchy",
              show_default=True)
@click.option("--noise", type=click.Choice(["gaussian", "cauchy"]), default="gaussian",
              show_default=True)
@click.option("--timings", is_flag=True,
              help="Fill the wall_s column (output is then no longer reproducible).")
def bench(sizes, trials, seed, workers, csv_path, block_size, loss, noise, timings):
    """Run the recovery benchmark and print aggregates as JSON."""
    try:
        specs = [bench_mod.InstanceSpec(m, n, s, block_size=block_size, loss_kind=loss,
                                        noise_kind=noise)
                 for m, n, s in bench_mod.parse_sizes(sizes)]
    except ValueError as exc:
        raise click.UsageError(str(exc))
    try:
        rows = bench_mod.run_experiment(specs, trials, IrParams(), workers=workers,
                                        base_seed=seed)
        if csv_path:
            Path(csv_path).write_text(bench_mod.rows_to_csv(rows, timings=timings))
    except Exception as exc:
        _fail(exc)
    errors = [r.instance_id for r in rows if r.status == "error"]
    out = {"by_size": bench_mod.aggregate_by_size(rows),
           "overall": bench_mod.aggregate(rows), "errors": errors}
    click.echo(_dumps(out))


@main.command()
@click.option("--problem", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--point", type=click.Path(exists=True, dir_okay=False), required=True,
              help="CSV with one coordinate per line.")
@click.option("--lambda-hint", type=click.FloatRange(min=0), default=0.0,
              show_default=True, help="Multiplier on the ADMM scale (halved internally).")
def verify(problem, point, lambda_hint):
    """Print KKT residuals of a point as JSON."""
    try:
        prob, _ = load_problem(problem)
        x = read_vector_csv(point)
    except Exception as exc:
        _fail(exc)
    if x.shape != (prob.shape[1],):
        raise click.UsageError(f"point has {x.size} entries, problem has n={prob.shape[1]}")
    try:
        res = kkt_report(x, prob, lambda_hint).to_dict()
        res["mfcq"] = mfcq_boundary_check(x, prob).status
    except Exception as exc:
        _fail(exc)
    click.echo(_dumps(res))


if __name__ == "__main__":  # pragma: no cover
    main()
