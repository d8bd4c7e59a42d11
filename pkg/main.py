"""Command-line front end: stress tables, plug queries, solver runs, property suites, sweeps."""
import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import ChannelConfig, EvalConfig, SweepGrid, TorusConfig, load_config
from constitutive import flow_criterion, stress_exact_batch, stress_regularized
from errors import YieldStressError
from parallel_processor import ParallelProcessor
from run_processor import RunProcessor
from subdiff_geometry import ellipsoid_gauge, in_subdifferential_at_plug, violation_witness
from tensor_core import as_matd, decompose, inner, norm
from utils import frame_to_csv, matrix_columns, read_matrix_csv, setup_logging, thread_cap, write_csv, write_json
from verify_harness import SUITE_ORDER, run_suites

EXIT_OK = 0
EXIT_SUITE_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_DIVERGED = 3


def format_validation_error(error: ValidationError) -> str:
    """One '<dotted.field.path>: <message>' line per pydantic error."""
    lines = []
    for err in error.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "\n".join(lines)


def exits_on_errors(command):
    """Map validation and domain errors to the documented exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            click.echo(format_validation_error(e), err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except YieldStressError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@click.option("--quiet", "-q", is_flag=True, help="Warnings and errors only.")
def cli(verbose, quiet):
    """Viscoplastic constitutive laws, channel and torus solvers, property suites."""
    setup_logging(verbose=verbose, quiet=quiet)


@cli.command("eval-stress")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="CSV with d*d numeric columns per row (row-major).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the table here instead of stdout.")
@exits_on_errors
def eval_stress(config_path, input_path, out_path):
    """Exact and regularized stress with plug flags for every input matrix."""
    config = load_config(config_path, EvalConfig)
    params, dim = config.params, config.dim
    X = read_matrix_csv(input_path, dim)
    omega = as_matd(config.omega, dim) if config.omega is not None else np.zeros((dim, dim))

    exact, plug = stress_exact_batch(X, omega, params, config.tol_plug)
    regularized = stress_regularized(X, omega, params, config.reg_n)
    table = pd.DataFrame({"row": np.arange(len(X)), "plug_flag": plug.astype(int),
                          "flow_criterion": flow_criterion(X, omega, params)})
    for prefix, values in (("S", exact), ("Sn", regularized)):
        columns = pd.DataFrame(values.reshape(len(X), dim * dim), columns=matrix_columns(prefix, dim))
        table = pd.concat([table, columns], axis=1)

    logging.info(f"Evaluated {len(X)} matrices, {int(plug.sum())} at plug points")
    if out_path:
        write_csv(table, out_path)
    else:
        click.echo(frame_to_csv(table), nl=False)


@cli.command("check-plug")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@exits_on_errors
def check_plug(config_path, out_path):
    """Subdifferential membership at the plug, with a violation witness when outside."""
    config = load_config(config_path, EvalConfig)
    params, dim = config.params, config.dim
    omega = as_matd(config.omega, dim) if config.omega is not None else np.zeros((dim, dim))

    answers = []
    for i, query in enumerate(config.queries):
        X_star = as_matd(query.x_star, dim)
        plug_matrix = as_matd(query.plug_matrix, dim) if query.plug_matrix is not None else None
        member = bool(in_subdifferential_at_plug(X_star, omega, params, plug_matrix=plug_matrix))
        answer = {"query": i, "member": member}
        if params.nu > 0:
            answer["gauge"] = ellipsoid_gauge(X_star, params)
            answer["tau_hat"] = params.tau_hat
            if not member:
                Y = violation_witness(X_star, params)
                answer["witness"] = Y.tolist()
                answer["witness_pairing"] = float(inner(X_star, Y))
                Ys, Ya = decompose(Y)
                support = float(norm(Ys)) ** params.q + params.nu * float(norm(Ya)) ** params.q
                answer["witness_support"] = params.tau_hat * support ** (1.0 / params.q)
        answers.append(answer)

    text = json.dumps(answers, sort_keys=True, indent=2)
    if out_path:
        write_json(answers, out_path)
    else:
        click.echo(text)


@cli.command("run-channel")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@exits_on_errors
def run_channel(config_path, out_dir):
    """Transient channel flow to steady state: profile.csv, ledger.csv, manifest.json."""
    config = load_config(config_path, ChannelConfig)
    manifest = RunProcessor().process("channel", config, out_dir)
    summary = manifest["summary"]
    click.echo(f"steady={summary['steady']} plug_half_width={summary['plug_half_width']:.6g} "
               f"content_hash={manifest['content_hash']}")


@cli.command("run-galerkin")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@exits_on_errors
def run_galerkin(config_path, out_dir):
    """Periodic Galerkin run: series.csv and manifest.json."""
    config = load_config(config_path, TorusConfig)
    manifest = RunProcessor().process("galerkin", config, out_dir, base_dir=Path(config_path).parent)
    summary = manifest["summary"]
    click.echo(f"final_energy={summary['final_energy']:.6g} bound_violations={summary['bound_violations']} "
               f"content_hash={manifest['content_hash']}")


@cli.command("verify")
@click.option("--suite", "suites", multiple=True, default=("all",), show_default=True,
              type=click.Choice(("all",) + SUITE_ORDER))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--samples", default=None, type=click.IntRange(min=1),
              help="Samples per parameter point (suite defaults otherwise).")
@click.option("--acceptance", is_flag=True,
              help="Use the acceptance sample counts (1e5 per point for coercivity, monotonicity, stress_bound).")
@click.option("--out", "out_dir", default="reports", show_default=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=None, type=click.IntRange(min=1), help="Worker threads (capped by YSL_THREADS).")
@exits_on_errors
def verify(suites, seed, samples, acceptance, out_dir, jobs):
    """Run property suites; exit 1 when any suite fails."""
    reports = run_suites(list(suites), seed, samples=samples, jobs=thread_cap(jobs),
                         profile="acceptance" if acceptance else "default")
    out = Path(out_dir)
    failed = []
    for report in reports:
        write_json(report.to_dict(), out / f"{report.suite}.json")
        click.echo(f"{report.suite}: {report.status}")
        if report.status == "failed":
            failed.append(report.suite)
    if failed:
        click.echo(f"failed suites: {', '.join(failed)}", err=True)
        sys.exit(EXIT_SUITE_FAILURE)


@cli.command("sweep")
@click.option("--grid", "grid_path", required=True, type=click.Path(dir_okay=False))
@click.option("--jobs", default=None, type=click.IntRange(min=1))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="Overrides the grid's 'out' directory.")
@exits_on_errors
def sweep(grid_path, jobs, out_dir):
    """Parallel solver runs over the Cartesian product of the grid's 'vary' lists."""
    grid = load_config(grid_path, SweepGrid)
    out_root = Path(out_dir) if out_dir else Path(grid_path).parent / grid.out
    processor = ParallelProcessor(max_workers=jobs)
    results = processor.process_runs_parallel(grid, out_root, base_dir=Path(grid_path).parent)
    aggregated = processor.aggregate_results(results)
    statuses = [r.get("status") for r in results]
    click.echo(f"{statuses.count('completed')}/{len(results)} runs completed -> {out_root}")

    if aggregated["status"] == "success" and all(s == "completed" for s in statuses):
        return
    if "diverged" in statuses:
        sys.exit(EXIT_DIVERGED)
    if "invalid" in statuses:
        sys.exit(EXIT_CONFIG_ERROR)
    sys.exit(EXIT_SUITE_FAILURE)


if __name__ == "__main__":
    cli()
