"""Command-line entry points for the experiment drivers.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
failures (non-convergence or infeasible constraints).
"""

from __future__ import annotations

import json
import sys

import click

from . import experiments
from .exceptions import ConvergenceError, FitError, InfeasibilityError

_RUNNERS = {
    "survey": experiments.run_survey_experiment,
    "fairness": experiments.run_fairness_experiment,
    "portfolio": experiments.run_portfolio_experiment,
    "reweight": experiments.run_reweight,
}


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ValueError(f"cannot read config {path}: {err}") from err
    if not isinstance(config, dict):
        raise ValueError("config must be a JSON object")
    return config


def _run(subcommand, config_path, seed, out, jobs):
    try:
        config = _load_config(config_path)
        report = _RUNNERS[subcommand](config, seed=seed, out_dir=out, n_jobs=jobs)
    except (ValueError, KeyError, TypeError) as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    except (ConvergenceError, InfeasibilityError, FitError, FloatingPointError) as err:
        click.echo(f"numerical failure: {err}", err=True)
        sys.exit(3)
    click.echo(json.dumps({"experiment": report["experiment"], "out": out}))


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON config file for the subcommand.")(fn)
    fn = click.option("--seed", type=int, required=True, help="Global seed.")(fn)
    fn = click.option("--out", type=click.Path(), required=True, help="Output directory.")(fn)
    fn = click.option("--jobs", type=int, default=1, show_default=True,
                      help="Parallel replicate workers.")(fn)
    return fn


@click.group()
def main():
    """Entropy-maximal reweighting experiments."""


@main.command()
@_common_options
def survey(config_path, seed, out, jobs):
    """Bias/coverage study for the survey estimators."""
    _run("survey", config_path, seed, out, jobs)


@main.command()
@_common_options
def fairness(config_path, seed, out, jobs):
    """Group-parity regression on synthetic two-group data."""
    _run("fairness", config_path, seed, out, jobs)


@main.command()
@_common_options
def portfolio(config_path, seed, out, jobs):
    """Mean-variance and entropy/transport portfolio sweeps."""
    _run("portfolio", config_path, seed, out, jobs)


@main.command()
@_common_options
def reweight(config_path, seed, out, jobs):
    """Maximum-entropy weights for explicit atoms and a target."""
    _run("reweight", config_path, seed, out, jobs)


if __name__ == "__main__":
    main()
