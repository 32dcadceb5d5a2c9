"""Command line entry points.

Exit codes: 0 success, 2 hypothesis failure (unstable pair, broken
contact-chain monotonicity, ordering violation), 3 numerical failure
(non-convergence, scheme parameter out of range), 4 config or run-dir
errors.
"""

import json
import sys

import click

from . import __version__
from .config import ExperimentConfig
from .errors import (ConfigError, MonotonicityError, NonConvergenceError,
                     OrderingViolationError, RunLockError,
                     SchemeParameterError, StabilityError)
from .harness import (gate_passed, run_check, run_effective, run_plotdata,
                      run_sweep_eps)

EXIT_HYPOTHESIS = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


def _fail(code, kind, err):
    click.echo(f"{kind}: {err}", err=True)
    witness = getattr(err, "witness", None)
    if witness:
        click.echo("witness: " + json.dumps(witness, default=str), err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        return fn()
    except (StabilityError, MonotonicityError, OrderingViolationError) as e:
        _fail(EXIT_HYPOTHESIS, "hypothesis failure", e)
    except (NonConvergenceError, SchemeParameterError) as e:
        _fail(EXIT_NUMERICAL, "numerical failure", e)
    except (RunLockError, ConfigError) as e:
        _fail(EXIT_CONFIG, "config error", e)


def _load(config, out, seed, threads):
    cfg = _guarded(lambda: ExperimentConfig.from_yaml(config))
    if out is not None:
        cfg.output = out
    if seed is not None:
        cfg.seeds = [seed]
    if threads is not None:
        cfg.threads = threads
    return cfg


def _common(fn):
    fn = click.option("--config", required=True,
                      type=click.Path(dir_okay=False),
                      help="experiment YAML")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False),
                      help="run directory (default: config output)")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="override the seed list with one seed")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="parallel p-point tasks")(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Min-max Hamiltonian experiments: hypothesis checks, effective
    curves, homogenization sweeps, plot data."""


@main.command()
@_common
def check(config, out, seed, threads):
    """Validate ordering, pair stability, contact-chain monotonicity,
    and thin level sets; write the manifest and stop."""
    cfg = _load(config, out, seed, threads)
    manifest = _guarded(lambda: run_check(cfg, out_dir=cfg.output))
    for name, ok in sorted(manifest["verdicts"].items()):
        click.echo(f"{name}: {'pass' if ok else 'FAIL'}")
    if not gate_passed(manifest["verdicts"]):
        for name, ok in manifest["verdicts"].items():
            if not ok and manifest["witnesses"].get(name):
                click.echo("witness[%s]: %s" % (
                    name, json.dumps(manifest["witnesses"][name],
                                     default=str)), err=True)
        sys.exit(EXIT_HYPOTHESIS)


@main.command()
@_common
@click.option("--force", is_flag=True, help="run despite failed hypotheses")
def effective(config, out, seed, threads, force):
    """Piece curves, nested formula curve, direct estimates, and the
    numeric-vs-formula comparison files."""
    cfg = _load(config, out, seed, threads)
    manifest = _guarded(lambda: run_effective(cfg, out_dir=cfg.output,
                                              force=force, threads=threads))
    click.echo("max_abs_err: %.6g" % manifest["max_abs_err"])


@main.command("sweep-eps")
@_common
@click.option("--force", is_flag=True, help="run despite failed hypotheses")
def sweep_eps(config, out, seed, threads, force):
    """Oscillatory vs homogenized evolution error across the eps
    schedule."""
    cfg = _load(config, out, seed, threads)
    manifest = _guarded(lambda: run_sweep_eps(cfg, out_dir=cfg.output,
                                              force=force, threads=threads))
    for eps, err in zip(cfg.eps_schedule, manifest["errors"]):
        click.echo("eps=%g: err=%.6g" % (eps, err))
    click.echo("nonincreasing: %s" % manifest["nonincreasing"])


@main.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
def plotdata(run_dir):
    """Emit gnuplot-style .dat files from a completed run directory."""
    written = _guarded(lambda: run_plotdata(run_dir))
    for path in written:
        click.echo(path)


if __name__ == "__main__":
    main()
