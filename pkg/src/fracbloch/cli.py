"""Command-line interface.

Six subcommands drive the experiment runners; every run takes a preset
and/or a config file, writes outputs plus the resolved config to --out, and
exits with 0 on success, 2 on configuration errors, 3 on structured
numerical-contract failures, and 4 on solver failures.
"""

from __future__ import annotations

import logging
import sys

import click
import scipy.fft as sfft

from .config import load_run_config, resolve_config
from .errors import ConfigError, ContractError, SolverError
from .experiments import run_experiment
from .io import ensure_outdir, write_json

EXIT_CONFIG = 2
EXIT_CONTRACT = 3
EXIT_SOLVER = 4


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(),
                      default=None, help="TOML config file")(fn)
    fn = click.option("--preset", default=None,
                      help="named preset (see `fracbloch presets`)")(fn)
    fn = click.option("--out", "outdir", required=True,
                      type=click.Path(), help="output directory")(fn)
    fn = click.option("--threads", default=1, show_default=True,
                      help="worker threads for independent solves")(fn)
    return fn


def _run(kind: str, preset, config_path, outdir, threads) -> None:
    logging.basicConfig(level=logging.INFO,
                        format="%(name)s: %(message)s")
    try:
        raw = load_run_config(preset, config_path)
        cfg = resolve_config(raw, kind)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        with sfft.set_workers(max(1, threads)):
            run_experiment(kind, cfg, outdir, threads=threads)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except ContractError as exc:
        click.echo(f"numerical contract failure: {exc}", err=True)
        ensure_outdir(outdir)
        write_json(f"{outdir}/error.json",
                   {"error": type(exc).__name__, "message": str(exc)})
        sys.exit(EXIT_CONTRACT)
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        ensure_outdir(outdir)
        write_json(f"{outdir}/error.json",
                   {"error": type(exc).__name__, "message": str(exc)})
        sys.exit(EXIT_SOLVER)


@click.group()
def main():
    """Fractional honeycomb Bloch toolkit."""


@main.command()
@_common
def bands(config_path, preset, outdir, threads):
    """Band tables along a path through K or on a grid patch around it."""
    _run("bands", preset, config_path, outdir, threads)


@main.command()
@_common
def dirac(config_path, preset, outdir, threads):
    """Dirac-point report: E_D, vF, theta, b1, b2, cone fit, gap table."""
    _run("dirac", preset, config_path, outdir, threads)


@main.command()
@_common
def evolve(config_path, preset, outdir, threads):
    """Evolve a wave packet under the fractional NLS; emit snapshots."""
    _run("evolve", preset, config_path, outdir, threads)


@main.command()
@_common
def validate(config_path, preset, outdir, threads):
    """Envelope-approximation convergence study across epsilon."""
    _run("validate", preset, config_path, outdir, threads)


@main.command("shallow-check")
@_common
def shallow_check(config_path, preset, outdir, threads):
    """Compare computed Dirac data with shallow-potential asymptotics."""
    _run("shallow-check", preset, config_path, outdir, threads)


@main.command("product-rule")
@_common
def product_rule(config_path, preset, outdir, threads):
    """Two-scale fractional product-rule residual scan over epsilon."""
    _run("product-rule", preset, config_path, outdir, threads)


@main.command()
def presets():
    """List available presets."""
    from .config import preset_names
    for name in preset_names():
        click.echo(name)


if __name__ == "__main__":
    main()
