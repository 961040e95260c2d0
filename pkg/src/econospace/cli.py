"""Batch command line: ``econospace {simulate,field,decompose,ensemble} --config FILE``.

Exit codes: 0 success, 2 config error, 3 numeric/degeneracy error, 4 I/O
error. Failures print one JSON object to stderr. ``ECONOSPACE_LOG`` sets the
log level (default WARNING).
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import pipelines
from .config import parse_config
from .errors import ConfigError, EconospaceError

EXIT_IO = 4


def _fail(kind, exit_code, message, module=None, operation=None, errors=None):
    doc = {"status": "error", "kind": kind, "message": message, "module": module, "operation": operation,
           "errors": errors or []}
    click.echo(json.dumps(doc), err=True)
    sys.exit(exit_code)


def _run(subcommand, config, out, fmt, seed, allow_unstable):
    unstable = True if allow_unstable else None
    try:
        cfg, digest = parse_config(config, allow_unstable=unstable, seed=seed)
        fmt = fmt or cfg.output.format
        out_dir = Path(out or cfg.output.directory or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        effective_seed = cfg.seed if seed is None else seed
        meta = {"config_sha256": digest, "seed": effective_seed, "subcommand": subcommand}
        if subcommand == "simulate":
            written = pipelines.simulate(cfg, meta, out_dir, fmt)
        elif subcommand == "field":
            written = pipelines.field(cfg, meta, out_dir, fmt, unstable)
        elif subcommand == "decompose":
            written = pipelines.decompose(cfg, meta, out_dir, fmt, unstable)
        else:
            written = pipelines.ensemble(cfg, meta, out_dir, fmt, seed)
    except ConfigError as exc:
        _fail("config", exc.exit_code, str(exc), exc.module, exc.operation, exc.errors)
    except EconospaceError as exc:
        _fail("numeric", exc.exit_code, str(exc), exc.module, exc.operation)
    except OSError as exc:
        _fail("io", EXIT_IO, str(exc))
    for p in written:
        click.echo(str(p))


_options = [
    click.option("--config", "config", required=True, type=click.Path(dir_okay=False),
                 help="Scenario JSON file."),
    click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                 help="Output directory (default: output.directory or cwd)."),
    click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None),
    click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None,
                 help="Override the config seed."),
    click.option("--allow-unstable", is_flag=True,
                 help="Admit non-oscillatory coupling (a*be > 0) with exponential solutions."),
]


def _with_options(fn):
    for opt in reversed(_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Economic-space simulations and price/return decompositions."""
    level = os.environ.get("ECONOSPACE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_with_options
def simulate(config, out, fmt, seed, allow_unstable):
    """Agents -> windowed aggregation -> per-cell field CSV."""
    _run("simulate", config, out, fmt, seed, allow_unstable)


@main.command()
@_with_options
def field(config, out, fmt, seed, allow_unstable):
    """Continuity-equation stepping with a domain-balance report."""
    _run("field", config, out, fmt, seed, allow_unstable)


@main.command()
@_with_options
def decompose(config, out, fmt, seed, allow_unstable):
    """Oscillator trajectories -> price/return decomposition."""
    _run("decompose", config, out, fmt, seed, allow_unstable)


@main.command()
@_with_options
def ensemble(config, out, fmt, seed, allow_unstable):
    """Monte Carlo distribution report."""
    _run("ensemble", config, out, fmt, seed, allow_unstable)


if __name__ == "__main__":  # pragma: no cover
    main()
