#!/usr/bin/env python3
# src/main.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
Main entry point for hlab: hlab <experiment> --config path.json [--out dir] [--override key=value ...]
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import click

from . import __version__
from .core.config import EXPERIMENTS, get_config, load_experiment_config
from .core.errors import HlabError
from .services.experiments import run

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging from config/config.yml (file plus stdout)."""
    try:
        config = get_config()
        log_level = getattr(logging, (level or config.logging.level).upper(), logging.INFO)
        log_file = Path(config.logging.file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        logging.basicConfig(
            level=log_level,
            format=config.logging.format,
            handlers=[logging.FileHandler(log_file), logging.StreamHandler(sys.stdout)],
        )
    except Exception as e:
        # Fallback logging configuration
        logging.basicConfig(
            level=getattr(logging, (level or "INFO").upper(), logging.INFO),
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            handlers=[logging.StreamHandler(sys.stdout)],
        )
        logging.warning(f"Could not load logging config: {e}. Using defaults.")


def execute(
    experiment: str,
    config_path: Path,
    out: Optional[Path] = None,
    overrides: Sequence[str] = (),
    show_progress: Optional[bool] = None,
) -> int:
    """Load, validate and run one experiment; returns the process exit code."""
    if show_progress is None:
        show_progress = get_config().ui.show_progress
    try:
        config = load_experiment_config(config_path, overrides, experiment)
        result = run(config, out, show_progress)
    except HlabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"Error: {e}", err=True)
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Operation cancelled by user")
        return 1
    click.echo(f"{result.experiment}: wrote {len(result.files)} file(s) to {result.output_dir}")
    return 0


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("experiment", type=click.Choice(EXPERIMENTS))
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Experiment configuration (JSON or YAML).",
)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE", help="Dotted-key override, JSON value.")
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), help="Set logging level.")
@click.option("--progress/--no-progress", default=None, help="Show a progress bar over sweeps.")
@click.version_option(__version__, prog_name="hlab")
@click.pass_context
def cli(
    ctx: click.Context,
    experiment: str,
    config_path: Path,
    out: Optional[Path],
    overrides: Sequence[str],
    log_level: Optional[str],
    progress: Optional[bool],
) -> None:
    """Run a Helmholtz laboratory EXPERIMENT."""
    setup_logging(log_level)
    ctx.exit(execute(experiment, config_path, out, overrides, progress))


def main(argv: Optional[Sequence[str]] = None) -> None:
    cli.main(args=list(argv) if argv is not None else None, prog_name="hlab")


if __name__ == "__main__":
    main()
