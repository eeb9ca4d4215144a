"""Helpers shared by the scenario commands."""

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from linbft.reports import EXIT_CONFIG

VERBOSITY_LEVELS = {0: logging.ERROR, 1: logging.WARNING, 2: logging.INFO, 3: logging.DEBUG}


def linbft_settings():
    return getattr(settings, "LINBFT", {})


def set_library_verbosity(verbosity):
    """Map Django's --verbosity onto the "linbft" logger."""
    logging.getLogger("linbft").setLevel(VERBOSITY_LEVELS.get(verbosity, logging.DEBUG))


def resolve_config(path):
    """Find a scenario file as given, or inside LINBFT["CONFIG_DIR"]."""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    config_dir = linbft_settings().get("CONFIG_DIR")
    if config_dir is not None and not candidate.is_absolute():
        inside = Path(config_dir) / candidate
        if inside.exists():
            return inside
        if not inside.suffix and inside.with_suffix(".toml").exists():
            return inside.with_suffix(".toml")
    raise CommandError(f"Scenario file not found: {path}", returncode=EXIT_CONFIG)


def output_dir(out):
    if out:
        return Path(out)
    return Path(linbft_settings().get("REPORT_DIR", "reports"))


def overrides_from(options, n=None):
    overrides = {}
    if options.get("seed") is not None:
        overrides["seed"] = options["seed"]
    if n is not None:
        overrides["n"] = n
    return overrides
