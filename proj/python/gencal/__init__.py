"""Python access to the gencal C++ core."""

import json

from ._core import (
    ConfigError,
    TrainingAborted,
    accuracy,
    ari,
    config_keys,
    forward_diffuse,
    hungarian,
    kmeans,
    l_ce,
    l_clr,
    l_cwm,
    l_d,
    l_ml,
    linear_schedule,
    make_blobs,
    make_glyphs,
    make_rings,
    nmi,
    parse_config,
)
from ._core import run_experiment as _run_experiment


def run_experiment(config_text="", **overrides):
    """Runs one experiment and returns the parsed report.

    Keyword overrides use double underscores for dots, e.g. train__rounds=1.
    """
    lines = [config_text]
    lines += [f"{k.replace('__', '.')} = {v}" for k, v in overrides.items()]
    return json.loads(_run_experiment("\n".join(lines)))


__all__ = [
    "ConfigError",
    "TrainingAborted",
    "accuracy",
    "ari",
    "config_keys",
    "forward_diffuse",
    "hungarian",
    "kmeans",
    "l_ce",
    "l_clr",
    "l_cwm",
    "l_d",
    "l_ml",
    "linear_schedule",
    "make_blobs",
    "make_glyphs",
    "make_rings",
    "nmi",
    "parse_config",
    "run_experiment",
]
