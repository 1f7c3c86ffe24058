"""Silicon-vacancy field sensing: device electrostatics, sensor forward models,
inversion and an experiment workbench."""

import json as _json
import os as _os

from ._vsi import *  # noqa: F401,F403
from ._vsi import ExperimentConfig, run_invert as _run_invert

__all__ = [name for name in dir() if not name.startswith("_")]


def load_config(path):
    """Parse and validate a JSON experiment config."""
    return ExperimentConfig.from_file(_os.fspath(path))


def config_dict(config):
    """Normalised config as a plain dict, with every default filled in."""
    return _json.loads(config.to_json())


def invert(config, data, out, seed=None):
    """Run the inversion pipeline on a dataset directory and return the report dict."""
    return _json.loads(_run_invert(config, _os.fspath(data), _os.fspath(out), seed))


__all__ += ["load_config", "config_dict", "invert"]
