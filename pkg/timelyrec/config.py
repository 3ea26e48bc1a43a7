"""
Parse YAML config files & command line overrides into timelyrec settings.

A config file only needs the keys it changes, e.g.

model:
  dim: 16
  window_radius:
    hour: 3
train:
  learning_rate: 0.01

Overrides given as `--set train.batch_size=128` on the command line are
applied last.
"""

import re
from copy import deepcopy

from .calendar import DEFAULT_WINDOW_RADIUS, GRANULARITIES
from .errors import InputError
from .yaml import yaml

# Default configuration for timelyrec
# User provided config is merged into this
default = {
    "model": {
        "dim": 32,
        "history_length": 5,
        "granularities": list(GRANULARITIES),
        "window_radius": dict(DEFAULT_WINDOW_RADIUS),
        "hidden": [64, 64],
        "dropout": 0.2,
        "alpha_init": 1.0,
        "history_encoding": "history",
        "personalize": True,
        "slot_attention": "gradual",
        "gate_query": "user",
        "history_attention": "cosine",
        "temporal_encoding": True,
        "use_time_repr": True,
        "use_history_repr": True,
    },
    "train": {
        "batch_size": 256,
        "learning_rate": 0.001,
        "max_epochs": 50,
        "patience": 10,
        "seed": 42,
    },
    "data": {
        "utc_offset": 0,
        "separation": 3600,
        "split": "standard",
        "min_repeat": 3,
    },
    "eval": {
        "seed": 42,
        "batch_size": 1024,
    },
}


def load_config(config_file=None, overrides=()):
    """Load the current config as a dictionary

    merges config_file (if any) and then overrides with the default config.
    overrides is a sequence of `dotted.key=value` strings.
    """
    config = _merge_dictionaries(deepcopy(default), {})
    if config_file is not None:
        try:
            with open(config_file) as f:
                config_overrides = yaml.load(f) or {}
        except FileNotFoundError:
            raise InputError(f"Config file {config_file} does not exist")
        config = _merge_dictionaries(config, _plain(config_overrides))

    for override in overrides:
        key_path, value = parse_override(override)
        config = set_item_in_config(config, key_path, value)
    return config


def set_item_in_config(config, property_path, value):
    """
    Set key at property_path to value in config & return new config.

    config is not mutated.

    property_path is a series of dot separated values. Any part of the path
    that does not exist is created.
    """
    path_components = property_path.split(".")

    # Mutate a copy of the config, not config itself
    cur_part = config_copy = deepcopy(config)
    for i, cur_path in enumerate(path_components):
        if i == len(path_components) - 1:
            cur_part[cur_path] = value
        else:
            if cur_path not in cur_part or not isinstance(cur_part[cur_path], dict):
                cur_part[cur_path] = {}
            cur_part = cur_part[cur_path]

    return config_copy


def parse_override(override):
    """Split a `dotted.key=value` string into its key path and parsed value"""
    key_path, sep, value_str = override.partition("=")
    if not sep or not key_path:
        raise InputError(f"Override {override!r} is not of the form key.path=value")
    return key_path.strip(), parse_value(value_str.strip())


def parse_value(value_str):
    """Parse a value string"""
    if value_str is None:
        return value_str
    if re.match(r"^-?\d+$", value_str):
        return int(value_str)
    elif re.match(r"^-?\d+\.\d*(e-?\d+)?$", value_str) or re.match(
        r"^-?\d+e-?\d+$", value_str
    ):
        return float(value_str)
    elif value_str.lower() == "true":
        return True
    elif value_str.lower() == "false":
        return False
    elif "," in value_str:
        return [parse_value(part.strip()) for part in value_str.split(",") if part]
    else:
        # it's a string
        return value_str


def _plain(node):
    """Turn ruamel's commented containers into plain dicts and lists"""
    if isinstance(node, dict):
        return {str(k): _plain(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_plain(v) for v in node]
    return node


def _merge_dictionaries(a, b, path=None, update=True):
    """
    Merge two dictionaries recursively.

    From https://stackoverflow.com/a/7205107
    """
    if path is None:
        path = []
    for key in b:
        if key in a:
            if isinstance(a[key], dict) and isinstance(b[key], dict):
                _merge_dictionaries(a[key], b[key], path + [str(key)])
            elif a[key] == b[key]:
                pass  # same leaf value
            elif update:
                a[key] = b[key]
            else:
                raise InputError("Conflict at %s" % ".".join(path + [str(key)]))
        else:
            a[key] = b[key]
    return a
