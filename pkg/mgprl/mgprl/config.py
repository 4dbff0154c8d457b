#!/usr/bin/env python3
"""config

This submodule handles reading the config yaml file.
We use flask's Config class as the base of our config, so all this
submodule does is extend it with yaml loading, default values,
command-line overrides and a few checked accessors that report
problems by their key path.

This is a terminal submodule for the mgprl package, and so should
not import any additional mgprl submodules except the exceptions.
"""
import os, copy, yaml, logging
from flask import Config as BaseConfig

from mgprl.exceptions import ConfigError

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "mgprl-manifest"

DEFAULTS = {
    "WORLD": "worlds/house.yml",
    "ROBOTS": 3,
    "INITIAL_SAMPLES": 15,
    "SAMPLES_PER_CYCLE": 5,
    "CYCLES": 20,
    "NOISE_LEVEL": 0.0,
    "DROPOUT": 0.0,
    "SEED": 0,
    "WALK": {"STEP": 0.5, "MAX_TURN_DEG": 45.0},
    "HIERARCHY": {
        "LEVELS": 4,
        "CELL_SIZE": 1.0,
        "MARGIN": 1.0,
        "REFINEMENT_FACTOR": 2,
        "NEIGHBORHOOD_RADIUS": 1,
        "RSSI_CLOSENESS": 6.0,
        "SCALE_BY_COUNT": True,
        "REGION": "map",
    },
    "WEIGHTING": {"EPSILON": 0.01, "ALPHA": 1.5},
    "ALIGNMENT": {
        "LAMBDA": 0.05,
        "MAX_CANDIDATE_COMBINATIONS": 512,
        "REFLECTION_ALLOWED": False,
        "NORMALIZE_BY_COUNT": False,
        "USE_CANDIDATES": True,
    },
    "MOGP": {"RANK": 1, "RESTARTS": 3, "MAX_ITER": 200, "REFIT_EVERY": 5,
             "NOISE_FLOOR": 0.01, "SCALE_BOUND": 4.0},
    "MODELER": "Coregionalized",
    "ORACLES": ["DenseGp", "Alignment", "Maxima"],
    "SELFTEST_FAULT": None,
    "FIELD_EVERY": 0,
    "CONSISTENCY_WARNING": 0.5,
    "OUT_DIR": "out",
    "DEBUG": False,
}


def _merge(base, update, key_path=""):
    for key, value in update.items():
        if not isinstance(key, str) or not key.isupper():
            continue
        path = "{0}.{1}".format(key_path, key) if key_path else key
        if isinstance(base.get(key), dict) and isinstance(value, dict):
            _merge(base[key], value, path)
        elif isinstance(base.get(key), dict) and value is not None:
            raise ConfigError(path, "expected a mapping, got {0!r}".format(value))
        else:
            base[key] = copy.deepcopy(value)


class Config(BaseConfig):
    """Extension of the flask config class.

    Starts from :data:`DEFAULTS` and adds yaml loading, dotted overrides and
    the checked accessors :meth:`section` and :meth:`number`.
    """
    def __init__(self, root_path=".", defaults=None):
        super().__init__(root_path, copy.deepcopy(DEFAULTS if defaults is None else defaults))
        self.setdefault("OVERRIDES", [])

    def from_yaml(self, config_file):
        """Yaml config getter function.

        Reads a yaml config file and merges its uppercase keys into this config.
        A section named after ``MGPRL_ENV`` (default ``development``) is used in
        place of the whole file when present. A run manifest is accepted too,
        in which case its recorded configuration is loaded.

        Args:
            config_file (str): the path of the config file to load.
                               Can be relative or absolute.

        Raises:
            ConfigError: the file cannot be read or is not a mapping.
        """
        env = os.environ.get("MGPRL_ENV", "development")
        self["ENVIRONMENT"] = env.lower()
        try:
            with open(config_file) as f:
                config = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError("CONFIG", "cannot read {0}: {1}".format(config_file, e.strerror))
        except yaml.YAMLError as e:
            raise ConfigError("CONFIG", "invalid yaml in {0}: {1}".format(config_file, e))
        if not isinstance(config, dict):
            raise ConfigError("CONFIG", "{0} does not hold a mapping".format(config_file))

        if config.get("FORMAT") == MANIFEST_FORMAT:
            log.debug("Loading configuration recorded in manifest {0}".format(config_file))
            config = config.get("CONFIG") or {}
        config = config.get(env.upper(), config)

        _merge(self, config)
        self["CONFIG_PATH"] = os.path.abspath(config_file)
        return True

    def apply_overrides(self, overrides):
        """Applies ``key=value`` overrides on top of the loaded values.

        Keys are dotted and case-insensitive (``alignment.lambda=0.1``); values
        are parsed as yaml scalars. Applied overrides are recorded in
        ``OVERRIDES``.

        Args:
            overrides (list): override strings.

        Raises:
            ConfigError: malformed override or unknown key.
        """
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError(item, "override must look like key=value")
            key, raw = item.split("=", 1)
            path = [part.strip().upper() for part in key.split(".")]
            dotted = ".".join(path)
            target = self
            for depth, part in enumerate(path[:-1]):
                if not isinstance(target.get(part), dict):
                    raise ConfigError(".".join(path[:depth + 1]), "not a configuration section")
                target = target[part]
            if path[-1] not in target:
                raise ConfigError(dotted, "unknown configuration key")
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError as e:
                raise ConfigError(dotted, "cannot parse value {0!r}: {1}".format(raw, e))
            if isinstance(target[path[-1]], dict):
                raise ConfigError(dotted, "cannot override a whole section")
            log.debug("Override {0} = {1!r}".format(dotted, value))
            target[path[-1]] = value
            self["OVERRIDES"].append("{0}={1}".format(dotted, raw.strip()))

    def resolved(self):
        """dict: a plain deep copy of every uppercase key."""
        return {k: copy.deepcopy(v) for k, v in self.items() if k.isupper()}

    def section(self, name):
        """Returns a config section as a dict.

        Raises:
            ConfigError: the section is missing or is not a mapping.
        """
        value = self.get(name)
        if not isinstance(value, dict):
            raise ConfigError(name, "expected a mapping section")
        return value

    def number(self, key_path, integer=False, minimum=None, maximum=None):
        """Fetches a numeric value by dotted key path, checking type and range.

        Args:
            key_path (str): e.g. ``"HIERARCHY.LEVELS"``.
            integer (bool): require an integer.
            minimum: inclusive lower bound, optional.
            maximum: inclusive upper bound, optional.

        Raises:
            ConfigError: missing, non-numeric or out-of-range value.
        """
        value = self
        for part in key_path.split("."):
            if not isinstance(value, dict) or part not in value:
                raise ConfigError(key_path, "missing value")
            value = value[part]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key_path, "expected a number, got {0!r}".format(value))
        if integer and int(value) != value:
            raise ConfigError(key_path, "expected an integer, got {0!r}".format(value))
        if minimum is not None and value < minimum:
            raise ConfigError(key_path, "must be >= {0}, got {1}".format(minimum, value))
        if maximum is not None and value > maximum:
            raise ConfigError(key_path, "must be <= {0}, got {1}".format(maximum, value))
        return int(value) if integer else float(value)

    def flag(self, key_path):
        """bool: a boolean value by dotted key path."""
        value = self
        for part in key_path.split("."):
            if not isinstance(value, dict) or part not in value:
                raise ConfigError(key_path, "missing value")
            value = value[part]
        if not isinstance(value, bool):
            raise ConfigError(key_path, "expected true or false, got {0!r}".format(value))
        return value


def load_config(config_file=None, overrides=(), root_path=None, environ=True):
    """Builds the run configuration.

    Precedence, lowest first: :data:`DEFAULTS`, the yaml file, ``MGPRL_``
    environment variables, then the explicit overrides.

    Args:
        config_file (str): optional yaml file or run manifest.
        overrides (list): ``key=value`` strings.
        root_path (str): directory relative paths in the config resolve against.
        environ (bool): read ``MGPRL_`` environment variables.

    Returns:
        :obj:`Config`.
    """
    config = Config(root_path or os.getcwd())
    if config_file:
        config.from_yaml(config_file)
    if environ:
        config.from_prefixed_env("MGPRL")
        # MGPRL_CONFIG and MGPRL_ENV pick the file and its section, they are not settings
        for key in ("CONFIG", "ENV"):
            config.pop(key, None)
    config.apply_overrides(overrides)
    return config
