#!/usr/bin/env python3
"""front_end

This submodule handles the functions required by the command line - cli.py.
The cli only calls into this submodule, which in turn loads the plugins and
drives the harness, so it is acceptable for functions here to do little
more than call into a different module.
"""
import os, logging, datetime
from concurrent.futures import ProcessPoolExecutor

import yaml

from mgprl import __version__, harness, plotting
from mgprl.config import Config, MANIFEST_FORMAT
from mgprl.plugins import MgprlPlugin, MgprlPluginManager

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
_RUNTIME_KEYS = ("OVERRIDES", "CONFIG_PATH")


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _plain(value):
    """Turns tuples and numpy scalars into yaml-safe builtins."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


def _episode(resolved, root_path):
    """Runs one episode from a resolved config mapping. Used by sweep workers."""
    config = Config(root_path, defaults=resolved)
    fe = FrontEnd(config)
    cfg = harness.EpisodeConfig.from_config(config)
    result = harness.run_episode(cfg, fe.field_modeler)
    return result.records


class FrontEnd(MgprlPlugin):
    """Front end plugin for mgprl.

    This is a "special" plugin that is called directly by the command line,
    and not handled by the plugin manager. It owns the plugin manager and
    calls back to other plugins as necessary.
    """
    def __init__(self, config, plugin_manager=None):
        """Front end initializer.

        Args:
            config (:obj:`Config`): The run configuration.
            plugin_manager: Only there because the super init requires it. Should be None.
        """
        super().__init__(config, plugin_manager)
        self.__name__ = "mgprl front end"
        self.__id__ = "front_end"
        self.__version__ = __version__

        self.config = self._config
        self.mpm = MgprlPluginManager(self.config)
        self.mpm.scan_for_plugins()
        self.mpm.load_plugins()

    @property
    def field_modeler(self):
        """FieldModeler: the loaded modeler plugin instance."""
        return self.mpm.loaded_plugins["modeler"][0] if self.mpm.loaded_plugins["modeler"] else None

    def resolved_config(self):
        """dict: the configuration with the world inlined, as recorded in manifests."""
        resolved = self.config.resolved()
        for key in _RUNTIME_KEYS:
            resolved.pop(key, None)
        source = harness.world_source(self.config)
        if not isinstance(source, dict):
            with open(source) as f:
                source = yaml.safe_load(f)
        resolved["WORLD"] = source
        return _plain(resolved)

    def write_manifest(self, out_dir, started, finished=None):
        """Writes ``manifest.yml``; it can be passed back as ``--config``."""
        manifest = {
            "FORMAT": MANIFEST_FORMAT,
            "VERSION": MANIFEST_VERSION,
            "TOOL_VERSION": __version__,
            "CONFIG_PATH": self.config.get("CONFIG_PATH"),
            "SEED": self.config.get("SEED"),
            "OUT_DIR": os.path.abspath(out_dir),
            "OVERRIDES": list(self.config.get("OVERRIDES", [])),
            "STARTED": started,
            "FINISHED": finished,
            "CONFIG": self.resolved_config(),
        }
        path = os.path.join(out_dir, "manifest.yml")
        with open(path, "w") as f:
            yaml.safe_dump(manifest, f, sort_keys=False)
        return path

    def run(self, out_dir=None):
        """Runs one episode and writes its bundle.

        The manifest is written before the episode starts and completed with
        the finish time afterwards.

        Returns:
            tuple. (:obj:`EpisodeResult`, bundle directory)
        """
        out_dir = out_dir or self.config["OUT_DIR"]
        cfg = harness.EpisodeConfig.from_config(self.config)
        os.makedirs(out_dir, exist_ok=True)
        started = _now()
        self.write_manifest(out_dir, started)
        log.info("Running episode into {0}".format(out_dir))
        result = harness.run_episode(cfg, self.field_modeler)
        harness.write_bundle(result, out_dir)
        self.write_manifest(out_dir, started, _now())
        return result, out_dir

    def sweep(self, axis, values, seeds=1, jobs=1, out_dir=None):
        """Runs one episode per (value, seed) and aggregates the final metrics.

        Args:
            axis (str): a numeric config key, dotted for sections.
            values (list): the values to sweep.
            seeds (int): seeds per value, starting at the configured ``SEED``.
            jobs (int): worker processes.
            out_dir (str): where ``sweep.csv`` and ``aggregate.csv`` go.

        Returns:
            list. The aggregate rows.
        """
        out_dir = out_dir or self.config["OUT_DIR"]
        axis_key = axis.upper()
        base_seed = self.config.number("SEED", integer=True)
        tasks = []
        for value in values:
            for k in range(seeds):
                config = Config(self.config.root_path, defaults=self.config.resolved())
                config.apply_overrides(["{0}={1}".format(axis, value), "seed={0}".format(base_seed + k)])
                number = config.number(axis_key)
                harness.EpisodeConfig.from_config(config)
                tasks.append((number, base_seed + k, config.resolved()))
        log.info("Sweeping {0} over {1} with {2} seeds: {3} episodes".format(axis, values, seeds, len(tasks)))

        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_episode, resolved, self.config.root_path) for _, _, resolved in tasks]
                outcomes = [f.result() for f in futures]
        else:
            outcomes = [_episode(resolved, self.config.root_path) for _, _, resolved in tasks]

        rows = []
        for (number, seed, _), records in zip(tasks, outcomes):
            row = {"value": number, "seed": seed}
            row.update(harness.final_metrics(records))
            rows.append(row)
        aggregate = harness.aggregate_runs(rows, axis="value")

        os.makedirs(out_dir, exist_ok=True)
        run_columns = ["value", "seed"] + list(harness.SUMMARY_METRICS)
        harness.write_csv(os.path.join(out_dir, "sweep.csv"), [axis] + run_columns[1:],
                          [[harness.format_value(r[c]) for c in run_columns] for r in rows])
        agg_columns = ["value", "runs"] + ["{0}_{1}".format(m, s) for m in harness.SUMMARY_METRICS
                                           for s in ("mean", "std")]
        harness.write_csv(os.path.join(out_dir, "aggregate.csv"), [axis] + agg_columns[1:],
                          [[harness.format_value(r[c]) for c in agg_columns] for r in aggregate])
        return aggregate

    def selftest(self):
        """list: every loaded oracle's :obj:`OracleResult` values."""
        results = []
        for batch in self.oracle("run"):
            results.extend(batch)
        return results

    def plot(self, bundle_dir, out_dir=None):
        return plotting.plot_bundle(bundle_dir, out_dir)

    def bench(self, gammas, m=8, out_dir=None):
        """Runs the fit-time scaling benchmark and writes ``bench.csv``."""
        out_dir = out_dir or self.config["OUT_DIR"]
        rows = harness.benchmark_fit_scaling(gammas, m, self.config.number("SEED", integer=True),
                                             self.field_modeler.fit_options() if self.field_modeler else None)
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "bench.csv")
        harness.write_csv(path, harness.BENCH_COLUMNS,
                          [[harness.format_value(r[c]) for c in harness.BENCH_COLUMNS] for r in rows])
        return rows, path
