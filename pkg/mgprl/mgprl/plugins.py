#!/usr/bin/env python3
"""plugins

Plugin manager and plugin base classes.

Two plugin categories exist. Field modelers turn RSSI samples into a field
model; exactly one is loaded, picked by the ``MODELER`` config key. Oracles
are self-check suites run by ``selftest``; every oracle named in ``ORACLES``
is loaded.
"""
import logging, os, importlib
from dataclasses import dataclass

from mgprl.exceptions import NoPluginLoadedError
from mgprl.mogp import FitOptions

_logger = logging.getLogger(__name__)

CATEGORIES = {
    "modeler": {"directory": "modeler", "multiload": False, "class": "FieldModeler", "config": "MODELER"},
    "oracle": {"directory": "oracle", "multiload": True, "class": "Oracle", "config": "ORACLES"},
    }


class MgprlPluginManager(object):
    """Plugin manager for mgprl plugins.

    Handles loading and scanning of plugins, as well as calling functions within those plugins.
    Oracles can be multiloaded, meaning several of them run side by side, while only one
    field modeler can be loaded at a time.
    """
    def __init__(self, config):
        """MgprlPluginManager initializer.

        Note:
            This does not scan for or load plugins, that must be done explicitly.

        Args:
            config (dict): The configuration dictionary.
        """
        _logger.debug("MgprlPluginManager initializing!")
        self._config = config
        self._available_plugins = {cat: [] for cat in CATEGORIES}
        self._loaded_plugins = {cat: [] for cat in CATEGORIES}

    @property
    def available_plugins(self):
        """dict: Dictionary of available plugin modules, keyed by plugin type."""
        return self._available_plugins

    @property
    def loaded_plugins(self):
        """dict: Dictionary of loaded plugin instances, keyed by plugin type."""
        return {cat: list(instances) for cat, instances in self._loaded_plugins.items()}

    @property
    def plugin_categories(self):
        """list: Plugin categories that key available and loaded plugins."""
        return list(CATEGORIES.keys())

    def scan_for_plugins(self):
        """Plugin scanner.

        Imports every module in the known plugin directories so their classes
        register as subclasses of the category base class.

        Returns:
            The available plugins dictionary.
        """
        _logger.debug("Scanning for plugins.")
        for category, info in CATEGORIES.items():
            directory = os.path.join(os.path.dirname(__file__), info["directory"])
            for module in sorted(os.listdir(directory)):
                if module == "__init__.py" or module[-3:] != ".py":
                    continue
                if module[:-3] in self._available_plugins[category]:
                    continue
                _logger.debug("\tFound {0} plugin {1}".format(category, module[:-3]))
                importlib.import_module("mgprl.{0}.{1}".format(info["directory"], module[:-3]))
                self._available_plugins[category].append(module[:-3])
        return self._available_plugins

    def load_plugins(self):
        """Plugin loader.

        Instantiates the plugins named in the configuration.

        Returns:
            The loaded plugins dictionary.

        Raises:
            NoPluginLoadedError: a configured plugin class does not exist.
        """
        _logger.debug("Loading plugins.")
        for category, catinfo in CATEGORIES.items():
            wanted = self._config.get(catinfo["config"])
            if not wanted:
                continue
            wanted = wanted if isinstance(wanted, list) else [wanted]
            if not catinfo["multiload"]:
                wanted = wanted[:1]
            classes = {cls.__name__: cls for cls in _all_subclasses(globals()[catinfo["class"]])}
            for name in wanted:
                if name not in classes:
                    raise NoPluginLoadedError("no {0} plugin named {1}; available: {2}".format(
                        category, name, ", ".join(sorted(classes))))
                if not any(type(x) is classes[name] for x in self._loaded_plugins[category]):
                    _logger.debug("\tloading {0} plugin {1}".format(category, name))
                    self._loaded_plugins[category].append(classes[name](self._config, self))
        return self._loaded_plugins

    def plugin_category_function(self, category, func, *args, **kwargs):
        """Call all plugins of a specified category with a function.

        Args:
            category (str): The plugin category to call.
            func (str): The function to call in that category.
            *args: Arguments that will be passed to the function.
            **kwargs: Keyword arguments that will be passed to the function.

        Returns:
            For a multiloaded category, a list with every plugin's response.
            Otherwise the single plugin's response.

        Raises:
            NoPluginLoadedError: nothing is loaded for a single-load category.
        """
        plugins = self._loaded_plugins[category]
        if not CATEGORIES[category]["multiload"]:
            if not plugins:
                raise NoPluginLoadedError("no {0} plugin loaded".format(category))
            return getattr(plugins[0], func)(*args, **kwargs)
        return [getattr(plugin, func)(*args, **kwargs) for plugin in plugins]

    def plugin_function(self, plugin, func, *args, **kwargs):
        """Call a specific plugin's function by plugin id.

        Raises:
            NoPluginLoadedError: no loaded plugin has that id.
        """
        for category, instances in self._loaded_plugins.items():
            for instance in instances:
                if instance.__id__ == plugin:
                    return getattr(instance, func)(*args, **kwargs)
        raise NoPluginLoadedError("plugin {0} is not loaded".format(plugin))


def _all_subclasses(cls):
    out = []
    for sub in cls.__subclasses__():
        out.append(sub)
        out.extend(_all_subclasses(sub))
    return out


class MgprlPlugin(object):
    """Base mgprl plugin class.

    Plugins extend one of this class' subclasses, except the front end.

    Attributes:
        __name__ (str): The name of the plugin.
        __id__ (str): The plugin's ID.
        __version__ (str): The version of the plugin.
        mpm (:obj:`MgprlPluginManager`): The manager that instantiated this plugin.
    """
    def __init__(self, config, plugin_manager):
        """Initializes the plugin.

        Note:
            Always call super().__init__(config, plugin_manager) from your plugins.

        Args:
            config: The configuration dictionary passed to the plugin manager.
            plugin_manager: The MgprlPluginManager instance used to instantiate this plugin.
        """
        self.__name__ = None
        self.__id__ = None
        self.__version__ = None

        self._config = config
        self.mpm = plugin_manager

    def modeler(self, func, *args, **kwargs):
        """Calls the loaded field modeler. Modelers are not multiloaded."""
        return self.mpm.plugin_category_function("modeler", func, *args, **kwargs)

    def oracle(self, func, *args, **kwargs):
        """Calls every loaded oracle and returns the list of responses."""
        return self.mpm.plugin_category_function("oracle", func, *args, **kwargs)


class FieldModeler(MgprlPlugin):
    """Base field modeler class.

    Extend this class if you are making a field model plugin. A modeler turns a
    robot's RSSI samples, in the robot's own frame, into a model predicting the
    mean and variance of every AP's RSSI at arbitrary locations.
    """
    def fit_options(self):
        """FitOptions: optimizer settings from the MOGP config section."""
        return FitOptions(
            rank=self._config.number("MOGP.RANK", integer=True, minimum=1),
            restarts=self._config.number("MOGP.RESTARTS", integer=True, minimum=0),
            max_iter=self._config.number("MOGP.MAX_ITER", integer=True, minimum=1),
            refit_every=self._config.number("MOGP.REFIT_EVERY", integer=True, minimum=0),
            noise_variance_bounds=(self._config.number("MOGP.NOISE_FLOOR", minimum=1e-8, maximum=1e3), 1e4),
            scale_bound=self._config.number("MOGP.SCALE_BOUND", minimum=1e-3),
        )

    def fit(self, samples, ap_ids=None, seed=0):
        """Trains a model from scratch.

        Args:
            samples (dict): lists of :obj:`RssiSample` keyed by AP id.
            ap_ids (list): output order, defaults to the sorted keys.
            seed (int): seed of any randomized optimization.

        Returns:
            A model with ``ap_ids`` and ``predict(queries, ap_id)``.
        """
        raise NotImplementedError()

    def update(self, model, samples):
        """Returns a model conditioned on additional samples (a flat list)."""
        raise NotImplementedError()

    def predict_field(self, model, grid, ap_id):
        """Returns (mean, variance) :obj:`ScalarField` values of one AP over a grid."""
        raise NotImplementedError()


@dataclass(frozen=True)
class OracleResult:
    """One self-check outcome."""
    oracle: str
    check: str
    passed: bool
    detail: str = ""


class Oracle(MgprlPlugin):
    """Base oracle class.

    Extend this class if you are making a self-test suite. Each oracle compares
    a production code path against an independent reference and reports one
    :obj:`OracleResult` per check.

    The config key ``SELFTEST_FAULT`` naming an oracle's id makes that oracle
    perturb its computed values, so its checks must fail.
    """
    @property
    def faulted(self):
        """bool: whether fault injection targets this oracle."""
        return self._config.get("SELFTEST_FAULT") == self.__id__

    def run(self):
        """Runs all checks and returns a list of :obj:`OracleResult`."""
        raise NotImplementedError()
