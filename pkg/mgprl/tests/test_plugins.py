#!/usr/bin/env python3
import pytest

from conftest import APP_ROOT
from mgprl.config import Config
from mgprl.front_end import FrontEnd
from mgprl.modeler.coregionalized import Coregionalized
from mgprl.modeler.independent import Independent, IndependentModel
from mgprl.plugins import MgprlPluginManager
from mgprl.rfsim import RssiSample
from mgprl.core import GridSpec
from mgprl.exceptions import NoPluginLoadedError, UnknownAccessPointError


def quick(fe):
    """Shrinks the oracle workloads so the suites run in seconds."""
    for oracle in fe.mpm.loaded_plugins["oracle"]:
        if hasattr(oracle, "instances"):
            oracle.instances = 4
        if hasattr(oracle, "trials"):
            oracle.trials = 20
    return fe


def front_end(*overrides):
    config = Config(APP_ROOT)
    config.apply_overrides(list(overrides))
    return FrontEnd(config)


def line_samples():
    pts = [(float(x), 0.5 * x) for x in range(6)]
    return {
        "a": [RssiSample(p, "a", -40.0 - 2.0 * p[0]) for p in pts],
        "b": [RssiSample(p, "b", -60.0 + 1.5 * p[0]) for p in pts],
    }


class TestManager:
    def test_loads_configured_plugins(self):
        fe = front_end()
        assert isinstance(fe.field_modeler, Coregionalized)
        assert [o.__id__ for o in fe.mpm.loaded_plugins["oracle"]] == ["dense_gp", "alignment", "maxima"]
        assert set(fe.mpm.available_plugins["modeler"]) == {"coregionalized", "independent"}

    def test_loaded_plugins_is_a_copy(self):
        fe = front_end()
        fe.mpm.loaded_plugins["oracle"].clear()
        assert len(fe.mpm.loaded_plugins["oracle"]) == 3

    def test_single_modeler_only(self):
        config = Config(APP_ROOT)
        config["MODELER"] = ["Independent", "Coregionalized"]
        fe = FrontEnd(config)
        assert isinstance(fe.field_modeler, Independent)
        assert len(fe.mpm.loaded_plugins["modeler"]) == 1

    def test_unknown_modeler(self):
        with pytest.raises(NoPluginLoadedError):
            front_end("modeler=Kriging")

    def test_scan_twice_loads_once(self):
        mpm = MgprlPluginManager(Config(APP_ROOT))
        mpm.scan_for_plugins()
        mpm.scan_for_plugins()
        mpm.load_plugins()
        mpm.load_plugins()
        assert len(mpm.available_plugins["oracle"]) == 3
        assert len(mpm.loaded_plugins["oracle"]) == 3

    def test_plugin_function_by_id(self):
        fe = front_end()
        assert fe.mpm.plugin_function("coregionalized", "fit_options").rank == 1
        with pytest.raises(NoPluginLoadedError):
            fe.mpm.plugin_function("nothing", "run")

    def test_no_modeler_loaded(self):
        config = Config(APP_ROOT)
        config["MODELER"] = None
        fe = FrontEnd(config)
        assert fe.field_modeler is None
        with pytest.raises(NoPluginLoadedError):
            fe.modeler("fit", {})


class TestModelers:
    def test_fit_options_from_config(self):
        fe = front_end("mogp.restarts=0", "mogp.max_iter=7")
        opts = fe.field_modeler.fit_options()
        assert opts.restarts == 0
        assert opts.max_iter == 7

    def test_output_scale_bounds_from_config(self):
        fe = front_end("mogp.noise_floor=0.25", "mogp.scale_bound=2")
        opts = fe.field_modeler.fit_options()
        assert opts.noise_variance_bounds[0] == 0.25
        assert opts.scale_bound == 2.0
        defaults = front_end().field_modeler.fit_options()
        assert defaults.noise_variance_bounds[0] == 0.01
        assert defaults.max_iter == 200

    def test_modeler_call_through_manager(self):
        fe = front_end("mogp.restarts=0", "mogp.max_iter=20")
        model = fe.modeler("fit", line_samples(), ["a", "b"], seed=1)
        assert tuple(model.ap_ids) == ("a", "b")

    def test_independent(self):
        fe = front_end("modeler=Independent", "mogp.restarts=0", "mogp.max_iter=20")
        modeler = fe.field_modeler
        model = modeler.fit(line_samples(), seed=1)
        assert isinstance(model, IndependentModel)
        assert model.ap_ids == ("a", "b")

        updated = modeler.update(model, [RssiSample((6.0, 3.0), "a", -52.0)])
        assert updated.models["a"].update_count == 1
        assert updated.models["b"] is model.models["b"]

        mean, var = modeler.predict_field(updated, GridSpec((0.0, 0.0), 1.0, 4, 3), "b")
        assert mean.values.shape == (4, 3)
        assert (var.values >= 0).all()

        with pytest.raises(UnknownAccessPointError):
            modeler.update(model, [RssiSample((0.0, 0.0), "zz", -50.0)])


class TestOracles:
    def test_all_checks_pass(self):
        results = quick(front_end()).selftest()
        assert {r.oracle for r in results} == {"dense_gp", "alignment", "maxima"}
        assert [r for r in results if not r.passed] == []

    @pytest.mark.parametrize("target", ["dense_gp", "alignment", "maxima"])
    def test_fault_injection(self, target):
        results = quick(front_end("selftest_fault={0}".format(target))).selftest()
        assert any(not r.passed for r in results if r.oracle == target)
        assert all(r.passed for r in results if r.oracle != target)
