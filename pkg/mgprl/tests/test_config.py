#!/usr/bin/env python3
import os

import pytest
import yaml

from conftest import APP_ROOT
from mgprl.config import Config, DEFAULTS, MANIFEST_FORMAT, load_config
from mgprl.exceptions import ConfigError


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


class TestDefaults:
    def test_defaults_are_copied(self):
        config = Config()
        config["HIERARCHY"]["LEVELS"] = 9
        assert DEFAULTS["HIERARCHY"]["LEVELS"] == 4
        assert Config()["HIERARCHY"]["LEVELS"] == 4

    def test_bundled_config(self):
        config = load_config(os.path.join(APP_ROOT, "config", "config.yml"), environ=False)
        assert config["WORLD"] == "worlds/house.yml"
        assert len(config["ROBOTS"]) == 3
        assert config["CONFIG_PATH"].endswith("config.yml")


class TestFromYaml:
    def test_merges_sections(self, tmp_path):
        path = write_yaml(tmp_path / "c.yml", {"CYCLES": 4, "ALIGNMENT": {"LAMBDA": 0.2}, "lowercase": 1})
        config = Config()
        config.from_yaml(path)
        assert config["CYCLES"] == 4
        assert config["ALIGNMENT"]["LAMBDA"] == 0.2
        assert config["ALIGNMENT"]["MAX_CANDIDATE_COMBINATIONS"] == 512
        assert "lowercase" not in config

    def test_environment_section(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MGPRL_ENV", "testing")
        path = write_yaml(tmp_path / "c.yml", {"DEVELOPMENT": {"CYCLES": 4}, "TESTING": {"CYCLES": 2}})
        config = Config()
        config.from_yaml(path)
        assert config["CYCLES"] == 2
        assert config["ENVIRONMENT"] == "testing"

    def test_section_replaced_by_scalar(self, tmp_path):
        path = write_yaml(tmp_path / "c.yml", {"ALIGNMENT": 3})
        with pytest.raises(ConfigError) as err:
            Config().from_yaml(path)
        assert err.value.key_path == "ALIGNMENT"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            Config().from_yaml(str(tmp_path / "absent.yml"))

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "c.yml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            Config().from_yaml(str(path))

    def test_manifest_loads_recorded_config(self, tmp_path):
        recorded = {"CYCLES": 7, "NOISE_LEVEL": 2.0, "WORLD": "worlds/bookstore.yml"}
        path = write_yaml(tmp_path / "manifest.yml", {"FORMAT": MANIFEST_FORMAT, "VERSION": 1,
                                                      "SEED": 5, "CONFIG": recorded})
        config = Config()
        config.from_yaml(path)
        assert config["CYCLES"] == 7
        assert config["NOISE_LEVEL"] == 2.0
        assert config["SEED"] == 0
        assert "FORMAT" not in config


class TestOverrides:
    def test_dotted_and_case_insensitive(self):
        config = Config()
        config.apply_overrides(["alignment.lambda=0.1", "NOISE_LEVEL = 2", "mogp.restarts=0"])
        assert config["ALIGNMENT"]["LAMBDA"] == 0.1
        assert config["NOISE_LEVEL"] == 2
        assert config["MOGP"]["RESTARTS"] == 0
        assert config["OVERRIDES"] == ["ALIGNMENT.LAMBDA=0.1", "NOISE_LEVEL=2", "MOGP.RESTARTS=0"]

    @pytest.mark.parametrize("override, key_path", [
        ("alignment.nope=1", "ALIGNMENT.NOPE"),
        ("nope=1", "NOPE"),
        ("cycles.inner=1", "CYCLES"),
        ("alignment=1", "ALIGNMENT"),
        ("no_equals_sign", "no_equals_sign"),
    ])
    def test_rejected(self, override, key_path):
        with pytest.raises(ConfigError) as err:
            Config().apply_overrides([override])
        assert err.value.key_path == key_path

    def test_overrides_beat_file_and_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MGPRL_CYCLES", "5")
        monkeypatch.setenv("MGPRL_NOISE_LEVEL", "1.5")
        path = write_yaml(tmp_path / "c.yml", {"CYCLES": 4, "DROPOUT": 0.1})
        config = load_config(path, ["cycles=6"])
        assert config["CYCLES"] == 6
        assert config["NOISE_LEVEL"] == 1.5
        assert config["DROPOUT"] == 0.1

    def test_environment_ignored_when_disabled(self, monkeypatch):
        monkeypatch.setenv("MGPRL_CYCLES", "5")
        assert load_config(environ=False)["CYCLES"] == DEFAULTS["CYCLES"]


class TestAccessors:
    def test_number(self):
        config = Config()
        assert config.number("HIERARCHY.LEVELS", integer=True) == 4
        assert config.number("ALIGNMENT.LAMBDA") == pytest.approx(0.05)

    @pytest.mark.parametrize("override, kwargs", [
        ("cycles=0", {"integer": True, "minimum": 1}),
        ("cycles=2.5", {"integer": True}),
        ("cycles=many", {}),
        ("cycles=true", {}),
        ("dropout=2", {"maximum": 0.99}),
    ])
    def test_number_rejects(self, override, kwargs):
        config = Config()
        config.apply_overrides([override])
        key = override.split("=")[0].upper()
        with pytest.raises(ConfigError) as err:
            config.number(key, **kwargs)
        assert err.value.key_path == key

    def test_missing_number(self):
        with pytest.raises(ConfigError) as err:
            Config().number("ALIGNMENT.MISSING")
        assert err.value.key_path == "ALIGNMENT.MISSING"

    def test_flag(self):
        config = Config()
        assert config.flag("ALIGNMENT.USE_CANDIDATES") is True
        config.apply_overrides(["alignment.use_candidates=1"])
        with pytest.raises(ConfigError):
            config.flag("ALIGNMENT.USE_CANDIDATES")

    def test_section(self):
        assert Config().section("WALK")["STEP"] == 0.5
        with pytest.raises(ConfigError):
            Config().section("CYCLES")

    def test_resolved_is_a_copy(self):
        config = Config()
        resolved = config.resolved()
        resolved["WALK"]["STEP"] = 9.0
        assert config["WALK"]["STEP"] == 0.5
