#!/usr/bin/env python3
import os, math

import numpy as np
import pytest
import yaml

from conftest import world_mapping
from mgprl import aploc, harness, rello
from mgprl.core import GridSpec, Pose2D, ScalarField, apply, inverse
from mgprl.rfsim import load_world
from mgprl.exceptions import ConfigError, InvalidParameterError
from mgprl.harness import EpisodeConfig, MetricsRecord
from mgprl.modeler.coregionalized import Coregionalized


def episode(config):
    return harness.run_episode(EpisodeConfig.from_config(config), Coregionalized(config, None))


class TestEpisodeConfig:
    def test_from_config(self, tiny_config):
        cfg = EpisodeConfig.from_config(tiny_config)
        assert len(cfg.robots) == 2
        assert cfg.robot_ids == ["r0", "r1"]
        assert cfg.cycles == 3
        assert cfg.hierarchy.levels == 2
        assert cfg.alignment.lambda_ == pytest.approx(0.05)

    @pytest.mark.parametrize("override, key_path", [
        ("robots=1", "ROBOTS"),
        ("initial_samples=1", "INITIAL_SAMPLES"),
        ("cycles=0", "CYCLES"),
        ("noise_level=-1", "NOISE_LEVEL"),
        ("alignment.lambda=0", "ALIGNMENT"),
        ("weighting.alpha=0.5", "WEIGHTING"),
        ("hierarchy.levels=true", "HIERARCHY.LEVELS"),
        ("hierarchy.region=everywhere", "HIERARCHY"),
    ])
    def test_bad_values_name_the_key(self, tiny_config, override, key_path):
        tiny_config.apply_overrides([override])
        with pytest.raises(ConfigError) as err:
            EpisodeConfig.from_config(tiny_config)
        assert err.value.key_path == key_path

    def test_start_pose_outside_world(self, tiny_config):
        tiny_config["ROBOTS"] = [{"X": 1.0, "Y": 1.0}, {"X": 30.0, "Y": 2.0, "YAW": 0.0}]
        with pytest.raises(ConfigError) as err:
            EpisodeConfig.from_config(tiny_config)
        assert err.value.key_path == "ROBOTS[1]"

    def test_start_pose_missing_coordinate(self, tiny_config):
        tiny_config["ROBOTS"] = [{"X": 1.0}, {"X": 3.0, "Y": 2.0}]
        with pytest.raises(ConfigError) as err:
            EpisodeConfig.from_config(tiny_config)
        assert err.value.key_path == "ROBOTS[0].Y"

    def test_missing_world_file(self, tiny_config):
        tiny_config["WORLD"] = "worlds/nowhere.yml"
        with pytest.raises(ConfigError) as err:
            EpisodeConfig.from_config(tiny_config)
        assert err.value.key_path == "WORLD"

    def test_bundled_world_by_relative_path(self, tiny_config):
        tiny_config["WORLD"] = "worlds/bookstore.yml"
        assert EpisodeConfig.from_config(tiny_config).world.name == "bookstore"

    def test_direct_validation(self, world):
        starts = (Pose2D(1.0, 1.0, 0.0), Pose2D(2.0, 2.0, 0.0))
        with pytest.raises(InvalidParameterError):
            EpisodeConfig(world, starts[:1])
        with pytest.raises(InvalidParameterError):
            EpisodeConfig(world, starts, dropout=1.0)
        with pytest.raises(InvalidParameterError):
            EpisodeConfig(world, (Pose2D(1.0, 1.0, 0.0), Pose2D(-2.0, 1.0, 0.0)))
        two_aps = world_mapping()
        two_aps["ACCESS_POINTS"] = two_aps["ACCESS_POINTS"][:2]
        with pytest.raises(InvalidParameterError):
            EpisodeConfig(load_world(two_aps), starts)


class TestStartPoses:
    def test_inside_and_seeded(self, world):
        poses = harness.random_start_poses(world, 5, seed=9)
        assert len(poses) == 5
        assert all(world.contains(p.position) for p in poses)
        assert poses == harness.random_start_poses(world, 5, seed=9)
        assert poses != harness.random_start_poses(world, 5, seed=10)


class TestMetrics:
    def test_ale(self):
        assert harness.compute_ale([(0, 0), (3, 4)], [(0, 0), (0, 0)]) == pytest.approx(2.5)

    def test_ale_mismatch(self):
        with pytest.raises(InvalidParameterError):
            harness.compute_ale([(0, 0)], [(0, 0), (1, 1)])
        with pytest.raises(InvalidParameterError):
            harness.compute_ale([], [])

    def test_field_rmse_skips_missing_truth(self):
        grid = GridSpec((0.0, 0.0), 1.0, 2, 2)
        predicted = ScalarField(grid, np.array([[1.0, 2.0], [3.0, 4.0]]))
        truth = lambda pts: np.array([0.0, 0.0, float("nan"), 4.0])
        expected = math.sqrt((1.0 + 4.0 + 0.0) / 3.0)
        assert harness.compute_field_rmse(predicted, truth) == pytest.approx(expected)

    def test_final_metrics_uses_last_cycle_without_errors(self):
        records = [
            MetricsRecord(1, "r0", 10, ale_ap=9.0),
            MetricsRecord(2, "r0", 14, ale_ap=1.0, ale_r=0.5),
            MetricsRecord(2, "r1", 14, ale_ap=3.0),
            MetricsRecord(2, "r2", 14, ale_ap=50.0, error="DegenerateDataError: x"),
        ]
        final = harness.final_metrics(records)
        assert final["ale_ap"] == pytest.approx(2.0)
        assert final["ale_r"] == pytest.approx(0.5)
        assert math.isnan(final["rmse"])

    def test_aggregate_runs(self):
        nan = float("nan")
        base = {m: 1.0 for m in harness.SUMMARY_METRICS}
        rows = [dict(base, value=0.0, ale_ap=1.0), dict(base, value=0.0, ale_ap=3.0),
                dict(base, value=2.0, ale_ap=5.0, ale_r=nan)]
        agg = harness.aggregate_runs(rows, axis="value")
        assert [a["value"] for a in agg] == [0.0, 2.0]
        assert agg[0]["runs"] == 2
        assert agg[0]["ale_ap_mean"] == pytest.approx(2.0)
        assert agg[0]["ale_ap_std"] == pytest.approx(1.0)
        assert math.isnan(agg[1]["ale_r_mean"])

    def test_format_value(self):
        assert harness.format_value(True) == "true"
        assert harness.format_value(float("nan")) == "nan"
        assert harness.format_value(0.5) == "0.500000"
        assert harness.format_value(3) == "3"


class TestEpisode:
    def test_one_row_per_robot_and_cycle(self, tiny_config):
        result = episode(tiny_config)
        assert [(r.cycle, r.robot) for r in result.records] == [
            (c, rid) for c in (1, 2, 3) for rid in ("r0", "r1")]
        assert [r.samples for r in result.records if r.robot == "r0"] == [10, 14, 18]
        assert all(r.error == "" for r in result.records)
        for r in result.records:
            for name in ("ale_ap", "ale_ap_hier", "rmse", "uncertainty"):
                assert getattr(r, name) >= 0
        assert len(result.timings) == 6
        assert len(result.beliefs) == 6

    def test_final_cycle_snapshots(self, tiny_config):
        result = episode(tiny_config)
        assert [(s.cycle, s.robot) for s in result.fields] == [(3, "r0"), (3, "r1")]
        snap = result.fields[0]
        assert snap.mean.shape == (len(snap.ap_ids),) + snap.grid.shape
        assert np.all(snap.var >= 0)

    def test_same_seed_same_metrics(self, tiny_config, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        harness.write_metrics_csv(episode(tiny_config).records, str(first))
        harness.write_metrics_csv(episode(tiny_config).records, str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_dropout_still_reports_every_robot(self, tiny_config):
        tiny_config.apply_overrides(["dropout=0.3"])
        result = episode(tiny_config)
        assert len(result.records) == 6

    def test_independent_modeler(self, tiny_config):
        from mgprl.modeler.independent import Independent
        cfg = EpisodeConfig.from_config(tiny_config)
        result = harness.run_episode(cfg, Independent(tiny_config, None))
        assert len(result.records) == 6




class TestSearchRegion:
    def test_map_region_covers_the_world_seen_from_the_start(self, world):
        starts = (Pose2D(2.0, 1.0, 0.0), Pose2D(5.0, 4.0, 1.2))
        cfg = EpisodeConfig(world, starts)
        sim = harness._Simulated(harness.Robot("r0", np.random.default_rng(0)), starts[0], starts[0], 0)
        sim.robot.waypoints = [(0.0, 0.0), (1.0, 0.5)]
        grid = harness._search_grid(sim, cfg)
        assert grid.origin == (-2.0, -1.0)
        assert grid.shape == (8, 6)

    def test_rotated_start_still_covers_every_ap(self, world):
        starts = (Pose2D(2.0, 1.0, math.pi / 2), Pose2D(5.0, 4.0, 0.0))
        cfg = EpisodeConfig(world, starts)
        sim = harness._Simulated(harness.Robot("r0", np.random.default_rng(0)), starts[0], starts[0], 0)
        sim.robot.waypoints = [(0.0, 0.0)]
        x0, x1, y0, y1 = harness._search_grid(sim, cfg).extent
        own = inverse(starts[0].as_transform())
        for ap in world.aps:
            x, y = apply(own, ap.position)
            assert x0 - 1e-9 <= x <= x1 + 1e-9 and y0 - 1e-9 <= y <= y1 + 1e-9
        assert x1 - x0 <= 7.0 and y1 - y0 <= 9.0

    def test_explored_region_pads_the_waypoints(self, world):
        starts = (Pose2D(2.0, 1.0, 0.0), Pose2D(5.0, 4.0, 1.2))
        cfg = EpisodeConfig(world, starts, hierarchy=aploc.HierarchyConfig(region="explored"))
        sim = harness._Simulated(harness.Robot("r0", np.random.default_rng(0)), starts[0], starts[0], 0)
        sim.robot.waypoints = [(0.0, 0.0), (2.0, 1.0)]
        assert harness._search_grid(sim, cfg) == aploc.coarsest_grid_around(sim.robot.waypoints, 1.0, 1.0)

    def test_map_grid_is_fixed_over_the_episode(self, tiny_config):
        tiny_config.apply_overrides(["field_every=1"])
        result = episode(tiny_config)
        for rid in ("r0", "r1"):
            snaps = [s for s in result.fields if s.robot == rid]
            assert [s.cycle for s in snaps] == [1, 2, 3]
            assert all(s.grid == snaps[0].grid for s in snaps)
            x0, x1, y0, y1 = snaps[0].grid.extent
            own = inverse(snaps[0].start.as_transform())
            for ap in result.config.world.aps:
                x, y = apply(own, ap.position)
                assert x0 - 1e-9 <= x <= x1 + 1e-9 and y0 - 1e-9 <= y <= y1 + 1e-9

    def test_region_from_config(self, tiny_config):
        tiny_config.apply_overrides(["hierarchy.region=explored"])
        assert EpisodeConfig.from_config(tiny_config).hierarchy.region == aploc.SearchRegion.EXPLORED
        assert len(episode(tiny_config).records) == 6


class TestWalkStream:
    def test_noise_and_dropout_keep_the_path(self, tiny_config):
        def poses(result):
            return [(c, rid, rello.decode_message(text).self_position) for c, rid, text in result.beliefs]

        quiet = poses(episode(tiny_config))
        tiny_config.apply_overrides(["noise_level=2", "dropout=0.2"])
        noisy = poses(episode(tiny_config))
        assert len(quiet) == 6
        assert quiet == noisy


class TestBundle:
    def test_files(self, tiny_config, tmp_path):
        result = episode(tiny_config)
        harness.write_bundle(result, str(tmp_path))
        for name in ("metrics.csv", "timings.csv", "alignments.csv", "hulls.yml", "summary.yml"):
            assert (tmp_path / name).is_file()
        assert sorted(os.listdir(tmp_path / "beliefs"))[0] == "cycle_001_r0.yml"
        assert sorted(os.listdir(tmp_path / "fields")) == ["cycle_003_r0.npz", "cycle_003_r1.npz"]

        rows = harness.read_metrics_csv(str(tmp_path / "metrics.csv"))
        assert len(rows) == 6
        assert rows[0]["cycle"] == 1 and rows[0]["robot"] == "r0"

        summary = yaml.safe_load((tmp_path / "summary.yml").read_text())
        assert summary["world"] == "test"
        assert summary["errors"] == 0
        assert set(summary["access_points"]) == {"ap1", "ap2", "ap3", "ap4"}
        assert set(summary["final"]) == set(harness.SUMMARY_METRICS)


class TestBenchmark:
    def test_rows(self):
        from mgprl.mogp import FitOptions
        rows = harness.benchmark_fit_scaling([6, 8], m=2, seed=1, opts=FitOptions(restarts=0, max_iter=10))
        assert [r["gamma"] for r in rows] == [6, 8]
        assert all(r["joint_seconds"] > 0 and r["independent_seconds"] > 0 for r in rows)
