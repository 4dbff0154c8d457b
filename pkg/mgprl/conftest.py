#!/usr/bin/env python3
import os, sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from mgprl.config import Config
from mgprl.rfsim import load_world

APP_ROOT = os.path.dirname(os.path.abspath(__file__))


def world_mapping(width=8.0, height=6.0, shadowing=0.0):
    """A small four-AP world description with a coarse grid."""
    return {
        "FORMAT": "mgprl-world",
        "VERSION": 1,
        "NAME": "test",
        "SEED": 3,
        "BOUNDS": {"ORIGIN": [0.0, 0.0], "WIDTH": width, "HEIGHT": height},
        "CELL_SIZE": 1.0,
        "PATH_LOSS": {"SHADOWING_SIGMA": shadowing, "FADING_SIGMA": 0.0},
        "ACCESS_POINTS": [
            {"ID": "ap1", "X": 1.0, "Y": 1.0},
            {"ID": "ap2", "X": width - 1.0, "Y": 1.5},
            {"ID": "ap3", "X": width - 1.5, "Y": height - 1.0},
            {"ID": "ap4", "X": 1.5, "Y": height - 1.5},
        ],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def world():
    return load_world(world_mapping())


@pytest.fixture
def tiny_config():
    """A quick episode: two robots, three cycles, no hyperparameter restarts."""
    config = Config(APP_ROOT)
    config.apply_overrides([
        "robots=2",
        "initial_samples=10",
        "samples_per_cycle=4",
        "cycles=3",
        "mogp.restarts=0",
        "mogp.max_iter=30",
        "hierarchy.levels=2",
    ])
    config["WORLD"] = world_mapping()
    return config
