import json

import numpy as np
import pytest

from vcsel_rs.geometry import default_scene


@pytest.fixture
def scene():
    return default_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_config(tmp_path):
    """Config file for quick runs: users on beam footprints, few trials."""
    def make(**extra):
        data = {
            "schema": 1,
            "placement": {"model": "beam_footprint", "cluster_sigma_m": 0.0},
            "scenario": {"users": 4, "trials": 2, "master_seed": 7},
            "hrs": {"groups": [2]},
            "sweep": {"users": [2, 4], "beam_waist_um": [20, 40], "groups": [1, 2]},
        }
        for key, value in extra.items():
            data[key] = value
        path = tmp_path / "config.json"
        with open(path, "w") as w:
            json.dump(data, w)
        return str(path)
    return make
