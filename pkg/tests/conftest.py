import copy

import pytest

from twinbeam.sweeps import analyze_point
from twinbeam.utils.config import resolve_config


# narrow pump and a broad pump spectrum keep every grid small
COARSE_RAW = {
    "crystal": {"length": 8.0e-3, "cut_angle": 36.3},
    "pump": {"wavelength": 349.0e-9, "w_p": 0.1e-3, "bandwidth": 1.0e-9},
    "numerics": {
        "radial_points": 160,
        "max_radial_points": 192,
        "spectral_points": 192,
        "max_spectral_points": 256,
    },
    "analysis": {"n_modes": 4},
}


@pytest.fixture
def coarse_raw() -> dict:
    return copy.deepcopy(COARSE_RAW)


@pytest.fixture
def coarse_config(coarse_raw):
    return resolve_config(coarse_raw)


@pytest.fixture(scope="session")
def coarse_point():
    return analyze_point(resolve_config(copy.deepcopy(COARSE_RAW)))
