import numpy as np
import pytest

from lbccn.dsp import StftConfig
from lbccn.model import LbccnModel, toy_config
from lbccn.spatial import synth_spherical_hrir


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_catalog():
    # coarse symmetric grid keeps synthesis fast
    dirs = [(az, el) for az in range(-180, 180, 30) for el in (-30, 0, 30)]
    return synth_spherical_hrir(dirs)


@pytest.fixture
def toy_model():
    return LbccnModel(toy_config(), seed=3)


@pytest.fixture
def toy_stft():
    return StftConfig(64, 32)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
