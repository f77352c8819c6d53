import numpy as np
import pytest

from fidmag import physics


@pytest.fixture(scope="session")
def rb87():
    return physics.load_species("rb87")


@pytest.fixture(scope="session")
def lab_dressing():
    return physics.MicrowaveDressing(
        rabi_frequency=2 * np.pi * 6e3, detuning=2 * np.pi * 150e3, enabled=True
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
