import pytest

from fcsplit.mpc import steady_state
from fcsplit.plant import PlantModel


@pytest.fixture(scope="session")
def model():
    return PlantModel()


@pytest.fixture(scope="session")
def operating_point(model):
    """Steady state and input delivering 30 kW with zero battery current."""
    return steady_state(model, 30e3)
