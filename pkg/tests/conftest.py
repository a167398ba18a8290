import math

import pytest

from utils.fieldmodel import AnalyticEvanescentModel, SaturationContext
from utils.heating import HeatingModel
from utils.quantities import PhysicalConstants, TrapSpec
from utils.scanmicroscope import DeviceGeometry, Rectangle

# Operating point of the near-field survival measurement
DECAY_LENGTH = 743e-9
POWER = 400e-12
TEMPERATURE = 40e-6
PULSE = 6e-3


@pytest.fixture(scope="session")
def constants():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def trap():
    return TrapSpec()


@pytest.fixture(scope="session")
def sat(constants):
    return SaturationContext.from_constants(constants)


@pytest.fixture(scope="session")
def field():
    return AnalyticEvanescentModel(POWER, DECAY_LENGTH)


@pytest.fixture(scope="session")
def operating_model(field, sat, trap, constants):
    return HeatingModel(field, sat, trap, TEMPERATURE, PULSE, constants)


def guide(tilt_deg=0.0, cy=17.5e-6, length=200e-6):
    """A 180 nm wide suspended guide running along y through x = 0."""
    element = Rectangle("guide", 0.0, cy, 180e-9, length, 200e-9)
    return DeviceGeometry((element,), tilt=math.radians(tilt_deg), guide_center=(0.0, 0.0))


@pytest.fixture
def guide_geometry():
    return guide
