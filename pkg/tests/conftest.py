import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from magweyl.flux import MagneticField
from magweyl.hull import HullFunction, HullModel
from magweyl.symbols import AtomSum

settings.register_profile("magweyl", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("magweyl")


@pytest.fixture
def model2():
    return HullModel(np.eye(2))


@pytest.fixture
def cos_field(model2):
    """``B^12 = cos omega_1`` on the two-torus with ``F = I``."""
    return MagneticField.from_upper(model2, {(0, 1): HullFunction.cos_mode(model2, [1, 0])})


@pytest.fixture
def constant_field(model2):
    return MagneticField.constant(model2, np.array([[0.0, 1.3], [-1.3, 0.0]]))


@pytest.fixture
def gaussian_pair(model2):
    """Two distinct Gaussians with hull modes and momenta."""
    one = HullFunction.constant(model2, 1.0)
    phi = AtomSum.gaussian(model2, hull=one + 0.3 * HullFunction.cos_mode(model2, [1, 0]),
                           gamma=0.5, center=[0.2, 0.0], momentum=[0.5, -0.3])
    psi = AtomSum.gaussian(model2, hull=one + 0.4 * HullFunction.sin_mode(model2, [0, 1]),
                           gamma=0.6, center=[-0.3, 0.1], momentum=[-0.2, 0.4])
    return phi, psi
