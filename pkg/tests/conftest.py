import math
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=120, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from qndclock import presets  # noqa: E402
from qndclock.protocol import PhysicalParams, reference_protocol, three_pulse_protocol  # noqa: E402

OMEGA_REF = presets.OMEGA_REF
OMEGA_3P = presets.OMEGA_3P
N_ATOMS = presets.N_ATOMS
G = presets.G_COUPLING
ALPHA_REF = presets.ALPHA_REF


@pytest.fixture(scope="session")
def params():
    return PhysicalParams(g=G)


@pytest.fixture(scope="session")
def params_lossless():
    return PhysicalParams(g=G, eta_gamma=0.0)


@pytest.fixture(scope="session")
def sql_spec():
    return reference_protocol(OMEGA_REF, 1.0, ALPHA_REF, N_ATOMS)


@pytest.fixture(scope="session")
def apriori_spec():
    return three_pulse_protocol(OMEGA_3P, math.pi / OMEGA_3P, 3 * math.pi / OMEGA_3P,
                                [ALPHA_REF] * 3, N_ATOMS)


@pytest.fixture(scope="session")
def orange_spec():
    return three_pulse_protocol(OMEGA_3P, 1.79 * math.pi / OMEGA_3P, 3 * math.pi / OMEGA_3P,
                                [presets.ALPHA_ORANGE] * 3, N_ATOMS)
