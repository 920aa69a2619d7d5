import numpy as np
import pytest

from vbisim.beam import BridgeModel, build_mesh


@pytest.fixture(scope="session")
def table2_bridge() -> BridgeModel:
    """25 m simply supported benchmark bridge."""
    return BridgeModel(
        span_length=25.0,
        support_positions=(0.0, 25.0),
        elastic_modulus=2.75e10,
        second_moment=0.12,
        area=2.0,
        mass_per_length=4800.0,
        damping_ratio=0.0,
        num_elements=20,
    )


@pytest.fixture(scope="session")
def table2_mesh(table2_bridge):
    return build_mesh(table2_bridge)


@pytest.fixture(scope="session")
def nube_bridge() -> BridgeModel:
    """27 m bridge of the external numerical benchmark set."""
    return BridgeModel(
        span_length=27.0,
        support_positions=(0.0, 27.0),
        elastic_modulus=3.5e10,
        second_moment=1.7055,
        area=2.0,
        mass_per_length=19372.0,
        damping_ratio=0.0,
        num_elements=20,
    )


def midspan_static_deflection(P: float, L: float, EI: float) -> float:
    return P * L**3 / (48.0 * EI)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
