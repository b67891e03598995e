import numpy as np
import pytest

from pppm import SimulationBox, AtomSystem, build_table, generate_scenario


@pytest.fixture(scope="session")
def tables():
    return {order: build_table(order, 5000) for order in (3, 5, 7)}


@pytest.fixture(scope="session")
def unit_box():
    return SimulationBox([1.0, 1.0, 1.0])


def random_neutral_system(n, seed, density=0.25, box_edge=None):
    """Uniform positions, alternating +/-1 charges, exactly neutral."""
    rng = np.random.default_rng(seed)
    edge = box_edge if box_edge is not None else (n / density) ** (1.0 / 3.0)
    positions = rng.uniform(0.0, edge, (n, 3))
    charges = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return AtomSystem(box=SimulationBox([edge] * 3), positions=positions, charges=charges)


@pytest.fixture(scope="session")
def gas_512():
    return generate_scenario("random_gas", 512, seed=0)


@pytest.fixture(scope="session")
def rocksalt_512():
    return generate_scenario("rocksalt", 512, seed=11, jitter=1.5)
