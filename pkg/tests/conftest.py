import numpy as np
import pytest

from bivirus import BivirusSystem, ContactMatrix

# Two-node demo pair: symmetric base layer and a designed competitor for
# which both survival outcomes are locally stable.
TWO_NODE_A = np.array([[3.2, 2.0], [2.0, 3.2]])
TWO_NODE_B = np.array([[4.2, 0.312], [6.1318, 2.2]])


@pytest.fixture(scope="session")
def two_node_a():
    return TWO_NODE_A.copy()


@pytest.fixture(scope="session")
def two_node_b():
    return TWO_NODE_B.copy()


@pytest.fixture(scope="session")
def two_node_system():
    return BivirusSystem(ContactMatrix(TWO_NODE_A), ContactMatrix(TWO_NODE_B))


def random_irreducible(rng, n, density=0.5, target_radius=None):
    """Random irreducible nonnegative matrix; a directed ring guarantees
    strong connectivity regardless of the sparsity draw."""
    m = rng.uniform(0.1, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    for i in range(n):
        m[i, (i + 1) % n] = rng.uniform(0.5, 1.0)
    if target_radius is not None:
        from bivirus import spectral_radius

        m *= target_radius / spectral_radius(m)
    return m
