import numpy as np
import pytest

from gridrisk import InjectionModel, Network, factorize, load_scenario


def k3_network(capacity=5.0):
    return Network.from_edges(
        ["1", "2", "3"],
        [("1", "2", 1.0, capacity), ("1", "3", 1.0, capacity), ("2", "3", 1.0, capacity)],
    )


def random_network(rng, n, extra=None, capacity=(0.5, 5.0)):
    """Random connected graph: a random spanning tree plus ``extra`` chords."""
    order = rng.permutation(n)
    pairs = set()
    for k in range(1, n):
        a, b = order[k], order[rng.integers(k)]
        pairs.add((min(a, b), max(a, b)))
    extra = rng.integers(0, n + 1) if extra is None else extra
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        pairs.add((min(a, b), max(a, b)))
    edges = [
        (str(a), str(b), rng.uniform(0.5, 20.0), rng.uniform(*capacity))
        for a, b in sorted(pairs)
    ]
    # random orientation
    edges = [(t, f, s, c) if rng.random() < 0.5 else (f, t, s, c) for f, t, s, c in edges]
    return Network.from_edges([str(i) for i in range(n)], edges, slack=str(rng.integers(n)))


def random_covariance(rng, k, scale=1.0, rank=None):
    rank = k if rank is None else rank
    a = rng.normal(size=(k, rank))
    return scale * a @ a.T / rank


@pytest.fixture
def k3():
    return k3_network()


@pytest.fixture
def k3_factors(k3):
    return factorize(k3, InjectionModel.iid([0.0, 0.0], 0.5))


@pytest.fixture(scope="session")
def case14():
    return load_scenario("case14")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
