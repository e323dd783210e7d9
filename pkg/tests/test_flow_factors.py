import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrisk.errors import BadSlackIndex, DimensionMismatch, MultipleZeroEigenvalues, NotPSD, NotSymmetric
from gridrisk.flow_factors import InjectionModel, factorize, pseudo_inverse, psd_sqrt, slack_embedding
from gridrisk.grid_model import Network, build_incidence, build_laplacian

from conftest import random_covariance, random_network


def test_k3_pinv_closed_form(k3):
    expected = np.eye(3) / 3 - np.ones((3, 3)) / 9
    np.testing.assert_allclose(pseudo_inverse(build_laplacian(k3)), expected, atol=1e-15)


def test_two_bus_pinv():
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(pseudo_inverse(lap), lap / 4, atol=1e-15)


def test_zero_one_by_one():
    np.testing.assert_array_equal(pseudo_inverse(np.zeros((1, 1))), np.zeros((1, 1)))


def test_pinv_disconnected():
    lap = np.zeros((4, 4))
    lap[:2, :2] = [[1, -1], [-1, 1]]
    lap[2:, 2:] = [[1, -1], [-1, 1]]
    with pytest.raises(MultipleZeroEigenvalues):
        pseudo_inverse(lap)


def test_pinv_not_symmetric():
    with pytest.raises(NotSymmetric):
        pseudo_inverse(np.array([[1.0, -1.0], [0.0, 1.0]]))


def test_psd_sqrt_examples():
    np.testing.assert_allclose(psd_sqrt(0.5 * np.eye(2)), np.sqrt(0.5) * np.eye(2), atol=1e-15)
    ones = np.ones((2, 2))
    np.testing.assert_allclose(psd_sqrt(ones), ones / np.sqrt(2), atol=1e-15)
    with pytest.raises(NotPSD):
        psd_sqrt(np.diag([1.0, -0.1]), tol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_psd_sqrt_squares_back(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 15))
    cov = random_covariance(rng, k, rank=int(rng.integers(1, k + 1)))
    root = psd_sqrt(cov)
    np.testing.assert_array_equal(root, root.T)
    np.testing.assert_allclose(root @ root, cov, atol=1e-10 * np.abs(cov).max())


def test_slack_embedding():
    np.testing.assert_array_equal(slack_embedding(3, 2), [[1, 0], [0, 1], [-1, -1]])
    np.testing.assert_array_equal(slack_embedding(2, 1), [[1], [-1]])
    np.testing.assert_array_equal(slack_embedding(3, 0), [[-1, -1], [1, 0], [0, 1]])
    with pytest.raises(BadSlackIndex):
        slack_embedding(3, 3)


@given(st.integers(2, 12), st.data())
def test_slack_embedding_zero_sum(n, data):
    slack = data.draw(st.integers(0, n - 1))
    x = np.array(data.draw(st.lists(st.floats(-1e3, 1e3), min_size=n - 1, max_size=n - 1)))
    emb = slack_embedding(n, slack)
    assert np.all(emb.sum(axis=0) == 0)
    assert abs((emb @ x).sum()) <= 1e-9 * (1 + np.abs(x).sum())


def test_k3_factors(k3_factors):
    f = k3_factors
    np.testing.assert_allclose(f.w_mat, np.array([[1, -1], [2, 1], [1, 2]]) / 15, atol=1e-15)
    np.testing.assert_allclose(f.sigma, [1 / 15, 1 / np.sqrt(90), 1 / np.sqrt(90)], rtol=1e-13)
    np.testing.assert_allclose(f.sigma, [0.06667, 0.10541, 0.10541], atol=5e-6)
    np.testing.assert_array_equal(f.nu, 0.0)
    np.testing.assert_allclose(f.at([3, -3]).nu, [0.4, 0.2, -0.2], atol=1e-15)


def test_factor_invariants(k3_factors):
    f = k3_factors
    np.testing.assert_allclose(f.sigma**2, np.sum(f.v_mat**2, axis=1), rtol=1e-12)
    np.testing.assert_array_equal(f.nu, f.w_mat @ f.mu)


def test_dimension_mismatch(k3):
    with pytest.raises(DimensionMismatch):
        factorize(k3, InjectionModel.iid([0.0, 0.0, 0.0], 1.0))
    with pytest.raises(DimensionMismatch):
        InjectionModel(np.zeros(2), np.eye(3))


@pytest.mark.parametrize("seed", range(15))
def test_slack_invariance_and_node_balance(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, int(rng.integers(2, 25)))
    p = rng.normal(size=net.n)
    p -= p.mean()
    bl = build_incidence(net) @ pseudo_inverse(build_laplacian(net))
    flows = bl @ p
    # the same p expressed through a different slack bus
    other = Network(net.buses, net.lines, int(rng.integers(net.n)))
    emb = slack_embedding(net.n, other.slack)
    p2 = emb @ p[other.non_slack]
    np.testing.assert_allclose(p2, p, atol=1e-12)
    np.testing.assert_allclose(bl @ p2, flows, atol=1e-10 * max(1, np.abs(flows).max()))
    # signed sum of flows leaving each bus equals its injection
    unit = build_incidence(net, weighted=False)
    np.testing.assert_allclose(unit.T @ flows, p, atol=1e-10 * max(1, np.abs(p).max()))


@pytest.mark.parametrize("seed", range(10))
def test_sigma_scaling_and_permutation(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, int(rng.integers(3, 15)))
    k = net.n - 1
    mu, cov = rng.normal(size=k), random_covariance(rng, k)
    base = factorize(net, InjectionModel(mu, cov))
    scaled = factorize(net, InjectionModel(mu, 7.0 * cov))
    np.testing.assert_allclose(scaled.sigma, np.sqrt(7.0) * base.sigma, rtol=1e-10, atol=1e-14)

    # relabel the non-slack buses; permute mu, Sigma consistently
    perm = rng.permutation(net.n)
    ids = [net.buses[i].id for i in perm]
    edges = [(net.buses[ln.from_bus].id, net.buses[ln.to_bus].id, ln.susceptance, ln.capacity) for ln in net.lines]
    net2 = Network.from_edges(ids, edges, slack=net.buses[net.slack].id)
    old_cols = {b: c for c, b in enumerate(net.non_slack)}
    order = [old_cols[net.index_of(net2.buses[b].id)] for b in net2.non_slack]
    moved = factorize(net2, InjectionModel(mu[order], cov[np.ix_(order, order)]))
    np.testing.assert_allclose(moved.sigma, base.sigma, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(moved.nu, base.nu, rtol=1e-9, atol=1e-12)


def test_deterministic_injections_give_zero_sigma(k3):
    f = factorize(k3, InjectionModel.iid([1.0, 2.0], 0.0))
    np.testing.assert_array_equal(f.sigma, 0.0)


def test_rank_deficient_covariance(k3):
    cov = np.array([[1.0, 1.0], [1.0, 1.0]])
    f = factorize(k3, InjectionModel(np.zeros(2), cov))
    # x1 = x2 = z: line 1-2 carries no noise
    assert f.sigma[0] < 1e-15
    np.testing.assert_allclose(f.sigma[1:], [3 / 15, 3 / 15], rtol=1e-12)
