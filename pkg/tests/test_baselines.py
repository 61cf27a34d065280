import itertools

import numpy as np
import pytest

from conftest import two_blobs
from lund.baselines import eigengap_khat, fsfdpc, kmeans, spectral_ng, spectral_shi
from lund.density import kde
from lund.evaluation import score
from lund.lund_core import LundConfig, lund_from_parts
from lund.markov_graph import KernelGraph
from lund.point_store import EuclideanMetric, PointCloud, knn
from lund.spectral import SpectralDecomposition, eig_sym_laplacian
from lund.synth_data import DatasetSpec, generate


def test_kmeans_two_points():
    r = kmeans(np.array([[0.0, 0.0], [3.0, 1.0]]), 2)
    assert sorted(r.labels.tolist()) == [1, 2]
    assert r.extras["objective"] == 0.0


def test_kmeans_square_exhaustive():
    X = np.array([[0, 0], [2, 0], [0, 1], [2, 1]], dtype=float)
    best = np.inf
    for mask in itertools.product([0, 1], repeat=4):
        m = np.array(mask, dtype=bool)
        if m.all() or not m.any():
            continue
        obj = sum(((X[g] - X[g].mean(axis=0)) ** 2).sum() for g in (m, ~m))
        best = min(best, obj)
    assert kmeans(X, 2).extras["objective"] == pytest.approx(best)
    assert best == pytest.approx(1.0)


def test_kmeans_single_cluster():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    r = kmeans(X, 1)
    np.testing.assert_allclose(r.extras["centers"][0], X.mean(axis=0))
    assert r.extras["objective"] == pytest.approx(X.var(axis=0).sum() * 30)


def test_kmeans_objective_nonincreasing():
    X = np.random.default_rng(1).normal(size=(200, 2))
    h = kmeans(X, 4, seeds=1).extras["history"]
    assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))


@pytest.mark.parametrize("method", [spectral_shi, spectral_ng])
def test_spectral_two_far_blobs(method):
    c = two_blobs(n_per=40, sep=4.0)
    r = method(c, 1.0, 2)
    assert score(r.labels, c.ground_truth).overall == 1.0


def test_spectral_single_cluster_and_k_equals_n():
    c = two_blobs(n_per=5, sep=2.0)
    assert set(spectral_shi(c, 1.0, 1).labels.tolist()) == {1}
    r = spectral_ng(c, 1.0, c.n)
    assert r.labels.size == c.n


def test_fsfdpc_matches_lund_with_euclidean_metric():
    c = generate(DatasetSpec("nadler_gaussians", 400, 3))
    dens = kde(c, knn(c, 20), 0.3)
    for K in (1, 2, 3, 5):
        a = fsfdpc(c, dens, K)
        b = lund_from_parts(EuclideanMetric(c), dens, LundConfig(t=0, k_estimator="fixed", k=K))
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.extras["modes"], b.modes)
        assert np.array_equal(a.extras["delta"], b.rho)


def test_fsfdpc_gaussian_pair_and_trivial():
    c = generate(DatasetSpec("gaussian_pair", 600, 0))
    dens = kde(c, knn(c, 100), 0.2)
    assert score(fsfdpc(c, dens, 2).labels, c.ground_truth).overall >= 0.99
    small = PointCloud(np.arange(4.0)[:, None])
    r = fsfdpc(small, kde(small, knn(small, 1), 1.0), 4)
    assert sorted(r.labels.tolist()) == [1, 2, 3, 4]


def test_fsfdpc_misplaces_modes_on_circles():
    c = generate(DatasetSpec("nonlinear_circles", 2000, 0))
    dens = kde(c, knn(c, 100), 0.175)
    r = fsfdpc(c, dens, 3)
    assert np.unique(c.ground_truth[r.extras["modes"]]).size < 3
    assert score(r.labels, c.ground_truth).overall < 0.9


def test_eigengap_examples():
    dec = SpectralDecomposition(np.array([0, 0, 0, 0.9, 0.95]), np.eye(5), "l2_normalized")
    assert eigengap_khat(dec) == 3
    W = np.kron(np.eye(4), np.ones((5, 5)))
    W[W == 0] = 1e-9
    assert eigengap_khat(eig_sym_laplacian(KernelGraph.from_weights(W), 10)) == 4
