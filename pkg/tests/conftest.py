import numpy as np
import pytest

from lund.markov_graph import KernelGraph, build_chain
from lund.point_store import PointCloud


def random_weights(n, rng, low=0.05):
    """Dense symmetric positive weights, so the chain is irreducible and aperiodic."""
    A = rng.uniform(low, 1.0, size=(n, n))
    return 0.5 * (A + A.T)


def random_chain(n, seed):
    rng = np.random.default_rng(seed)
    return build_chain(KernelGraph.from_weights(random_weights(n, rng)))


def block_weights(sizes, eps, rng):
    """Strong within-block weights, cross-block weights scaled by ``eps``."""
    n = int(sum(sizes))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    A = rng.uniform(0.5, 1.5, size=(n, n))
    A = 0.5 * (A + A.T)
    A[labels[:, None] != labels[None, :]] *= eps
    return A, labels + 1


def block_chain(sizes, eps, seed):
    rng = np.random.default_rng(seed)
    W, labels = block_weights(sizes, eps, rng)
    return build_chain(KernelGraph.from_weights(W)), labels


def two_blobs(n_per=40, sep=10.0, std=0.3, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, std, size=(n_per, 2))
    b = rng.normal(0.0, std, size=(n_per, 2)) + [sep, 0.0]
    return PointCloud(np.vstack([a, b]), np.repeat([1, 2], n_per))


@pytest.fixture
def blobs():
    return two_blobs()
