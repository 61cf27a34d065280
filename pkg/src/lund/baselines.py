"""Reference clustering methods: k-means, two spectral clustering variants,
density-peaks clustering and the eigengap cluster-count heuristic."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .density import DensityEstimate
from .errors import InvalidParameterError
from .markov_graph import build_kernel
from .point_store import PointCloud
from .spectral import SpectralDecomposition, eig_sym_laplacian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineResult:
    labels: np.ndarray
    k_used: int
    method: str
    extras: dict = field(default_factory=dict)


def _kmeans_pp(X, K, rng):
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[k] = X[idx]
        d2 = np.minimum(d2, ((X - centers[k]) ** 2).sum(axis=1))
    return centers


def _lloyd(X, centers, max_iter):
    history = []
    assign = None
    for _ in range(max_iter):
        d2 = cdist(X, centers, "sqeuclidean")
        new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(X.shape[0]), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for k in range(centers.shape[0]):
            members = assign == k
            if members.any():
                centers[k] = X[members].mean(axis=0)
            else:
                # empty cluster: restart it at the point farthest from its center
                far = int(np.argmax(d2[np.arange(X.shape[0]), assign]))
                centers[k] = X[far]
                assign[far] = k
    d2 = cdist(X, centers, "sqeuclidean")
    assign = np.argmin(d2, axis=1)
    obj = float(d2[np.arange(X.shape[0]), assign].sum())
    return assign, centers, obj, history


def kmeans(points, K: int, seeds: int = 10, max_iter: int = 300, seed: int = 0) -> BaselineResult:
    """Lloyd's algorithm from k-means++ seeding, best of ``seeds`` restarts."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= K <= n:
        raise InvalidParameterError(f"K must lie in 1..n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, seeds)):
        centers = _kmeans_pp(X, K, rng)
        assign, centers, obj, history = _lloyd(X, centers, max_iter)
        if best is None or obj < best[2]:
            best = (assign, centers, obj, history)
    assign, centers, obj, history = best
    return BaselineResult(
        labels=assign + 1,
        k_used=K,
        method="kmeans",
        extras={"objective": obj, "centers": centers, "history": history},
    )


def _laplacian_embedding(cloud, sigma, K, decomposition):
    if decomposition is None:
        graph = build_kernel(cloud, sigma, "dense")
        decomposition = eig_sym_laplacian(graph, max(K, 2))
        degrees = np.asarray(graph.weights.sum(axis=1)).ravel()
    else:
        degrees = None
    return decomposition, degrees


def spectral_shi(cloud: PointCloud, sigma: float, K: int, seed: int = 0,
                 decomposition: SpectralDecomposition | None = None, degrees=None) -> BaselineResult:
    """Cluster the scalar embedding by the second random-walk eigenvector."""
    if K == 1:
        return BaselineResult(np.ones(cloud.n, dtype=np.int64), 1, "spectral_shi")
    if decomposition is None:
        decomposition, degrees = _laplacian_embedding(cloud, sigma, K, None)
    if degrees is None:
        raise InvalidParameterError("a precomputed decomposition needs the graph degrees")
    psi2 = decomposition.vectors[:, 1] / np.sqrt(degrees)
    res = kmeans(psi2[:, None], K, seed=seed)
    return BaselineResult(res.labels, K, "spectral_shi", {"objective": res.extras["objective"]})


def spectral_ng(cloud: PointCloud, sigma: float, K: int, seed: int = 0,
                decomposition: SpectralDecomposition | None = None) -> BaselineResult:
    """Row-normalized embedding by the first ``K`` eigenvectors of ``L_sym``."""
    if decomposition is None:
        decomposition, _ = _laplacian_embedding(cloud, sigma, K, None)
    K_eff = min(K, decomposition.M)
    U = decomposition.vectors[:, :K_eff].copy()
    norms = np.linalg.norm(U, axis=1)
    zero = norms == 0
    if zero.any():
        log.warning("%d zero rows in the spectral embedding left unnormalized", int(zero.sum()))
    U[~zero] /= norms[~zero, None]
    res = kmeans(U, K, seed=seed)
    return BaselineResult(res.labels, K, "spectral_ng", {"objective": res.extras["objective"]})


def fsfdpc(cloud: PointCloud, density: DensityEstimate, K: int) -> BaselineResult:
    """Density peaks with Euclidean distances.

    Modes are the ``K`` largest values of ``p(x) * delta(x)`` where ``delta`` is
    the distance to the nearest higher-density point; the rest inherit the
    label of that point, processed in decreasing density.
    """
    X = cloud.points
    n = cloud.n
    if not 1 <= K <= n:
        raise InvalidParameterError(f"K must lie in 1..n, got {K}")
    rank = density.rank
    order = density.order
    delta = np.empty(n)
    parent = np.full(n, -1, dtype=np.int64)
    # walk the density order; the points seen so far are exactly the higher ones
    block = 256
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        D = cdist(X[rows], X)
        for r, i in enumerate(rows):
            cand = rank < rank[i]
            if not cand.any():
                delta[i] = D[r].max()
                continue
            d = np.where(cand, D[r], np.inf)
            j = int(np.argmin(d))
            parent[i] = j
            delta[i] = d[j]
    gamma = density.values * delta
    modes = np.lexsort((np.arange(n), -gamma))[:K]
    labels = np.zeros(n, dtype=np.int64)
    labels[modes] = np.arange(1, K + 1)
    for i in order:
        if labels[i]:
            continue
        j = parent[i]
        if j < 0:
            j = modes[int(np.argmin(np.linalg.norm(X[modes] - X[i], axis=1)))]
        labels[i] = labels[j]
    return BaselineResult(labels, K, "fsfdpc", {"modes": modes, "delta": delta})


def eigengap_khat(decomposition: SpectralDecomposition) -> int:
    """Index of the largest gap between consecutive ascending Laplacian eigenvalues."""
    if decomposition.M < 2:
        raise InvalidParameterError("eigengap needs at least two eigenvalues")
    ev = decomposition.eigenvalues
    mu = ev if decomposition.normalization == "l2_normalized" else 1.0 - ev
    mu = np.sort(mu)
    gaps = np.diff(mu)
    return int(np.argmax(gaps)) + 1
