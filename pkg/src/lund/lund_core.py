"""Learning by Unsupervised Nonlinear Diffusion.

The routines here only need a *metric* object exposing ``n`` and
``distances_from(rows)``; :class:`~lund.diffusion.DiffusionOperator` is the
production metric and :class:`~lund.point_store.EuclideanMetric` turns the same
code into density-peaks clustering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .density import DensityEstimate, kde
from .diffusion import DiffusionOperator
from .errors import DegenerateScoreError, EstimationError, InvalidParameterError
from .markov_graph import build_chain, build_kernel
from .point_store import PointCloud, knn
from .spectral import DEFAULT_M, eig_markov

log = logging.getLogger(__name__)

K_ESTIMATORS = ("ratio_argmax", "tau_threshold", "fixed")
_ROW_BLOCK = 512


@dataclass(frozen=True)
class LundConfig:
    t: int
    k_estimator: str = "ratio_argmax"
    tau: float | None = None
    k: int | None = None
    M: int = DEFAULT_M
    kde_knn: int = 100
    kde_sigma: float | None = None
    graph_mode: str = "dense"
    graph_knn: int | None = None

    def __post_init__(self):
        if self.k_estimator not in K_ESTIMATORS:
            raise InvalidParameterError(f"unknown k_estimator {self.k_estimator!r}")
        if self.k_estimator == "tau_threshold":
            if self.tau is None or not self.tau > 0 or self.tau == 1:
                raise InvalidParameterError("tau_threshold needs tau > 0 with tau != 1")
        if self.k_estimator == "fixed" and (self.k is None or self.k < 1):
            raise InvalidParameterError("fixed estimator needs k >= 1")
        if int(self.t) != self.t or self.t < 0:
            raise InvalidParameterError(f"t must be a nonnegative integer, got {self.t}")


@dataclass(frozen=True)
class LundResult:
    labels: np.ndarray
    k_hat: int
    modes: np.ndarray
    rho: np.ndarray
    score: np.ndarray
    sorted_scores: np.ndarray = field(repr=False)
    density: DensityEstimate | None = field(default=None, repr=False)


def nearest_higher_density(metric, density: DensityEstimate):
    """Distance to, and index of, the nearest strictly-higher-density point.

    For the global density maximizer the distance is its largest distance to
    any point and the index is ``-1``. Distance ties go to the lower index.
    """
    n = metric.n
    rank = density.rank
    dist = np.empty(n)
    parent = np.full(n, -1, dtype=np.int64)
    top = density.argmax
    for start in range(0, n, _ROW_BLOCK):
        rows = np.arange(start, min(start + _ROW_BLOCK, n))
        D = metric.distances_from(rows)
        higher = rank[None, :] < rank[rows][:, None]
        masked = np.where(higher, D, np.inf)
        j = np.argmin(masked, axis=1)
        parent[rows] = j
        dist[rows] = masked[np.arange(rows.size), j]
        hit = np.flatnonzero(rows == top)
        if hit.size:
            r = hit[0]
            dist[top] = D[r].max()
            parent[top] = -1
    return dist, parent


def compute_rho(op, density: DensityEstimate) -> np.ndarray:
    """Distance from each point to its nearest point of higher density."""
    return nearest_higher_density(op, density)[0]


def score_order(score: np.ndarray) -> np.ndarray:
    """Indices sorting scores descending, ties to the lower index."""
    score = np.asarray(score)
    return np.lexsort((np.arange(score.size), -score))


def _ratio_threshold(tau: float) -> float:
    # the threshold may be given on either side of 1: tau < 1 bounds the
    # successor/predecessor ratio, tau > 1 the predecessor/successor ratio
    return tau if tau > 1 else 1.0 / tau


def estimate_modes_and_k(score, config: LundConfig, floor=None):
    """Cluster count and mode indices from the mode-detection scores.

    Returns ``(k_hat, modes)`` where ``modes`` are the ``k_hat`` top-scoring
    points in descending score order.

    ``floor`` (per point, optional) is the absolute accuracy of each score.
    A denominator below its floor is replaced by the floor, so every ratio is
    a lower bound on the exact one and scores lost to rounding cannot produce
    spurious jumps in the tail. Without floors a positive score over a zero
    one counts as an infinite ratio.
    """
    score = np.asarray(score, dtype=np.float64)
    n = score.size
    if n < 2 and config.k_estimator != "fixed":
        raise InvalidParameterError("cluster-count estimation needs at least two points")
    order = score_order(score)
    s = score[order]

    if config.k_estimator == "fixed":
        if config.k > n:
            raise InvalidParameterError(f"k={config.k} exceeds n={n}")
        k_hat = int(config.k)
    else:
        if not s[0] > 0:
            raise DegenerateScoreError("all scores are zero; ratios undefined")
        f = np.zeros(n) if floor is None else np.asarray(floor, dtype=np.float64)[order]
        num = s[:-1]
        den = np.maximum(s[1:], f[1:])
        ok = den > 0
        ratios = np.where(ok, num / np.where(ok, den, 1.0), np.where(num > 0, np.inf, 0.0))
        if config.k_estimator == "ratio_argmax":
            k_hat = int(np.argmax(ratios)) + 1
        else:
            thr = _ratio_threshold(config.tau)
            above = np.flatnonzero(ratios > thr)
            if above.size == 0:
                raise EstimationError(f"no consecutive score ratio exceeds {thr:g}")
            k_hat = int(above[0]) + 1
    return k_hat, order[:k_hat].copy()


def label(op, density: DensityEstimate, modes, k_hat: int | None = None, parent=None) -> np.ndarray:
    """Propagate mode labels down the density order.

    Each unlabeled point copies the label of its nearest (under ``op``) labeled
    point of higher density. Every higher-density point is already labeled when
    a point is reached, so that neighbor is the nearest-higher-density parent.
    A global density maximizer that is not a mode has no candidate and takes
    its nearest mode instead.
    """
    modes = np.asarray(modes, dtype=np.int64)
    if k_hat is not None and k_hat != modes.size:
        raise InvalidParameterError("k_hat must equal the number of modes")
    n = op.n
    if parent is None:
        _, parent = nearest_higher_density(op, density)
    labels = np.zeros(n, dtype=np.int64)
    labels[modes] = np.arange(1, modes.size + 1)
    for x in density.order:
        if labels[x]:
            continue
        p = parent[x]
        if p < 0:
            d = op.distances_from([x])[0][modes]
            p = modes[int(np.argmin(d))]
        labels[x] = labels[p]
        if labels[x] == 0:  # pragma: no cover - impossible by the density order
            raise RuntimeError(f"point {x} reached before its parent {p}")
    return labels


def lund_from_parts(op, density: DensityEstimate, config: LundConfig) -> LundResult:
    """Run the mode detection and labeling stages on a prepared metric."""
    rho, parent = nearest_higher_density(op, density)
    score = density.values * rho
    floor = density.values * getattr(op, "resolution", 0.0)
    k_hat, modes = estimate_modes_and_k(score, config, floor)
    labels = label(op, density, modes, k_hat, parent=parent)
    return LundResult(
        labels=labels,
        k_hat=k_hat,
        modes=modes,
        rho=rho,
        score=score,
        sorted_scores=score[score_order(score)],
        density=density,
    )


def prepare(cloud: PointCloud, sigma: float, config: LundConfig):
    """Kernel, chain, spectrum and density for ``lund``; reusable across ``t``."""
    kde_knn = min(config.kde_knn, cloud.n - 1)
    graph_knn = config.graph_knn
    neighbors = None
    if config.graph_mode == "knn":
        graph_knn = min(graph_knn or kde_knn, cloud.n - 1)
        neighbors = knn(cloud, max(graph_knn, kde_knn))
    if neighbors is None:
        neighbors = knn(cloud, kde_knn)
    kde_nbrs = neighbors if neighbors.k_nn == kde_knn else _truncate(neighbors, kde_knn)
    density = kde(cloud, kde_nbrs, config.kde_sigma or sigma)
    if config.graph_mode == "knn":
        graph_nbrs = neighbors if neighbors.k_nn == graph_knn else _truncate(neighbors, graph_knn)
        graph = build_kernel(cloud, sigma, "knn", neighbors=graph_nbrs)
    else:
        graph = build_kernel(cloud, sigma, "dense")
    chain = build_chain(graph)
    dec = eig_markov(chain, min(config.M, cloud.n))
    return chain, dec, density


def _truncate(neighbors, k):
    from .point_store import NeighborList

    return NeighborList(neighbors.indices[:, :k].copy(), neighbors.distances[:, :k].copy())


def lund(cloud: PointCloud, sigma: float, config: LundConfig) -> LundResult:
    """Full pipeline: kernel, chain, spectrum, density, scores, modes, labels."""
    _, dec, density = prepare(cloud, sigma, config)
    op = DiffusionOperator(dec, config.t)
    return lund_from_parts(op, density, config)
