"""Nearest-neighbor Gaussian kernel density estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .point_store import NeighborList, PointCloud


@dataclass(frozen=True)
class DensityEstimate:
    """Normalized density values with a strict total order.

    ``order`` lists points from highest to lowest density, ties going to the
    lower index; ``rank[i]`` is the position of point ``i`` in that order, so
    "higher density" means "smaller rank".
    """

    values: np.ndarray
    sigma: float
    k_nn: int
    order: np.ndarray = field(init=False, repr=False)
    rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        order = np.lexsort((np.arange(v.size), -v))
        rank = np.empty_like(order)
        rank[order] = np.arange(v.size)
        for arr in (v, order, rank):
            arr.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "rank", rank)

    @property
    def argmax(self) -> int:
        return int(self.order[0])

    @classmethod
    def from_values(cls, values, sigma: float = float("nan"), k_nn: int = 0) -> "DensityEstimate":
        """Wrap given (unnormalized) values; used to pin densities in tests."""
        v = np.asarray(values, dtype=np.float64)
        return cls(v / v.sum(), sigma, k_nn)


def kde(cloud: PointCloud, neighbors: NeighborList, sigma: float) -> DensityEstimate:
    """``p(x) ~ sum_{y in NN(x)} exp(-|x - y|^2 / sigma^2)``, normalized to sum 1."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    if neighbors.k_nn < 1 or len(neighbors) != cloud.n:
        raise InvalidParameterError("neighbor list does not match the point cloud")
    raw = np.exp(-(neighbors.distances**2) / sigma**2).sum(axis=1)
    if not np.all(raw > 0):
        # some rows underflowed: rescale by the largest log-weight, and keep
        # hopeless rows at the smallest normal float so p stays positive
        logw = -(neighbors.distances**2) / sigma**2
        raw = np.exp(logw - logw.max()).sum(axis=1)
        raw = np.maximum(raw, np.finfo(np.float64).tiny)
    return DensityEstimate(raw / raw.sum(), float(sigma), neighbors.k_nn)
