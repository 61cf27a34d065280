"""Point clouds, Euclidean distances and exact k-nearest-neighbor search."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import InvalidParameterError

# rows of the distance matrix materialized at once by the brute-force paths
_CHUNK = 1024


@dataclass(frozen=True)
class PointCloud:
    """A dataset of ``n`` points in ``R^D`` with optional ground-truth labels.

    ``ground_truth`` uses labels ``1..K`` and every class must be nonempty.
    """

    points: np.ndarray
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidParameterError(
                f"points must be an (n, D) array with n, D >= 1, got {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("points contain non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.ground_truth is not None:
            gt = np.asarray(self.ground_truth)
            if gt.shape != (pts.shape[0],):
                raise InvalidParameterError("ground_truth must have one label per point")
            if not np.issubdtype(gt.dtype, np.integer):
                if not np.all(gt == np.round(gt)):
                    raise InvalidParameterError("ground_truth labels must be integers")
            gt = gt.astype(np.int64)
            k = int(gt.max())
            if gt.min() < 1 or np.unique(gt).size != k:
                raise InvalidParameterError(
                    "ground_truth labels must cover 1..K with every class nonempty"
                )
            gt.setflags(write=False)
            object.__setattr__(self, "ground_truth", gt)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def D(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int | None:
        if self.ground_truth is None:
            return None
        return int(self.ground_truth.max())

    def subset(self, index) -> "PointCloud":
        index = np.asarray(index)
        gt = None if self.ground_truth is None else self.ground_truth[index]
        if gt is not None:
            # relabel to 1..K' preserving order of first appearance by label id
            _, gt = np.unique(gt, return_inverse=True)
            gt = gt + 1
        return PointCloud(self.points[index], gt)


@dataclass(frozen=True)
class NeighborList:
    """Nearest neighbors of every point, nearest first, self excluded."""

    indices: np.ndarray
    distances: np.ndarray
    k_nn: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "k_nn", int(self.indices.shape[1]))
        self.indices.setflags(write=False)
        self.distances.setflags(write=False)

    def __len__(self):
        return self.indices.shape[0]

    def __getitem__(self, i):
        return list(zip(self.indices[i].tolist(), self.distances[i].tolist()))


def pairwise_distances(cloud: PointCloud) -> np.ndarray:
    """Dense symmetric matrix of Euclidean distances."""
    d = cdist(cloud.points, cloud.points)
    np.fill_diagonal(d, 0.0)
    # cdist is symmetric up to rounding in the last bit; force exact symmetry
    return np.minimum(d, d.T)


def _sorted_row(dist_row: np.ndarray, candidates: np.ndarray, k: int):
    order = np.lexsort((candidates, dist_row))[:k]
    return candidates[order], dist_row[order]


def _brute_force_row(points: np.ndarray, i: int, k: int):
    d = np.sqrt(((points - points[i]) ** 2).sum(axis=1))
    d[i] = np.inf
    idx = np.arange(points.shape[0])
    return _sorted_row(d, idx, k)


def knn_bruteforce(cloud: PointCloud, k_nn: int) -> NeighborList:
    """Exact kNN by full distance scan; the reference path for tests."""
    n = cloud.n
    _check_k(n, k_nn)
    pts = cloud.points
    out_idx = np.empty((n, k_nn), dtype=np.int64)
    out_dst = np.empty((n, k_nn))
    all_idx = np.arange(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        block = cdist(pts[start:stop], pts)
        block[np.arange(stop - start), np.arange(start, stop)] = np.inf
        for r in range(stop - start):
            out_idx[start + r], out_dst[start + r] = _sorted_row(block[r], all_idx, k_nn)
    return NeighborList(out_idx, out_dst)


def _check_k(n: int, k_nn: int):
    if int(k_nn) != k_nn or k_nn < 1:
        raise InvalidParameterError(f"k_nn must be a positive integer, got {k_nn}")
    if k_nn >= n:
        raise InvalidParameterError(f"k_nn={k_nn} must be smaller than n={n}")


def knn(cloud: PointCloud, k_nn: int, *, index: str = "kdtree", workers: int = 1) -> NeighborList:
    """Exact ``k_nn`` nearest neighbors of every point under Euclidean distance.

    Ties are broken by lower point index and the point itself is never listed.
    ``index="kdtree"`` queries a kd-tree and falls back to a brute-force scan
    for the rare rows where a distance tie straddles the k-th position (the
    tree's own tie order is not index-stable). ``index="brute"`` always scans.
    """
    n = cloud.n
    _check_k(n, k_nn)
    if index == "brute":
        return knn_bruteforce(cloud, k_nn)
    if index != "kdtree":
        raise InvalidParameterError(f"unknown index type {index!r}")

    pts = cloud.points
    tree = cKDTree(pts)
    q = min(k_nn + 2, n)
    _, cand = tree.query(pts, k=q, workers=workers)
    cand = np.asarray(cand, dtype=np.int64).reshape(n, q)
    # recompute candidate distances directly so tie detection sees one rounding
    diff = pts[cand] - pts[:, None, :]
    cdst = np.sqrt((diff * diff).sum(axis=2))

    out_idx = np.empty((n, k_nn), dtype=np.int64)
    out_dst = np.empty((n, k_nn))
    rows = np.arange(n)
    is_self = cand == rows[:, None]
    cdst = np.where(is_self, np.inf, cdst)
    # sort each row by (distance, index): stable sort by index, then by distance
    key_order = np.argsort(cand, axis=1, kind="stable")
    cand_s = np.take_along_axis(cand, key_order, axis=1)
    dst_s = np.take_along_axis(cdst, key_order, axis=1)
    by_dist = np.argsort(dst_s, axis=1, kind="stable")
    cand_s = np.take_along_axis(cand_s, by_dist, axis=1)
    dst_s = np.take_along_axis(dst_s, by_dist, axis=1)

    self_found = is_self.any(axis=1)
    usable = q - 1  # candidates after dropping self
    if usable > k_nn:
        boundary_tie = dst_s[:, k_nn - 1] == dst_s[:, k_nn]
    else:
        # q == n: every other point is a candidate, nothing can be missing
        boundary_tie = np.zeros(n, dtype=bool)
    redo = ~self_found | boundary_tie
    out_idx[:] = cand_s[:, :k_nn]
    out_dst[:] = dst_s[:, :k_nn]
    for i in np.flatnonzero(redo):
        out_idx[i], out_dst[i] = _brute_force_row(pts, int(i), k_nn)
    return NeighborList(out_idx, out_dst)


class EuclideanMetric:
    """Row-block access to Euclidean distances, the same interface as
    :class:`lund.diffusion.DiffusionOperator` exposes for diffusion distances."""

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self.n = cloud.n
        # absolute accuracy of a computed distance, as for diffusion distances
        self.resolution = 16 * np.finfo(np.float64).eps * float(np.abs(cloud.points).max())

    def distances_from(self, rows) -> np.ndarray:
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        d = cdist(self.cloud.points[rows], self.cloud.points)
        d[np.arange(rows.size), rows] = 0.0
        return d


def read_csv(path) -> PointCloud:
    """Load one point per row; a header whose last column is ``label`` marks
    that column as integer ground truth."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidParameterError(f"{path} contains no rows")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    data = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InvalidParameterError(f"{path} has no numeric rows")
    if header is not None and header[-1].lower() == "label":
        return PointCloud(data[:, :-1], data[:, -1].astype(np.int64))
    return PointCloud(data)


def write_csv(cloud: PointCloud, path, labels=None) -> None:
    """Write points (and ground truth, or ``labels`` if given) as CSV."""
    path = Path(path)
    lab = labels if labels is not None else cloud.ground_truth
    header = [f"x{j}" for j in range(cloud.D)]
    if lab is not None:
        header.append("label")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(cloud.n):
            row = [repr(float(v)) for v in cloud.points[i]]
            if lab is not None:
                row.append(int(lab[i]))
            w.writerow(row)
