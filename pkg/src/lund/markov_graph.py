"""Gaussian kernel graphs and the random-walk Markov chains built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateGraphError,
    InvalidParameterError,
    NumericalError,
    ReducibleChainError,
)
from .point_store import PointCloud, knn, pairwise_distances

ROW_SUM_TOL = 1e-12
FIXED_POINT_TOL = 1e-10


@dataclass(frozen=True)
class KernelGraph:
    """Symmetric nonnegative weight matrix.

    ``weights`` is a dense array in ``"dense"`` mode and a CSR matrix in
    ``"knn"`` mode, whose support is the union of the kNN relations.
    """

    weights: np.ndarray | sp.csr_matrix
    sigma: float | None
    mode: str = "dense"
    k_nn: int | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.weights)

    @classmethod
    def from_weights(cls, weights) -> "KernelGraph":
        """Wrap an arbitrary symmetric nonnegative matrix (used for hand-built
        examples; kernel invariants are not imposed)."""
        if sp.issparse(weights):
            w = sp.csr_matrix(weights, dtype=np.float64)
            asym = abs(w - w.T).max() if w.nnz else 0.0
            neg = w.data.min() < 0 if w.nnz else False
            mode = "knn"
        else:
            w = np.array(weights, dtype=np.float64)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise InvalidParameterError("weights must be a square matrix")
            asym = np.abs(w - w.T).max()
            neg = (w < 0).any()
            mode = "dense"
        if neg:
            raise InvalidParameterError("weights must be nonnegative")
        if asym > 1e-12 * max(1.0, abs(w).max()):
            raise InvalidParameterError("weights must be symmetric")
        return cls(w, None, mode)


def build_kernel(cloud: PointCloud, sigma: float, mode: str = "dense", k_nn: int | None = None,
                 neighbors=None) -> KernelGraph:
    """Gaussian kernel ``W_ij = exp(-|x_i - x_j|^2 / sigma^2)`` with ``W_ii = 1``.

    In ``"knn"`` mode only pairs where one point is among the other's ``k_nn``
    nearest neighbors are stored. A precomputed :class:`NeighborList` may be
    passed as ``neighbors`` to avoid a second search.
    """
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    n = cloud.n
    if mode == "dense":
        d = pairwise_distances(cloud)
        w = np.exp(-(d * d) / sigma**2)
        np.fill_diagonal(w, 1.0)
        return KernelGraph(w, float(sigma), "dense")
    if mode != "knn":
        raise InvalidParameterError(f"unknown sparsity mode {mode!r}")
    if neighbors is None:
        if k_nn is None:
            raise InvalidParameterError("knn mode requires k_nn")
        neighbors = knn(cloud, k_nn)
    k = neighbors.k_nn
    rows = np.repeat(np.arange(n), k)
    cols = neighbors.indices.ravel()
    vals = np.exp(-(neighbors.distances.ravel() ** 2) / sigma**2)
    w = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    # union of supports; both directions carry the same kernel value
    w = w.maximum(w.T)
    w = w + sp.identity(n, format="csr")
    w.sort_indices()
    return KernelGraph(w.tocsr(), float(sigma), "knn", k)


def _components(weights) -> list[np.ndarray]:
    if sp.issparse(weights):
        graph = weights.copy()
        graph.data = (graph.data > 0).astype(np.float64)
        graph.eliminate_zeros()
    else:
        graph = sp.csr_matrix(np.asarray(weights) > 0)
    count, lab = connected_components(graph, directed=False)
    return [np.flatnonzero(lab == c) for c in range(count)]


@dataclass(frozen=True)
class MarkovChain:
    """Row-stochastic transition matrix with its stationary distribution."""

    transition: np.ndarray | sp.csr_matrix
    stationary: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.transition.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.transition)

    def dense(self) -> np.ndarray:
        P = self.transition
        return P.toarray() if sp.issparse(P) else np.asarray(P)

    @classmethod
    def from_transition(cls, P, stationary=None, *, require_irreducible: bool = True) -> "MarkovChain":
        """Wrap an explicit transition matrix.

        The stationary distribution is solved for when not supplied; a
        reducible chain needs ``stationary`` (it is not unique) and
        ``require_irreducible=False``.
        """
        P = P.tocsr() if sp.issparse(P) else np.array(P, dtype=np.float64)
        n = P.shape[0]
        if P.shape != (n, n):
            raise InvalidParameterError("transition matrix must be square")
        rs = np.asarray(P.sum(axis=1)).ravel()
        min_entry = P.data.min(initial=0.0) if sp.issparse(P) else P.min()
        if np.abs(rs - 1).max() > 1e-10 or min_entry < 0:
            raise InvalidParameterError("transition matrix must be nonnegative and row-stochastic")
        if require_irreducible:
            comps = _components(P + P.T)
            if len(comps) > 1:
                raise ReducibleChainError(comps)
        if stationary is None:
            stationary = stationary_distribution(P)
        pi = np.asarray(stationary, dtype=np.float64)
        return cls(P, pi, pi.copy())


def stationary_distribution(P) -> np.ndarray:
    """Left Perron vector of an irreducible stochastic matrix, normalized to sum 1."""
    A = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=np.float64)
    n = A.shape[0]
    # pi (P - I) = 0 with sum(pi) = 1 replacing the last balance equation
    M = (A - np.eye(n)).T
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(M, rhs)
    return pi / pi.sum()


def build_chain(graph: KernelGraph | np.ndarray) -> MarkovChain:
    """Row-normalize ``W`` into ``P``; ``pi_i`` is proportional to the degree."""
    if not isinstance(graph, KernelGraph):
        graph = KernelGraph.from_weights(graph)
    W = graph.weights
    deg = np.asarray(W.sum(axis=1)).ravel()
    zero = np.flatnonzero(deg <= 0)
    if zero.size:
        raise DegenerateGraphError(int(zero[0]))
    comps = _components(W)
    if len(comps) > 1:
        raise ReducibleChainError(comps)
    if sp.issparse(W):
        P = sp.diags(1.0 / deg) @ W
        P = P.tocsr()
    else:
        P = W / deg[:, None]
    pi = deg / deg.sum()
    chain = MarkovChain(P, pi, deg)
    _validate(chain)
    return chain


def _validate(chain: MarkovChain):
    P = chain.transition
    rs = np.asarray(P.sum(axis=1)).ravel()
    err = np.abs(rs - 1).max()
    if err > ROW_SUM_TOL:
        raise NumericalError("row sums of P deviate from 1", err)
    resid = np.abs(P.T @ chain.stationary - chain.stationary).sum()
    if resid > FIXED_POINT_TOL:
        raise NumericalError("stationary distribution is not a fixed point", resid)


def lazify(chain: MarkovChain) -> MarkovChain:
    """``(P + I) / 2``: same stationary distribution, diagonal at least 1/2."""
    P = chain.transition
    if sp.issparse(P):
        Q = ((P + sp.identity(chain.n, format="csr")) * 0.5).tocsr()
    else:
        Q = 0.5 * (P + np.eye(chain.n))
    return MarkovChain(Q, chain.stationary.copy(), chain.degrees.copy())


def reversibility_defect(chain: MarkovChain) -> float:
    """``max_ij |pi_i P_ij - pi_j P_ji|``."""
    pi = chain.stationary
    if chain.is_sparse:
        F = sp.diags(pi) @ chain.transition
        diff = F - F.T
        return float(abs(diff).max()) if diff.nnz else 0.0
    F = pi[:, None] * chain.transition
    return float(np.abs(F - F.T).max())
