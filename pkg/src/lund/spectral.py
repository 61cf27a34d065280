"""Truncated eigendecompositions of reversible chains and normalized Laplacians.

Both operators are handled through the same symmetric matrix
``A = D^{1/2} P D^{-1/2}`` (``D`` the diagonal of ``pi``), which for a kernel
graph equals ``D_W^{-1/2} W D_W^{-1/2}`` and ``I - L_sym``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import InvalidParameterError, NumericalError, ReducibleChainError, UnsupportedChainError
from .markov_graph import KernelGraph, MarkovChain, _components, reversibility_defect

log = logging.getLogger(__name__)

DEFAULT_M = 100
EIG_TOL = 1e-8
# dense LAPACK is used up to this size, or whenever M is a sizeable fraction of n
DENSE_LIMIT = 3000


@dataclass(frozen=True)
class SpectralDecomposition:
    """Retained eigenpairs; ``vectors[:, l]`` pairs with ``eigenvalues[l]``.

    ``normalization == "pi_normalized"`` means right eigenvectors of ``P`` with
    ``sum_x psi(x)^2 pi(x) = 1``; ``"l2_normalized"`` means orthonormal
    eigenvectors of ``L_sym``.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    normalization: str
    stationary: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.eigenvalues.size

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def transition_power(self, t: int, rows=None) -> np.ndarray:
        """Rows of ``P^t`` rebuilt from the spectrum (exact only when ``M == n``)."""
        from .diffusion import attenuation

        if self.normalization != "pi_normalized":
            raise InvalidParameterError("transition_power needs a pi-normalized decomposition")
        a = attenuation(self.eigenvalues, t)
        left = self.vectors if rows is None else self.vectors[np.asarray(rows)]
        return (left * a) @ (self.vectors * self.stationary[:, None]).T


def _fix_signs(V: np.ndarray) -> np.ndarray:
    scale = np.abs(V).max(axis=0)
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12 * scale[j])
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def _symmetric_top(A, M: int, solver: str = "auto"):
    """Largest ``M`` eigenpairs of symmetric ``A``, sorted descending."""
    n = A.shape[0]
    if solver == "auto":
        solver = "dense" if (not sp.issparse(A) and n <= DENSE_LIMIT) or M >= n // 4 or n < 50 else "lanczos"
    if solver == "dense":
        Ad = A.toarray() if sp.issparse(A) else A
        w, V = eigh(Ad, subset_by_index=[n - M, n - 1])
    elif solver == "lanczos":
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            w, V = eigsh(A, k=M, which="LA", v0=v0, tol=0, ncv=min(n, max(2 * M + 1, M + 32)))
        except ArpackNoConvergence as exc:
            raise NumericalError(f"Lanczos did not converge ({len(exc.eigenvalues)} of {M} pairs)") from exc
    else:
        raise InvalidParameterError(f"unknown solver {solver!r}")
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(V[:, order])


def _clamp(M: int, n: int) -> int:
    if int(M) != M or M < 1:
        raise InvalidParameterError(f"M must be a positive integer, got {M}")
    if M > n:
        warnings.warn(f"M={M} exceeds n={n}; clamped to n", stacklevel=3)
        return n
    return int(M)


def symmetric_conjugate(chain: MarkovChain):
    """``D_pi^{1/2} P D_pi^{-1/2}``, explicitly symmetrized."""
    s = np.sqrt(chain.stationary)
    P = chain.transition
    if sp.issparse(P):
        A = sp.diags(s) @ P @ sp.diags(1.0 / s)
        return ((A + A.T) * 0.5).tocsr()
    A = s[:, None] * P / s[None, :]
    return 0.5 * (A + A.T)


def eig_markov(chain: MarkovChain, M: int = DEFAULT_M, *, solver: str = "auto",
               check: bool = True) -> SpectralDecomposition:
    """Top ``M`` eigenpairs of a reversible ``P`` with pi-normalized right vectors."""
    n = chain.n
    M = _clamp(M, n)
    defect = reversibility_defect(chain)
    if defect > 1e-10:
        raise UnsupportedChainError(f"chain is not reversible (detailed-balance defect {defect:.2e})")
    A = symmetric_conjugate(chain)
    w, V = _symmetric_top(A, M, solver)
    V = _fix_signs(V)
    psi = V / np.sqrt(chain.stationary)[:, None]
    dec = SpectralDecomposition(w, psi, "pi_normalized", chain.stationary)
    if check:
        _check_markov(chain, dec)
    return dec


def _check_markov(chain: MarkovChain, dec: SpectralDecomposition):
    if abs(dec.eigenvalues[0] - 1.0) > EIG_TOL:
        raise NumericalError("leading eigenvalue differs from 1", abs(dec.eigenvalues[0] - 1.0))
    P = chain.transition
    R = P @ dec.vectors - dec.vectors * dec.eigenvalues
    rel = np.linalg.norm(R, axis=0) / np.linalg.norm(dec.vectors, axis=0)
    if rel.max() > EIG_TOL:
        raise NumericalError("eigenpair residual too large", float(rel.max()))


def eig_sym_laplacian(graph: KernelGraph, M: int = DEFAULT_M, *, solver: str = "auto") -> SpectralDecomposition:
    """Smallest ``M`` eigenpairs of ``L_sym = I - D^{-1/2} W D^{-1/2}``, ascending."""
    W = graph.weights
    n = graph.n
    M = _clamp(M, n)
    comps = _components(W)
    if len(comps) > 1:
        raise ReducibleChainError(comps)
    d = np.asarray(W.sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(d)
    if sp.issparse(W):
        A = (sp.diags(s) @ W @ sp.diags(s)).tocsr()
        A = ((A + A.T) * 0.5).tocsr()
    else:
        A = s[:, None] * W * s[None, :]
        A = 0.5 * (A + A.T)
    w, V = _symmetric_top(A, M, solver)
    mu = np.clip(1.0 - w, 0.0, 2.0)
    V = _fix_signs(V)
    if abs(mu[0]) > EIG_TOL:
        raise NumericalError("smallest Laplacian eigenvalue differs from 0", float(mu[0]))
    return SpectralDecomposition(mu, V, "l2_normalized", None)
