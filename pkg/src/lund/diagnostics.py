"""Near-reducibility diagnostics for the random-walk chain.

Stochastic complements, the limit ``S^inf`` of the completely reducible
approximation, the mesoscopic constants ``(delta, kappa, lambda_{K+1})`` and
numerical checks of the bounds relating them to ``P^t`` and to diffusion
distances. Everything here works on dense matrices and is meant for
desk-scale problems (a few thousand states at most).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .diffusion import ORACLE_MAX_T, _check_time
from .errors import InvalidParameterError, NumericalError, UnsupportedSizeError
from .markov_graph import MarkovChain, stationary_distribution
from .spectral import SpectralDecomposition, eig_markov

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-10
NEUMANN_MAX_N = 10
FULL_SPECTRUM_LIMIT = 4000
SUBSAMPLE_ROWS = 512
CONDUCTANCE_MAX_N = 20
TELESCOPE_MAX_T = 64


def default_t_grid() -> np.ndarray:
    """Integer times ``round(10^(j/2))`` for ``j = 0..32``."""
    return np.unique(np.round(10.0 ** np.arange(0, 16.5, 0.5)).astype(np.int64))


@dataclass(frozen=True)
class Partition:
    """Assignment of ``n`` states to ``K`` nonempty blocks."""

    assignment: np.ndarray
    blocks: tuple = field(repr=False)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise InvalidParameterError("partition labels must be a nonempty 1-D array")
        _, assignment = np.unique(labels, return_inverse=True)
        assignment = assignment.astype(np.int64)
        blocks = tuple(np.flatnonzero(assignment == k) for k in range(assignment.max() + 1))
        return cls(assignment, blocks)

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def K(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class ReducedChain:
    """Stochastic complements of the diagonal blocks and their limits.

    ``S`` and ``S_inf`` are ``n x n`` in the original state order.
    """

    partition: Partition
    complements: tuple = field(repr=False)
    block_stationary: tuple = field(repr=False)
    S: np.ndarray = field(repr=False)
    S_inf: np.ndarray = field(repr=False)


def _neumann_inverse(A: np.ndarray, tol: float = 1e-15, max_terms: int = 1_000_000) -> np.ndarray:
    """``(I - A)^{-1}`` as the partial sums of ``sum_j A^j``."""
    total = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for _ in range(max_terms):
        term = term @ A
        total += term
        if np.abs(term).max() < tol:
            return total
    raise NumericalError("Neumann series did not converge")


def is_primitive(S: np.ndarray) -> bool:
    """Irreducible and aperiodic on the support of ``S``."""
    S = np.asarray(S)
    m = S.shape[0]
    if m == 1:
        return bool(S[0, 0] > 0)
    support = S > 0
    ncomp, _ = connected_components(support, directed=True, connection="strong")
    if ncomp > 1:
        return False
    if support.diagonal().any():
        return True
    # period = gcd of level differences along edges of a BFS tree
    level = np.full(m, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(support[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u, v in zip(*np.nonzero(support)):
        g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g == 1


def stochastic_complement(chain: MarkovChain, partition: Partition, *,
                          neumann_check: bool | None = None) -> ReducedChain:
    """Stochastic complements ``S_kk = P_kk + P_k*(I - P_k)^{-1} P_*k``.

    The solve against ``I - P_k`` gives the probabilities of re-entering block
    ``k`` at each of its states; those rows sum to one exactly, and are
    renormalized to remove the rounding amplified by ``(I - P_k)`` being nearly
    singular when the blocks interact weakly.
    """
    if partition.n != chain.n:
        raise InvalidParameterError("partition size does not match the chain")
    P = chain.dense()
    n = chain.n
    if neumann_check is None:
        neumann_check = n <= NEUMANN_MAX_N
    complements, stationaries = [], []
    S = np.zeros((n, n))
    S_inf = np.zeros((n, n))
    for I in partition.blocks:
        R = np.setdiff1d(np.arange(n), I, assume_unique=True)
        Skk = P[np.ix_(I, I)].copy()
        out = P[np.ix_(I, R)]
        if R.size and out.any():
            A = np.eye(R.size) - P[np.ix_(R, R)]
            try:
                X = np.linalg.solve(A, P[np.ix_(R, I)])
            except np.linalg.LinAlgError as exc:
                raise NumericalError("I - P_k is singular; the chain is reducible across blocks") from exc
            if not np.isfinite(X).all():
                raise NumericalError("I - P_k is numerically singular")
            if neumann_check:
                Xn = _neumann_inverse(P[np.ix_(R, R)]) @ P[np.ix_(R, I)]
                err = np.abs(X - Xn).max()
                if err > 1e-8:
                    raise NumericalError("direct and Neumann complements disagree", err)
            X = np.clip(X, 0.0, None)
            rs = X.sum(axis=1)
            lost = rs <= 0
            if lost.any():
                # entry probabilities lost to cancellation; these states couple to
                # the block only through weights far below rounding, so any
                # distribution keeps S_kk exact to working precision
                log.debug("%d re-entry rows lost to rounding; using uniform rows", int(lost.sum()))
                X[lost] = 1.0 / I.size
                rs[lost] = 1.0
            X /= rs[:, None]
            Skk += out @ X
        rs = Skk.sum(axis=1)
        err = np.abs(rs - 1).max()
        if err > STOCHASTIC_TOL:
            raise NumericalError("stochastic complement is not row-stochastic", err)
        if not is_primitive(Skk):
            raise NumericalError("stochastic complement is not primitive")
        pik = stationary_distribution(Skk) if I.size > 1 else np.ones(1)
        resid = np.abs(pik @ Skk - pik).max()
        if resid > STOCHASTIC_TOL:
            raise NumericalError("block stationary vector is not a fixed point", resid)
        complements.append(Skk)
        stationaries.append(pik)
        S[np.ix_(I, I)] = Skk
        S_inf[np.ix_(I, I)] = pik[None, :]
    return ReducedChain(partition, tuple(complements), tuple(stationaries), S, S_inf)


def _block_spectrum(Skk: np.ndarray, pik: np.ndarray):
    """Eigenvalues and a diagonalizer ``(Z, Z^{-1})`` of one complement.

    Complements of reversible chains are reversible with respect to their
    stationary vector, so ``D^{1/2} S D^{-1/2}`` is symmetric and its
    orthogonal eigenvectors give a well-conditioned ``Z``.
    """
    s = np.sqrt(pik)
    A = s[:, None] * Skk / s[None, :]
    if np.abs(A - A.T).max() <= 1e-8 * max(1.0, np.abs(A).max()):
        w, V = eigh(0.5 * (A + A.T))
        return w, V / s[:, None], V.T * s[None, :]
    w, Z = np.linalg.eig(Skk)
    return w, Z, np.linalg.inv(Z)


def mesoscopic_constants(chain: MarkovChain, reduced: ReducedChain):
    """``(delta, kappa, lambda_K1)`` for the partition of ``reduced``.

    ``lambda_K1`` is the largest modulus among the non-unit eigenvalues of
    ``S``; with ``S`` primitive blockwise that is the largest modulus of each
    block's spectrum after its Perron root.
    """
    P = chain.dense()
    assign = reduced.partition.assignment
    off = assign[:, None] != assign[None, :]
    delta = 2.0 * float((P * off).sum(axis=1).max())
    z_norm = zinv_norm = 0.0
    lam = 0.0
    for Skk, pik in zip(reduced.complements, reduced.block_stationary):
        w, Z, Zinv = _block_spectrum(Skk, pik)
        z_norm = max(z_norm, float(np.abs(Z).sum(axis=1).max()))
        zinv_norm = max(zinv_norm, float(np.abs(Zinv).sum(axis=1).max()))
        if w.size > 1:
            mods = np.sort(np.abs(w))[::-1]
            lam = max(lam, float(mods[1]))
    return delta, z_norm * zinv_norm, min(lam, np.nextafter(1.0, 0.0))


def time_window(delta: float, kappa: float, lambda_K1: float, epsilon: float):
    """Open interval of ``t`` on which ``||P^t - S^inf||_inf < epsilon`` is guaranteed."""
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    if lambda_K1 <= 0:
        lo = 0.0
    else:
        lo = max(0.0, math.log(2 * kappa / epsilon) / math.log(1 / lambda_K1))
    hi = math.inf if delta == 0 else epsilon / (2 * delta)
    return lo, hi


def bound_curve(t_grid, delta: float, kappa: float, lambda_K1: float) -> np.ndarray:
    t = np.asarray(t_grid, dtype=np.float64)
    return t * delta + kappa * _power_scalar(lambda_K1, t)


def _power_scalar(lam: float, t: np.ndarray) -> np.ndarray:
    if lam == 0:
        return (t == 0).astype(np.float64)
    with np.errstate(under="ignore"):
        return np.exp(t * math.log(lam))


def _full_decomposition(chain: MarkovChain) -> SpectralDecomposition:
    return eig_markov(chain, chain.n, solver="dense")


def transition_rows(chain: MarkovChain, t: int, rows=None, decomposition=None) -> np.ndarray:
    """Rows of ``P^t``: explicit powering when cheap, the spectrum otherwise."""
    t = _check_time(t)
    if decomposition is None and t <= 64:
        Pt = np.linalg.matrix_power(chain.dense(), t)
        return Pt if rows is None else Pt[np.asarray(rows)]
    dec = decomposition or _full_decomposition(chain)
    if dec.M != chain.n:
        raise InvalidParameterError("spectral powers need the full decomposition")
    return dec.transition_power(t, rows)


def _gamma_rows(V: np.ndarray) -> np.ndarray:
    """Per-row balance factor; rows that vanish identically count as 1."""
    n = V.shape[1]
    A = np.abs(V)
    l2 = np.sqrt((A * A).sum(axis=1))
    out = np.ones(V.shape[0])
    ok = l2 > 0
    dev = A[ok] / l2[ok, None] - 1.0 / math.sqrt(n)
    out[ok] = 1.0 / (1.0 - 0.5 * (dev * dev).sum(axis=1))
    return out


def gamma_from_difference(D: np.ndarray) -> float:
    """Balance ``gamma`` of the rows of ``D = P^t - S^inf``."""
    D = np.atleast_2d(np.asarray(D, dtype=np.float64))
    n = D.shape[1]
    g = float(_gamma_rows(D).max())
    if not 1 - 1e-9 <= g <= math.sqrt(n) * (1 + 1e-9):
        raise NumericalError(f"balance factor {g} outside [1, sqrt(n)]")
    return min(max(g, 1.0), math.sqrt(n))


def gamma(chain: MarkovChain, reduced: ReducedChain, t: int, decomposition=None) -> float:
    """``max_x`` of the l1/l2 balance factor of row ``x`` of ``P^t - S^inf``."""
    Pt = transition_rows(chain, t, decomposition=decomposition)
    return gamma_from_difference(Pt - reduced.S_inf)


def _within_between(op_coords: np.ndarray, assignment: np.ndarray):
    d = cdist(op_coords, op_coords)
    same = assignment[:, None] == assignment[None, :]
    d_in = float(d[same].max()) if same.any() else 0.0
    d_btw = float(d[~same].min()) if (~same).any() else math.inf
    return d_in, d_btw


def within_between(chain: MarkovChain, partition: Partition, t: int, *,
                   measure: str = "inverse_pi", decomposition=None, rows=None):
    """``(D_t^in, D_t^btw)``: largest within-block and smallest between-block
    diffusion distance, optionally restricted to a subset of states."""
    from .diffusion import DiffusionOperator

    dec = decomposition or eig_markov(chain, chain.n, solver="dense")
    op = DiffusionOperator(dec, t, measure)
    idx = np.arange(chain.n) if rows is None else np.asarray(rows)
    return _within_between(op.coords[idx], partition.assignment[idx])


@dataclass(frozen=True)
class MesoscopicReport:
    delta: float
    kappa: float
    lambda_K1: float
    t_grid: np.ndarray
    bound_curve: np.ndarray
    empirical_curve: np.ndarray
    gamma_curve: np.ndarray
    dtin_curve: np.ndarray
    dtbtw_curve: np.ndarray
    lambda2_curve: np.ndarray | None = None
    empirical_is_lower_bound: bool = False
    measure: str = "inverse_pi"
    n: int = 0
    K: int = 0

    def time_window(self, epsilon: float):
        return time_window(self.delta, self.kappa, self.lambda_K1, epsilon)

    def to_json(self) -> dict:
        def clean(x):
            x = np.asarray(x, dtype=np.float64)
            return [float(v) if np.isfinite(v) else None for v in x.ravel()]

        return {
            "delta": self.delta,
            "kappa": self.kappa,
            "lambda_K1": self.lambda_K1,
            "one_minus_lambda_K1": 1.0 - self.lambda_K1,
            "n": self.n,
            "K": self.K,
            "measure": self.measure,
            "empirical_is_lower_bound": self.empirical_is_lower_bound,
            "t_grid": [int(t) for t in self.t_grid],
            "bound_curve": clean(self.bound_curve),
            "empirical_curve": clean(self.empirical_curve),
            "gamma_curve": clean(self.gamma_curve),
            "dtin_curve": clean(self.dtin_curve),
            "dtbtw_curve": clean(self.dtbtw_curve),
            "lambda2_curve": None if self.lambda2_curve is None else clean(self.lambda2_curve),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def mesoscopic_report(chain: MarkovChain, partition: Partition, t_grid=None, *,
                      subsample: int | None = None, measure: str = "inverse_pi",
                      reduced: ReducedChain | None = None,
                      decomposition: SpectralDecomposition | None = None,
                      seed: int = 0) -> MesoscopicReport:
    """Constants, bound and measured curves over ``t_grid``.

    ``P^t`` comes from the full spectral decomposition. Above
    ``FULL_SPECTRUM_LIMIT`` states (or when ``subsample`` is given) only a
    fixed random subset of rows enters the norms and distances, so the
    reported ``||P^t - S^inf||_inf`` is a lower bound.
    """
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid)
    if t_grid.size == 0:
        raise InvalidParameterError("t_grid is empty")
    t_grid = np.array([_check_time(t) for t in t_grid], dtype=np.int64)
    n = chain.n
    reduced = reduced or stochastic_complement(chain, partition)
    delta, kappa, lam = mesoscopic_constants(chain, reduced)
    dec = decomposition or _full_decomposition(chain)
    if dec.M != n:
        raise InvalidParameterError("the report needs the full decomposition")

    if subsample is None and n > FULL_SPECTRUM_LIMIT:
        subsample = SUBSAMPLE_ROWS
    rows = None
    if subsample is not None and subsample < n:
        rows = np.sort(np.random.default_rng(seed).choice(n, size=subsample, replace=False))
    S_inf = reduced.S_inf if rows is None else reduced.S_inf[rows]

    from .diffusion import DiffusionOperator

    emp = np.empty(t_grid.size)
    gam = np.empty(t_grid.size)
    d_in = np.empty(t_grid.size)
    d_btw = np.empty(t_grid.size)
    sub = np.arange(n) if rows is None else rows
    for i, t in enumerate(t_grid):
        Dt = dec.transition_power(int(t), rows) - S_inf
        emp[i] = np.abs(Dt).sum(axis=1).max()
        gam[i] = gamma_from_difference(Dt)
        op = DiffusionOperator(dec, int(t), measure)
        d_in[i], d_btw[i] = _within_between(op.coords[sub], partition.assignment[sub])
    log.info("delta=%.3e kappa=%.3e 1-lambda_K1=%.3e", delta, kappa, 1 - lam)
    return MesoscopicReport(
        delta=delta,
        kappa=kappa,
        lambda_K1=lam,
        t_grid=t_grid,
        bound_curve=bound_curve(t_grid, delta, kappa, lam),
        empirical_curve=emp,
        gamma_curve=gam,
        dtin_curve=d_in,
        dtbtw_curve=d_btw,
        lambda2_curve=_power_scalar(abs(float(dec.eigenvalues[1])) if n > 1 else 0.0,
                                    t_grid.astype(np.float64)) / chain.stationary.min(),
        empirical_is_lower_bound=rows is not None,
        measure=measure,
        n=n,
        K=partition.K,
    )


def relative_pointwise_distance(chain: MarkovChain, t: int, decomposition=None) -> float:
    """``Delta(t) = max_ij |P^t_ij - pi_j| / pi_j``."""
    t = _check_time(t)
    pi = chain.stationary
    if decomposition is None and t <= ORACLE_MAX_T:
        Pt = np.linalg.matrix_power(chain.dense(), t)
    else:
        Pt = transition_rows(chain, t, decomposition=decomposition or _full_decomposition(chain))
    return float((np.abs(Pt - pi[None, :]) / pi[None, :]).max())


def full_spectrum(chain: MarkovChain) -> np.ndarray:
    """All eigenvalues of a reversible ``P``, descending."""
    return _full_decomposition(chain).eigenvalues


def lambda_star(chain: MarkovChain) -> float:
    """``max(|lambda_2|, |lambda_n|)``."""
    w = full_spectrum(chain)
    return float(max(abs(w[1]), abs(w[-1]))) if w.size > 1 else 0.0


def conductance_bruteforce(chain: MarkovChain) -> float:
    """Exact ``min_S Phi(S)`` over nonempty proper subsets (``n <= 20``)."""
    n = chain.n
    if n > CONDUCTANCE_MAX_N:
        raise UnsupportedSizeError(f"brute-force conductance needs n <= {CONDUCTANCE_MAX_N}, got {n}")
    if n < 2:
        raise InvalidParameterError("conductance needs at least two states")
    pi = chain.stationary
    Q = pi[:, None] * chain.dense()
    bits = 1 << np.arange(n)
    best = math.inf
    # states n-1 stays outside S: each cut is visited once, via the side without it
    total = 1 << (n - 1)
    chunk = 1 << 14
    for start in range(1, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        m = ((codes[:, None] & bits[None, :]) > 0).astype(np.float64)
        flow = ((m @ Q) * (1.0 - m)).sum(axis=1)
        mass = m @ pi
        phi = flow / np.minimum(mass, 1.0 - mass)
        best = min(best, float(phi.min()))
    return best


@dataclass(frozen=True)
class DistanceBoundReport:
    t: int
    epsilon: float
    window: tuple
    in_window: bool
    sup_norm: float
    gamma: float
    d_in: float
    d_btw: float
    bound_in: float
    bound_btw: float
    holds_in: bool | None
    holds_btw: bool | None
    equal_blocks_bounds: tuple | None = None
    notice: str = ""
    # same argument with the exact l2 distance between disjointly supported
    # block equilibria, sqrt(|pi^k|^2 + |pi^l|^2), in place of 2 min |pi^k|
    bound_btw_l2: float = math.nan
    holds_btw_l2: bool | None = None

    @property
    def slack_in(self) -> float:
        return self.bound_in - self.d_in

    @property
    def slack_btw(self) -> float:
        return self.d_btw - self.bound_btw


def theorem11_verify(chain: MarkovChain, partition: Partition, t: int, epsilon: float, *,
                     reduced: ReducedChain | None = None, decomposition=None) -> DistanceBoundReport:
    """Counting-measure diffusion distances against the within/between bounds.

    Outside the guaranteed time window the bounds are still evaluated but not
    asserted (``holds_*`` is ``None``) and ``notice`` says why.
    """
    t = _check_time(t)
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    n = chain.n
    reduced = reduced or stochastic_complement(chain, partition)
    delta, kappa, lam = mesoscopic_constants(chain, reduced)
    lo, hi = time_window(delta, kappa, lam, epsilon)
    inside = lo < t < hi
    Pt = transition_rows(chain, t, decomposition=decomposition)
    Dt = Pt - reduced.S_inf
    sup = float(np.abs(Dt).sum(axis=1).max())
    g = gamma_from_difference(Dt)
    d_in, d_btw = _within_between(Pt, partition.assignment)
    err = 2 * epsilon * g / math.sqrt(n)
    s_norm = float(np.sqrt((reduced.S_inf**2).sum(axis=1)).min())
    b_in, b_btw = err, 2 * s_norm - err
    bn = np.array([np.sqrt(p @ p) for p in reduced.block_stationary])
    if bn.size > 1:
        two = np.sort(bn)[:2]
        b_l2 = float(np.sqrt(two @ two)) - err
    else:
        b_l2 = math.inf
    cor = None
    sizes = np.array([b.size for b in partition.blocks])
    if (sizes == sizes[0]).all() and all(np.allclose(p, 1.0 / p.size) for p in reduced.block_stationary):
        K = partition.K
        cor = (2 / math.sqrt(n) * epsilon * g, 2 / math.sqrt(n) * (math.sqrt(K) - epsilon * g))
    notice = ""
    if not inside:
        notice = f"t={t} outside the window ({lo:.4g}, {hi:.4g}) for epsilon={epsilon:g}; bounds not asserted"
        log.info(notice)
    tol = 1e-12
    return DistanceBoundReport(
        t=t,
        epsilon=float(epsilon),
        window=(lo, hi),
        in_window=inside,
        sup_norm=sup,
        gamma=g,
        d_in=d_in,
        d_btw=d_btw,
        bound_in=b_in,
        bound_btw=b_btw,
        holds_in=(d_in <= b_in + tol) if inside else None,
        holds_btw=(d_btw >= b_btw - tol) if inside else None,
        equal_blocks_bounds=cor,
        notice=notice,
        bound_btw_l2=b_l2,
        holds_btw_l2=(d_btw >= b_l2 - tol) if inside else None,
    )


def telescoping_residual(chain: MarkovChain, reduced: ReducedChain, t: int) -> float:
    """Max-norm gap between ``P^t - S^t`` and ``sum_i S^{t-i}(P - S)P^{i-1}``."""
    t = _check_time(t)
    if not 1 <= t <= TELESCOPE_MAX_T:
        raise InvalidParameterError(f"t must lie in 1..{TELESCOPE_MAX_T}")
    P = chain.dense()
    S = reduced.S
    S_pow = [np.eye(chain.n)]
    for _ in range(t):
        S_pow.append(S_pow[-1] @ S)
    diff = P - S
    rhs = np.zeros_like(P)
    P_prev = np.eye(chain.n)
    for i in range(1, t + 1):
        rhs += S_pow[t - i] @ diff @ P_prev
        P_prev = P_prev @ P
    lhs = P_prev - S_pow[t]
    return float(np.abs(lhs - rhs).max())


def telescoping_identity_check(chain: MarkovChain, reduced: ReducedChain, t: int) -> bool:
    return telescoping_residual(chain, reduced, t) <= 1e-10
