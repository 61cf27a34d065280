"""Diffusion distances at integer times, including astronomically large ones.

The spectral path writes ``D_t`` as a Euclidean distance between embedded
points ``x -> (lambda_l^t psi_l(x))_l``. For the counting measure the
embedding is post-multiplied by a square root of the Gram matrix of the left
eigenvectors, so both measures reduce to plain Euclidean distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidParameterError, UnsupportedSizeError
from .markov_graph import MarkovChain
from .spectral import SpectralDecomposition

MEASURES = ("inverse_pi", "counting")
ORACLE_MAX_T = 2**16
EPS = np.finfo(np.float64).eps
RESOLUTION_ULPS = 16


def _check_time(t) -> int:
    if isinstance(t, float):
        if not t.is_integer():
            raise InvalidParameterError(f"diffusion time must be an integer, got {t}")
        t = int(t)
    t = int(t)
    if t < 0:
        raise InvalidParameterError(f"diffusion time must be nonnegative, got {t}")
    return t


def attenuation(eigenvalues: np.ndarray, t: int) -> np.ndarray:
    """``lambda^t`` for integer ``t`` evaluated in the log domain.

    Magnitudes are capped at 1 so rounding just above 1 cannot blow up at
    ``t ~ 1e16``; odd powers keep the sign of negative eigenvalues and
    underflow flushes to exactly zero.
    """
    t = _check_time(t)
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if t == 0:
        return np.ones_like(lam)
    mag = np.minimum(np.abs(lam), 1.0)
    with np.errstate(divide="ignore"):
        a = np.exp(float(t) * np.log(mag))
    if t % 2:
        a = np.where(lam < 0, -a, a)
    return a


@dataclass(frozen=True)
class DiffusionOperator:
    """Diffusion geometry of one decomposition at one time ``t``."""

    decomposition: SpectralDecomposition
    time: int
    measure: str = "inverse_pi"
    coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise InvalidParameterError(f"unknown measure {self.measure!r}")
        dec = self.decomposition
        if dec.normalization != "pi_normalized":
            raise InvalidParameterError("diffusion distances need a pi-normalized decomposition")
        t = _check_time(self.time)
        object.__setattr__(self, "time", t)
        a = attenuation(dec.eigenvalues, t)[1:]
        psi = dec.vectors[:, 1:]
        if self.measure == "inverse_pi":
            keep = a != 0
            coords = psi[:, keep] * a[keep]
        else:
            phi = psi * dec.stationary[:, None]
            gram = phi.T @ phi
            g, Q = np.linalg.eigh(gram)
            root = Q * np.sqrt(np.clip(g, 0.0, None))
            coords = (psi * a) @ root
        coords = np.ascontiguousarray(coords)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def resolution(self) -> float:
        """Absolute accuracy of a computed distance: coordinates are differenced
        in floating point, so smaller distances are rounding noise."""
        if self.coords.size == 0:
            return 0.0
        return RESOLUTION_ULPS * EPS * float(np.sqrt((self.coords**2).sum(axis=1)).max())

    def distances_from(self, rows) -> np.ndarray:
        """``len(rows) x n`` block of diffusion distances."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        if self.coords.shape[1] == 0:
            return np.zeros((rows.size, self.n))
        d = cdist(self.coords[rows], self.coords)
        d[np.arange(rows.size), rows] = 0.0
        return d


def diffusion_distance(op: DiffusionOperator, i: int, j: int) -> float:
    if i == j:
        return 0.0
    diff = op.coords[i] - op.coords[j]
    return float(np.sqrt(diff @ diff))


def pairwise_diffusion(op: DiffusionOperator, subset=None) -> np.ndarray:
    """Symmetric matrix of diffusion distances over ``subset`` (default: all)."""
    idx = np.arange(op.n) if subset is None else np.asarray(subset, dtype=np.int64)
    X = op.coords[idx]
    if X.shape[1] == 0:
        return np.zeros((idx.size, idx.size))
    d = cdist(X, X)
    np.fill_diagonal(d, 0.0)
    return np.minimum(d, d.T)


def _measure_weights(chain: MarkovChain, measure: str) -> np.ndarray:
    if measure == "inverse_pi":
        return 1.0 / chain.stationary
    if measure == "counting":
        return np.ones(chain.n)
    raise InvalidParameterError(f"unknown measure {measure!r}")


def transition_power_explicit(chain: MarkovChain, t: int) -> np.ndarray:
    """``P^t`` by repeated squaring, for ``t <= 2^16``."""
    t = _check_time(t)
    if t > ORACLE_MAX_T:
        raise UnsupportedSizeError(f"explicit powering is limited to t <= {ORACLE_MAX_T}, got {t}")
    return np.linalg.matrix_power(chain.dense(), t)


def diffusion_distance_oracle(chain: MarkovChain, t: int, i: int, j: int,
                              measure: str = "inverse_pi") -> float:
    """Diffusion distance straight from the definition, via explicit ``P^t``."""
    Pt = transition_power_explicit(chain, t)
    nu = _measure_weights(chain, measure)
    diff = Pt[i] - Pt[j]
    return float(np.sqrt(np.sum(diff * diff * nu)))


def pairwise_diffusion_oracle(chain: MarkovChain, t: int, measure: str = "inverse_pi") -> np.ndarray:
    Pt = transition_power_explicit(chain, t)
    nu = np.sqrt(_measure_weights(chain, measure))
    d = cdist(Pt * nu, Pt * nu)
    np.fill_diagonal(d, 0.0)
    return d
