"""Bivariate binomial likelihood, latent grids and the mixture-marginal map.

Callback patterns ``z = (c_a, c_b)`` are always enumerated lexicographically,
``(0, 0), (0, 1), ..., (0, L), (1, 0), ..., (L, L)``, so pattern ``(c_a, c_b)``
sits at row ``c_a * (L + 1) + c_b`` of every pattern-indexed vector.
Grid points are row-major over the axis grid: point ``i * K + j`` is
``(x_i, x_j)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .exceptions import DomainError

# above this many trials, binomial coefficients are evaluated in log-space
_DIRECT_MAX_L = 20


@dataclass(frozen=True)
class ExperimentDesign:
    """``L`` applications per group per job."""

    L: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise DomainError(f"L must be a positive integer, got {self.L!r}")
        object.__setattr__(self, "L", int(self.L))

    @property
    def pattern_count(self) -> int:
        return (self.L + 1) ** 2

    @cached_property
    def patterns(self) -> list[tuple[int, int]]:
        r = range(self.L + 1)
        return [(ca, cb) for ca in r for cb in r]

    def index(self, z) -> int:
        ca, cb = check_pattern(z, self)
        return ca * (self.L + 1) + cb


def check_pattern(z, design: ExperimentDesign) -> tuple[int, int]:
    try:
        ca, cb = (int(v) for v in z)
    except (TypeError, ValueError):
        raise DomainError(f"callback pattern must be a pair of integers, got {z!r}")
    if not (0 <= ca <= design.L and 0 <= cb <= design.L):
        raise DomainError(f"pattern {(ca, cb)} outside [0, {design.L}]^2")
    return ca, cb


@dataclass(frozen=True, eq=False)
class Grid:
    """Finite support ``D_K`` for discretized mixing distributions.

    ``points`` has shape ``(K**2, 2)``; column 0 is ``p_a``, column 1 ``p_b``.
    Equality and hashing go through ``K`` since every grid is produced by
    :func:`build_grid`.
    """

    K: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.K == other.K

    def __hash__(self):
        return hash(("Grid", self.K))

    def __len__(self):
        return self.points.shape[0]

    @property
    def pa(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def pb(self) -> np.ndarray:
        return self.points[:, 1]

    def index(self, i: int, j: int) -> int:
        """Flat index of the point ``(axis[i], axis[j])``."""
        return i * self.K + j

    def nearest(self, theta) -> int:
        """Flat index of the grid point closest to ``theta``."""
        d = np.sum((self.points - np.asarray(theta, dtype=float)) ** 2, axis=1)
        return int(np.argmin(d))


def build_grid(K: int) -> Grid:
    """Product grid of ``K`` equally spaced points per axis, endpoints included."""
    if int(K) != K or K < 2:
        raise DomainError(f"K must be an integer >= 2, got {K!r}")
    K = int(K)
    axis = np.linspace(0.0, 1.0, K)
    pa, pb = np.meshgrid(axis, axis, indexing="ij")
    return Grid(K, np.column_stack([pa.ravel(), pb.ravel()]))


def binom_pmf(c: int, L: int, p: float) -> float:
    """``C(L, c) p^c (1 - p)^(L - c)`` with ``0^0 = 1``."""
    if int(L) != L or L < 0:
        raise DomainError(f"L must be a nonnegative integer, got {L!r}")
    if int(c) != c or not 0 <= c <= L:
        raise DomainError(f"c must be an integer in [0, {L}], got {c!r}")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    c, L = int(c), int(L)
    if L <= _DIRECT_MAX_L:
        return math.comb(L, c) * p**c * (1.0 - p) ** (L - c)
    return float(binom_pmf_matrix(L, np.array([p]))[c, 0])


def binom_pmf_matrix(L: int, p) -> np.ndarray:
    """Matrix of shape ``(L + 1, len(p))`` with entry ``[c, j] = P(Bin(L, p_j) = c)``."""
    p = np.asarray(p, dtype=float).ravel()
    if np.any((p < 0) | (p > 1)):
        raise DomainError("probabilities must lie in [0, 1]")
    c = np.arange(L + 1)[:, None]
    if L <= _DIRECT_MAX_L:
        coef = np.array([math.comb(L, k) for k in range(L + 1)], dtype=float)[:, None]
        return coef * np.power(p, c) * np.power(1.0 - p, L - c)
    logc = gammaln(L + 1) - gammaln(c + 1) - gammaln(L - c + 1)
    return np.exp(logc + xlogy(c, p) + xlog1py(L - c, -p))


def likelihood(z, theta, design: ExperimentDesign) -> float:
    """Bivariate binomial probability ``p(z | theta)``."""
    ca, cb = check_pattern(z, design)
    pa, pb = theta
    return binom_pmf(ca, design.L, pa) * binom_pmf(cb, design.L, pb)


@dataclass(frozen=True, eq=False)
class LikelihoodMatrix:
    """The linear map ``pi -> f``: row ``z``, column ``l`` holds ``p(z | theta_l)``."""

    entries: np.ndarray
    design: ExperimentDesign
    grid: Grid

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def row(self, z) -> np.ndarray:
        return self.entries[self.design.index(z)]


def pattern_likelihoods(design: ExperimentDesign, grid: Grid) -> np.ndarray:
    Ba = binom_pmf_matrix(design.L, grid.pa)
    Bb = binom_pmf_matrix(design.L, grid.pb)
    return (Ba[:, None, :] * Bb[None, :, :]).reshape(design.pattern_count, len(grid))


def likelihood_matrix(grid: Grid, design: ExperimentDesign) -> LikelihoodMatrix:
    entries = pattern_likelihoods(design, grid)
    entries.setflags(write=False)
    return LikelihoodMatrix(entries, design, grid)


def check_weights(pi, size: int | None = None, tol: float = 1e-9) -> np.ndarray:
    """Validate a mixing-weight vector on the probability simplex."""
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1:
        raise DomainError("mixture weights must be a vector")
    if size is not None and pi.shape[0] != size:
        raise DomainError(f"expected {size} mixture weights, got {pi.shape[0]}")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > tol:
        raise DomainError("mixture weights must be nonnegative and sum to 1")
    return pi


def point_mass(grid: Grid, theta) -> np.ndarray:
    """Weights of a Dirac mass at the grid point nearest ``theta``."""
    pi = np.zeros(len(grid))
    pi[grid.nearest(theta)] = 1.0
    return pi


def marginal(pi, A: LikelihoodMatrix) -> np.ndarray:
    """Marginal pmf ``f = A pi`` over callback patterns."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (A.shape[1],):
        raise DomainError(f"weights of shape {pi.shape} do not match {A.shape[1]} grid points")
    return A.entries @ pi
