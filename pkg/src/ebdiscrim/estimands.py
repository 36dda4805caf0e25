"""Posterior estimands written as ratios of linear functionals of the mixing distribution.

Every estimand is ``N(G) / D(G)`` where ``N`` and ``D`` are linear in ``G``; on a grid
they reduce to coefficient vectors ``n_l``, ``d_l`` so that
``theta(pi) = (n . pi) / (d . pi)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import DomainError, UndefinedEstimandError
from .model import ExperimentDesign, Grid, binom_pmf_matrix, check_pattern, pattern_likelihoods

KINDS = ("discr", "neq", "logit", "odds", "pdiscr")


@dataclass(frozen=True, eq=False)
class RatioEstimand:
    """Coefficient representation of ``N(G;z) / D(G;z)`` on a grid.

    ``posterior`` marks estimands whose denominator is the pattern likelihood
    ``p(z | theta)``, i.e. ``D(G;z) = f_G(z)``; these admit the linearized LP
    under exact-marginal constraints. ``upper_limit`` is the largest value the
    estimand can take (1 for probabilities, ``inf`` for odds).
    """

    numerator: np.ndarray
    denominator: np.ndarray
    label: str
    z: tuple[int, int] | None = None
    posterior: bool = False
    upper_limit: float = 1.0

    def __post_init__(self):
        num = np.array(self.numerator, dtype=float)
        den = np.array(self.denominator, dtype=float)
        if num.shape != den.shape or num.ndim != 1:
            raise DomainError("numerator and denominator must be vectors of equal length")
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    def __len__(self):
        return self.numerator.shape[0]

    def swapped(self) -> "RatioEstimand":
        """Reciprocal estimand ``D / N``."""
        return RatioEstimand(self.denominator, self.numerator, f"1/({self.label})", self.z,
                             False, np.inf)


@dataclass(frozen=True)
class OddsRatioSpec:
    z: tuple[int, int]
    L_prime: int

    def __post_init__(self):
        if int(self.L_prime) != self.L_prime or self.L_prime < 1:
            raise DomainError(f"L_prime must be a positive integer, got {self.L_prime!r}")


def _zlabel(z):
    return f"{z[0]},{z[1]}"


@lru_cache(maxsize=64)
def _likelihood_cols(design: ExperimentDesign, grid: Grid) -> np.ndarray:
    return pattern_likelihoods(design, grid)


def _posterior(h: np.ndarray, z, grid: Grid, design: ExperimentDesign, label: str) -> RatioEstimand:
    z = check_pattern(z, design)
    pz = _likelihood_cols(design, grid)[design.index(z)]
    return RatioEstimand(h * pz, pz, label, z, posterior=True, upper_limit=float(np.max(h, initial=0.0)))


def discr_estimand(z, grid: Grid, design: ExperimentDesign) -> RatioEstimand:
    """Posterior probability ``P[p_a > p_b | Z = z]``."""
    h = (grid.pa > grid.pb).astype(float)
    return _posterior(h, z, grid, design, f"discr({_zlabel(z)})")


def neq_estimand(z, grid: Grid, design: ExperimentDesign) -> RatioEstimand:
    """Posterior probability ``P[p_a != p_b | Z = z]``."""
    h = (grid.pa != grid.pb).astype(float)
    return _posterior(h, z, grid, design, f"neq({_zlabel(z)})")


def logit_contrast(pa, pb) -> np.ndarray:
    """``Lambda(logit(p_a) - logit(p_b))`` extended to the closed unit square.

    Algebraically this is ``p_a (1 - p_b) / (p_a (1 - p_b) + p_b (1 - p_a))``, which
    already gives the one-sided limits at the boundary; the remaining ``0/0``
    cases (``p_a = p_b`` at a shared endpoint) are set to 1/2.
    """
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    num = pa * (1.0 - pb)
    den = num + pb * (1.0 - pa)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.5)
    return out


def logit_estimand(z, grid: Grid, design: ExperimentDesign) -> RatioEstimand:
    h = logit_contrast(grid.pa, grid.pb)
    return _posterior(h, z, grid, design, f"logit({_zlabel(z)})")


def win_probabilities(L_prime: int, pa, pb) -> tuple[np.ndarray, np.ndarray]:
    """``P[C'_a > C'_b]`` and ``P[C'_a < C'_b]`` for independent ``Bin(L', p)`` draws."""
    Ba = binom_pmf_matrix(L_prime, pa)
    Bb = binom_pmf_matrix(L_prime, pb)
    # strict upper tails: tail[c] = P(C > c)
    tail_a = np.cumsum(Ba[::-1], axis=0)[::-1][1:]
    tail_b = np.cumsum(Bb[::-1], axis=0)[::-1][1:]
    greater = np.sum(Bb[:-1] * tail_a, axis=0)
    less = np.sum(Ba[:-1] * tail_b, axis=0)
    return greater, less


def odds_estimand(spec: OddsRatioSpec, grid: Grid, design: ExperimentDesign) -> RatioEstimand:
    """Posterior callback odds ratio for a counterfactual replication with ``L'`` applications."""
    z = check_pattern(spec.z, design)
    pz = _likelihood_cols(design, grid)[design.index(z)]
    greater, less = win_probabilities(spec.L_prime, grid.pa, grid.pb)
    return RatioEstimand(greater * pz, less * pz, f"odds({_zlabel(z)};L'={spec.L_prime})", z,
                         posterior=False, upper_limit=np.inf)


def pdiscr_estimand(grid: Grid, design: ExperimentDesign) -> RatioEstimand:
    """Unconditional share ``P[p_a > p_b]`` (denominator identically one)."""
    h = (grid.pa > grid.pb).astype(float)
    return RatioEstimand(h, np.ones(len(grid)), "pdiscr", None, posterior=False, upper_limit=1.0)


@lru_cache(maxsize=256)
def make_estimand(kind: str, z, grid: Grid, design: ExperimentDesign, L_prime: int | None = None) -> RatioEstimand:
    """Build (and cache) an estimand by name; ``z`` is ignored for ``pdiscr``."""
    if kind == "discr":
        return discr_estimand(z, grid, design)
    if kind == "neq":
        return neq_estimand(z, grid, design)
    if kind == "logit":
        return logit_estimand(z, grid, design)
    if kind == "odds":
        if L_prime is None:
            raise DomainError("odds estimand needs L_prime")
        return odds_estimand(OddsRatioSpec(tuple(z), L_prime), grid, design)
    if kind == "pdiscr":
        return pdiscr_estimand(grid, design)
    raise DomainError(f"unknown estimand kind {kind!r}; expected one of {KINDS}")


def ratio_value(num: float, den: float) -> float:
    if den > 0:
        return num / den
    if num > 0:
        return np.inf
    raise UndefinedEstimandError("estimand is 0/0: conditioning event has probability zero")


def evaluate(est: RatioEstimand, pi) -> float:
    """``(n . pi) / (d . pi)``; ``inf`` for ``x/0`` with ``x > 0``, error for ``0/0``."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != est.numerator.shape:
        raise DomainError(f"weights of shape {pi.shape} do not match estimand of length {len(est)}")
    return ratio_value(float(est.numerator @ pi), float(est.denominator @ pi))


def odds_limit(pi, z, grid: Grid, design: ExperimentDesign) -> float:
    """Large-``L'`` limit of the posterior callback odds ratio.

    ``(P[=|z]/2 + P[>|z]) / (P[=|z]/2 + P[<|z])`` with posterior probabilities
    of the events ``p_a = p_b``, ``p_a > p_b`` and ``p_a < p_b``.

    The formula assumes ``P[C'_a > C'_b | theta] -> 1/2`` on the diagonal, which
    fails at the degenerate corners ``(0, 0)`` and ``(1, 1)`` where both counts
    are deterministic. Those corners only carry likelihood for ``z = (0, 0)``
    and ``z = (L, L)`` respectively.
    """
    pi = np.asarray(pi, dtype=float)
    pz = _likelihood_cols(design, grid)[design.index(z)]
    w = pz * pi
    fz = w.sum()
    if fz <= 0:
        raise UndefinedEstimandError(f"f(z) = 0 for z = {tuple(z)}")
    eq = w[grid.pa == grid.pb].sum() / fz
    gt = w[grid.pa > grid.pb].sum() / fz
    lt = w[grid.pa < grid.pb].sum() / fz
    return ratio_value(eq / 2 + gt, eq / 2 + lt)
