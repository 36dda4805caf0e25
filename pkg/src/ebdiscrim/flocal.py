"""Confidence intervals by F-localization.

A slack ``kappa_hat`` with ``P[J_n(f_G, fbar) <= kappa_hat] >= 1 - alpha`` defines a
confidence set for the marginal pmf; bounding any estimand over all mixtures
whose marginals fall in that set gives intervals with simultaneous coverage.
If no mixture reaches the set the model itself is rejected.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .bounds import LOWER, UPPER, SlackProgram
from .conic import Status
from .estimands import RatioEstimand
from .exceptions import DomainError, UndefinedEstimandError
from .gmm import BootstrapResult, GmmFit, kappa_quantile, project
from .model import LikelihoodMatrix

BOTH = "both"


@dataclass(frozen=True)
class FLocalization:
    kappa_hat: float
    alpha: float
    provenance: str  # "bootstrap", "chi2" or "user"
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.kappa_hat >= 0:
            raise DomainError(f"kappa_hat must be nonnegative, got {self.kappa_hat}")


def calibrate(boot: BootstrapResult, alpha: float) -> FLocalization:
    return FLocalization(kappa_quantile(boot, alpha), alpha, "bootstrap",
                         {"B": boot.B, "seed": boot.seed, "scheme": boot.scheme})


def chi2_localization(pattern_count: int, alpha: float) -> FLocalization:
    """Bootstrap-free heuristic: ``chi2`` quantile with ``(L+1)^2 - 1`` degrees of freedom."""
    df = pattern_count - 1
    return FLocalization(float(chi2.ppf(1 - alpha, df)), alpha, "chi2", {"df": df})


def fixed_localization(kappa: float, alpha: float) -> FLocalization:
    return FLocalization(float(kappa), alpha, "user")


@dataclass
class ConfidenceInterval:
    label: str
    lower: float | None
    upper: float | None
    alpha: float
    family_id: str
    lower_status: str = ""
    upper_status: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "estimand": self.label,
            "lower": self.lower,
            "upper": self.upper,
            "alpha": self.alpha,
            "family_id": self.family_id,
            "lower_status": self.lower_status,
            "upper_status": self.upper_status,
            "note": self.note,
        }


@dataclass
class CIFamily:
    intervals: list
    floc: FLocalization
    J_opt: float
    rejected: bool
    family_id: str

    @property
    def specification_test(self) -> dict:
        return {
            "rejected": self.rejected,
            "kappa_hat": self.floc.kappa_hat,
            "J_opt": self.J_opt,
        }


def family_id(floc: FLocalization, fbar, W, n: int) -> str:
    """Digest of everything the intervals of one family must share."""
    h = hashlib.sha256()
    h.update(np.float64(floc.kappa_hat).tobytes())
    h.update(np.float64(floc.alpha).tobytes())
    h.update(np.ascontiguousarray(fbar, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(W, dtype=np.float64).tobytes())
    h.update(int(n).to_bytes(8, "little"))
    return h.hexdigest()[:16]


def confidence_interval(floc: FLocalization, estimands, A: LikelihoodMatrix, fbar, W, n: int,
                        directions=None, jopt: float | None = None) -> CIFamily:
    """Simultaneous intervals for a family of estimands at one ``kappa_hat``.

    ``directions`` gives ``"lower"``, ``"upper"`` or ``"both"`` per estimand
    (default both). One-sided requests report the estimand's natural limit on
    the other side (0 below, ``upper_limit`` above).
    """
    estimands = list(estimands)
    if directions is None:
        directions = [BOTH] * len(estimands)
    if len(directions) != len(estimands):
        raise DomainError("one direction per estimand is required")
    fbar = np.asarray(fbar, dtype=float)
    W = np.asarray(W, dtype=float)
    fid = family_id(floc, fbar, W, n)
    if jopt is None:
        jopt = project(fbar, A, W, n).require_ok().J_opt
    intervals = []
    rejected = False
    for est, how in zip(estimands, directions):
        if how not in (LOWER, UPPER, BOTH):
            raise DomainError(f"unknown direction {how!r}")
        ci = ConfidenceInterval(est.label, 0.0, est.upper_limit, floc.alpha, fid)
        prog = SlackProgram(est, A, fbar, W, n)
        try:
            for side in (LOWER, UPPER):
                if how not in (side, BOTH):
                    setattr(ci, f"{side}_status", "not_requested")
                    continue
                res = prog.solve(floc.kappa_hat, side, jopt)
                setattr(ci, f"{side}_status", str(res.status))
                if res.status is Status.INFEASIBLE:
                    rejected = True
                    setattr(ci, side, None)
                elif not res.status.ok:
                    setattr(ci, side, None)
                else:
                    setattr(ci, side, res.value)
        except UndefinedEstimandError as exc:
            ci.lower = ci.upper = None
            ci.lower_status = ci.upper_status = "undefined"
            ci.note = str(exc)
        intervals.append(ci)
    if rejected:
        for ci in intervals:
            ci.lower = ci.upper = None
            ci.note = ci.note or "no mixture attains J_n <= kappa_hat: specification test rejects"
    return CIFamily(intervals, floc, jopt, rejected, fid)


def confidence_interval_from_fit(floc: FLocalization, estimands, A: LikelihoodMatrix, fit: GmmFit,
                                 directions=None) -> CIFamily:
    fit.require_ok()
    return confidence_interval(floc, estimands, A, fit.fbar, fit.W, fit.n, directions, fit.J_opt)
