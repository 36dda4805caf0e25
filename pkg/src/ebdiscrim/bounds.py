"""Sharp bounds on ratio estimands over sets of discretized mixing distributions.

Four constraint types are supported:

* ``exact`` / ``empirical`` / ``projected``: ``A pi = f_ref`` for a reference pmf
  (true marginal, raw frequencies, or the GMM projection). These are LPs.
* ``slack``: ``J_n(A pi, fbar) <= kappa``. The ratio objective is homogenized
  (Charnes-Cooper: ``y = t pi``, ``D . y = 1``) and solved as one SOCP.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import conic
from .conic import Status
from .estimands import RatioEstimand
from .exceptions import DomainError, SolverError, UndefinedEstimandError
from .gmm import GmmFit, check_weighting, project, weighting_root
from .model import LikelihoodMatrix

log = logging.getLogger(__name__)

# lower limit on the homogenization variable t
T_MIN = 1e-10
MONOTONE_TOL = 1e-6
MAX_GAP_SHARE = 0.10
# relative kappa inflations tried when kappa is numerically equal to J_opt
BOUNDARY_STEPS = (1e-9, 1e-8, 1e-7)
# kappa within this relative distance of J_opt is treated as the boundary face
FACE_TOL = 1e-9

LOWER, UPPER = "lower", "upper"


def _check_direction(direction: str) -> int:
    if direction == LOWER:
        return 1
    if direction == UPPER:
        return -1
    raise DomainError(f"direction must be 'lower' or 'upper', got {direction!r}")


@dataclass(frozen=True, eq=False)
class Constraint:
    """Feasible-set description; build with the classmethods."""

    kind: str
    f: np.ndarray
    kappa: float | None = None
    W: np.ndarray | None = None
    n: int | None = None

    @classmethod
    def exact(cls, f):
        return cls("exact", np.asarray(f, dtype=float))

    @classmethod
    def empirical(cls, fbar):
        return cls("empirical", np.asarray(fbar, dtype=float))

    @classmethod
    def projected(cls, f_proj):
        return cls("projected", np.asarray(f_proj, dtype=float))

    @classmethod
    def slack(cls, kappa, fbar, W, n):
        if kappa < 0:
            raise DomainError(f"kappa must be nonnegative, got {kappa}")
        return cls("slack", np.asarray(fbar, dtype=float), float(kappa), np.asarray(W, dtype=float), int(n))


@dataclass(frozen=True)
class BoundQuery:
    estimand: RatioEstimand
    direction: str
    constraint: Constraint


@dataclass
class BoundResult:
    value: float
    status: Status
    direction: str
    label: str = ""
    active_kappa: float | None = None

    @property
    def feasible(self) -> bool:
        return self.status.ok

    def to_dict(self) -> dict:
        return {
            "estimand": self.label,
            "direction": self.direction,
            "value": self.value if self.feasible else None,
            "status": str(self.status),
            "kappa": self.active_kappa,
        }


@dataclass
class BoundCurve:
    kappas: np.ndarray
    values: np.ndarray
    statuses: list
    raw_values: np.ndarray
    direction: str
    label: str = ""
    max_violation: float = 0.0

    def rows(self):
        for k, v, s in zip(self.kappas, self.values, self.statuses):
            yield float(k), (float(v) if s.ok else None), str(s)


def _linprog(c, A_eq, b_eq):
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res


def _lp_status(res) -> Status:
    return {0: Status.OPTIMAL, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(res.status, Status.FAILED)


def _marginal_feasible(M: np.ndarray, f_ref: np.ndarray) -> Status:
    d = M.shape[1]
    res = _linprog(np.zeros(d), np.vstack([M, np.ones((1, d))]), np.append(f_ref, 1.0))
    return _lp_status(res)


def solve_linear_constraint(estimand: RatioEstimand, direction: str, f_ref, A: LikelihoodMatrix,
                            constraint_kind: str = "projected") -> BoundResult:
    """Bound ``estimand`` over ``{pi in simplex : A pi = f_ref}``.

    Posterior estimands use the linearized objective ``sum_l n_l pi_l / f_ref(z)``
    (the denominator is pinned by the constraint). Other ratio estimands use the
    homogenized LP in ``(y, t)``.
    """
    sign = _check_direction(direction)
    M = A.entries
    m, d = M.shape
    f_ref = np.asarray(f_ref, dtype=float)
    if f_ref.shape != (m,):
        raise DomainError(f"reference pmf has shape {f_ref.shape}, expected ({m},)")
    label = estimand.label
    if estimand.posterior:
        fz = f_ref[A.design.index(estimand.z)]
        if fz <= 0:
            raise UndefinedEstimandError(f"{label}: reference pmf assigns zero mass to z={estimand.z}")
        res = _linprog(sign * estimand.numerator / fz, np.vstack([M, np.ones((1, d))]), np.append(f_ref, 1.0))
        status = _lp_status(res)
        value = sign * res.fun if status.ok else math.nan
        return BoundResult(value, status, direction, label)

    # homogenized LP: variables (y, t), y = t * pi
    A_eq = np.block([
        [M, -f_ref[:, None]],
        [np.ones((1, d)), -np.ones((1, 1))],
        [estimand.denominator[None, :], np.zeros((1, 1))],
    ])
    b_eq = np.zeros(m + 2)
    b_eq[-1] = 1.0
    c = np.append(sign * estimand.numerator, 0.0)
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * d + [(T_MIN, None)], method="highs")
    status = _lp_status(res)
    if status is Status.UNBOUNDED:
        return BoundResult(-sign * math.inf, Status.OPTIMAL, direction, label)
    if status is Status.INFEASIBLE:
        if _marginal_feasible(M, f_ref).ok:
            raise UndefinedEstimandError(f"{label}: denominator vanishes on the whole feasible set")
        return BoundResult(math.nan, Status.INFEASIBLE, direction, label)
    value = sign * res.fun if status.ok else math.nan
    return BoundResult(value, status, direction, label)


class SlackProgram:
    """Charnes-Cooper SOCP for one estimand over ``{pi : J_n(A pi, fbar) <= kappa}``.

    Matrices depending only on the data are assembled once; :meth:`solve` patches
    in ``kappa`` and the objective sign.
    """

    def __init__(self, estimand: RatioEstimand, A: LikelihoodMatrix, fbar, W, n: int):
        M = A.entries
        m, d = M.shape
        if len(estimand) != d:
            raise DomainError("estimand and likelihood matrix use different grids")
        self.estimand, self.A = estimand, A
        # N/D is scale-free; normalizing keeps y = t * pi of order one
        scale = float(np.max(estimand.denominator))
        self._scale = scale if scale > 0 else 1.0
        self._num = estimand.numerator / self._scale
        self._den = estimand.denominator / self._scale
        self.fbar = np.asarray(fbar, dtype=float)
        self.W = check_weighting(W, m)
        self.n = int(n)
        self._fit = None
        S = math.sqrt(n) * weighting_root(self.W)
        self.d, self.k = d, S.shape[0]
        SM = S @ M
        Sf = S @ self.fbar
        eq = sparse.vstack([
            sparse.hstack([sparse.csc_matrix(np.ones((1, d))), sparse.csc_matrix([[-1.0]])]),
            sparse.hstack([sparse.csc_matrix(self._den[None, :]), sparse.csc_matrix((1, 1))]),
        ])
        nonneg = -sparse.identity(d + 1, format="csc")
        self._G_top = sparse.vstack([eq, nonneg], format="csc")
        self._soc_body = sparse.csc_matrix(-np.hstack([SM, -Sf[:, None]]))
        self._h = np.concatenate([[0.0, 1.0], np.zeros(d), [-T_MIN], np.zeros(1 + self.k)])

    def _solve_once(self, kappa: float, sign: int):
        d = self.d
        soc_head = sparse.csc_matrix(([-math.sqrt(kappa)], ([0], [d])), shape=(1, d + 1))
        G = sparse.vstack([self._G_top, soc_head, self._soc_body], format="csc")
        q = np.append(sign * self._num, 0.0)
        cones = conic.Cones(zero=2, nonneg=d + 1, soc=(self.k + 1,))
        return conic.solve(None, q, G, self._h, cones)

    def _max_denominator(self, kappa: float) -> float:
        """Largest ``D . pi`` over the feasible set (used to diagnose 0/0)."""
        d, k = self.d, self.k
        S = self._soc_body[:, :d]  # -sqrt(n) R M
        Sf = self._soc_body[:, d].toarray().ravel()  # sqrt(n) R fbar
        # variables pi; SOC: (sqrt(kappa), sqrt(n) R (M pi - fbar))
        G = sparse.vstack([
            sparse.csc_matrix(np.ones((1, d))),
            -sparse.identity(d, format="csc"),
            sparse.csc_matrix((1, d)),
            S,
        ], format="csc")
        h = np.concatenate([[1.0], np.zeros(d), [math.sqrt(kappa)], -Sf])
        sol = conic.solve(None, -self._den, G, h, conic.Cones(zero=1, nonneg=d, soc=(k + 1,)))
        return -sol.objective if sol.status.ok else math.nan

    def _projection(self):
        if self._fit is None:
            self._fit = project(self.fbar, self.A, self.W, self.n)
        return self._fit

    def solve(self, kappa: float, direction: str = LOWER, jopt: float | None = None) -> BoundResult:
        sign = _check_direction(direction)
        if kappa < 0:
            raise DomainError(f"kappa must be nonnegative, got {kappa}")
        label = self.estimand.label
        if jopt is None:
            fit = self._projection()
            if not fit.ok:
                return BoundResult(math.nan, Status.FAILED, direction, label, kappa)
            jopt = fit.J_opt
        if kappa < jopt - 1e-7 * (1 + jopt):
            return BoundResult(math.nan, Status.INFEASIBLE, direction, label, kappa)
        if kappa <= jopt * (1 + FACE_TOL) + 1e-12:
            # The cone has no interior here; the feasible set is the face A pi = f_proj
            # (J is strictly convex in f), so solve the reduced LP instead.
            fit = self._projection()
            if not fit.ok:
                return BoundResult(math.nan, Status.FAILED, direction, label, kappa)
            res = solve_linear_constraint(self.estimand, direction, fit.f_proj, self.A, "projected")
            return BoundResult(res.value, res.status, direction, label, kappa)

        sol = self._solve_once(kappa, sign)
        if sol.status.ok:
            return BoundResult(sign * sol.objective, sol.status, direction, label, kappa)
        if sol.status is Status.UNBOUNDED:
            return BoundResult(-sign * math.inf, Status.OPTIMAL, direction, label, kappa)
        if sol.status is not Status.INFEASIBLE:
            return BoundResult(math.nan, Status.FAILED, direction, label, kappa)

        # kappa is just above J_opt but the solver still sees an empty set: retry on
        # marginally enlarged sets, smallest first since the bound moves like sqrt(inflation)
        top = max(kappa, jopt * (1 + BOUNDARY_STEPS[-1]) + 1e-9)
        if self._max_denominator(top) <= 1e-14:
            raise UndefinedEstimandError(f"{label}: denominator vanishes on the whole feasible set")
        for rel in BOUNDARY_STEPS:
            k_eff = max(kappa, jopt * (1 + rel) + 1e-3 * rel)
            sol = self._solve_once(k_eff, sign)
            if sol.status.ok:
                return BoundResult(sign * sol.objective, Status.NEAR_OPTIMAL, direction, label, k_eff)
            if sol.status is Status.UNBOUNDED:
                return BoundResult(-sign * math.inf, Status.NEAR_OPTIMAL, direction, label, k_eff)
        return BoundResult(math.nan, Status.FAILED, direction, label, kappa)

def solve_slack(estimand: RatioEstimand, direction: str, A: LikelihoodMatrix, fbar, W, n: int,
                kappa: float, jopt: float | None = None) -> BoundResult:
    """Bound ``estimand`` over ``{pi in simplex : J_n(A pi, fbar) <= kappa}``.

    Returns an ``infeasible`` result when ``kappa < J_opt``; raises
    :class:`UndefinedEstimandError` when the denominator is zero throughout
    the feasible set.
    """
    return SlackProgram(estimand, A, fbar, W, n).solve(kappa, direction, jopt)


def solve(query: BoundQuery, A: LikelihoodMatrix, jopt: float | None = None) -> BoundResult:
    c = query.constraint
    if c.kind == "slack":
        return solve_slack(query.estimand, query.direction, A, c.f, c.W, c.n, c.kappa, jopt)
    if c.kind in ("exact", "empirical", "projected"):
        return solve_linear_constraint(query.estimand, query.direction, c.f, A, c.kind)
    raise DomainError(f"unknown constraint kind {c.kind!r}")


def default_kappa_grid(jopt: float, upper_ref: float, num: int = 40) -> np.ndarray:
    """``num`` log-spaced slacks from ``max(J_opt, 1e-3)`` to ``4 * upper_ref``."""
    lo = max(jopt, 1e-3)
    hi = max(4.0 * upper_ref, lo * 1.01)
    return np.geomspace(lo, hi, num)


def bound_curve(estimand: RatioEstimand, direction: str, A: LikelihoodMatrix, fbar, W, n: int,
                kappas, jopt: float | None = None) -> BoundCurve:
    """Bounds along an increasing slack grid, with monotone repair.

    Lower bounds are replaced by their running minimum (upper: running maximum);
    a warning is emitted when the solver violated monotonicity by more than
    ``MONOTONE_TOL``. Infeasible leading points stay marked as such; failed
    solves are gaps and more than 10% gaps is an error.
    """
    kappas = np.asarray(kappas, dtype=float)
    if kappas.ndim != 1 or np.any(np.diff(kappas) <= 0):
        raise DomainError("kappa grid must be strictly increasing")
    sign = _check_direction(direction)
    prog = SlackProgram(estimand, A, fbar, W, n)
    results = [prog.solve(k, direction, jopt) for k in kappas]
    statuses = [r.status for r in results]
    raw = np.array([r.value if r.status.ok else math.nan for r in results])
    gaps = sum(s is Status.FAILED for s in statuses)
    if gaps > MAX_GAP_SHARE * len(kappas):
        raise SolverError(f"{gaps} of {len(kappas)} curve points failed")

    values = raw.copy()
    best, worst = math.inf, 0.0
    for i, v in enumerate(raw):
        if math.isnan(v):
            continue
        sv = sign * v
        if sv > best:
            worst = max(worst, sv - best)
            values[i] = sign * best
        else:
            best = sv
    if worst > MONOTONE_TOL:
        warnings.warn(f"{estimand.label}: bound curve violated monotonicity by {worst:.3g}; repaired",
                      RuntimeWarning, stacklevel=2)
    return BoundCurve(kappas, values, statuses, raw, direction, estimand.label, worst)
