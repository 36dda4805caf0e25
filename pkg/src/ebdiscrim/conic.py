"""Thin wrapper over the Clarabel interior-point solver.

Problems are stated in Clarabel's standard form::

    minimize    1/2 x'Px + q'x
    subject to  Gx + s = h,   s in K

where ``K`` is a product of zero, nonnegative and second-order cones.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import clarabel
import numpy as np
from scipy import sparse

FEAS_TOL = 1e-8
GAP_TOL = 1e-9
_tolerances = {"feas": FEAS_TOL, "gap": GAP_TOL}


def set_tolerances(feas: float = FEAS_TOL, gap: float | None = None) -> None:
    """Process-wide solver tolerances (the gap tolerance defaults to ``feas / 10``)."""
    _tolerances["feas"] = feas
    _tolerances["gap"] = feas / 10 if gap is None else gap


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    NEAR_OPTIMAL = "near_optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILED = "failed"

    def __str__(self):
        return self.value

    @property
    def ok(self) -> bool:
        return self in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


_STATUS_MAP = {
    "Solved": Status.OPTIMAL,
    "AlmostSolved": Status.NEAR_OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}


@dataclass
class ConicSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    raw_status: str
    iterations: int


@dataclass(frozen=True)
class Cones:
    """Cone block sizes, in order: zero, nonnegative, then second-order cones."""

    zero: int = 0
    nonneg: int = 0
    soc: tuple[int, ...] = ()

    def to_clarabel(self):
        out = []
        if self.zero:
            out.append(clarabel.ZeroConeT(self.zero))
        if self.nonneg:
            out.append(clarabel.NonnegativeConeT(self.nonneg))
        out.extend(clarabel.SecondOrderConeT(k) for k in self.soc)
        return out


def _settings(feas_tol: float, gap_tol: float):
    st = clarabel.DefaultSettings()
    st.verbose = os.environ.get("EBDISCRIM_SOLVER_VERBOSE", "") not in ("", "0")
    st.tol_feas = feas_tol
    st.tol_gap_abs = gap_tol
    st.tol_gap_rel = gap_tol
    st.tol_infeas_abs = feas_tol
    st.tol_infeas_rel = feas_tol
    st.max_iter = 200
    return st


def solve(P, q, G, h, cones: Cones, feas_tol: float | None = None, gap_tol: float | None = None) -> ConicSolution:
    feas_tol = _tolerances["feas"] if feas_tol is None else feas_tol
    gap_tol = _tolerances["gap"] if gap_tol is None else gap_tol
    nvar = len(q)
    P = sparse.csc_matrix((nvar, nvar)) if P is None else sparse.triu(sparse.csc_matrix(P)).tocsc()
    G = sparse.csc_matrix(G)
    solver = clarabel.DefaultSolver(P, np.asarray(q, float), G, np.asarray(h, float),
                                    cones.to_clarabel(), _settings(feas_tol, gap_tol))
    sol = solver.solve()
    raw = str(sol.status)
    status = _STATUS_MAP.get(raw, Status.FAILED)
    x = np.array(sol.x) if status.ok else None
    return ConicSolution(status, x, float(sol.obj_val), raw, int(sol.iterations))
