"""Shape-constrained GMM: the J-functional, projection onto mixture marginals,
and a parametric bootstrap of the minimized criterion."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import conic
from .conic import Status
from .exceptions import DomainError, SolverError
from .ingest import Dataset, empirical_pmf
from .model import LikelihoodMatrix

log = logging.getLogger(__name__)

# tolerated share of failed bootstrap replicates
MAX_FAILED_SHARE = 0.01


def default_weighting(fbar, n: int) -> np.ndarray:
    """Clipped inverse multinomial variance, ``diag(1 / max(f(1 - f), 1/(4n)))``."""
    if n < 1:
        raise DomainError("n must be positive")
    fbar = np.asarray(fbar, dtype=float)
    var = np.maximum(fbar * (1.0 - fbar), 1.0 / (4 * n))
    return np.diag(1.0 / var)


def check_weighting(W, m: int | None = None, tol: float = 1e-10) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DomainError("weighting matrix must be square")
    if m is not None and W.shape[0] != m:
        raise DomainError(f"weighting matrix must be {m}x{m}, got {W.shape}")
    if not np.allclose(W, W.T, atol=tol, rtol=0):
        raise DomainError("weighting matrix must be symmetric")
    if np.linalg.eigvalsh((W + W.T) / 2).min() < -tol:
        raise DomainError("weighting matrix must be positive semidefinite")
    return W


def weighting_root(W) -> np.ndarray:
    """A matrix ``R`` with ``R'R = W`` (diagonal fast path, else eigendecomposition)."""
    W = np.asarray(W, dtype=float)
    d = np.diag(W)
    if np.count_nonzero(W - np.diag(d)) == 0:
        return np.diag(np.sqrt(np.maximum(d, 0.0)))
    lam, V = np.linalg.eigh((W + W.T) / 2)
    return np.sqrt(np.maximum(lam, 0.0))[:, None] * V.T


def j_stat(f, fbar, W, n: int) -> float:
    """``n (f - fbar)' W (f - fbar)``."""
    r = np.asarray(f, dtype=float) - np.asarray(fbar, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != (r.size, r.size):
        raise DomainError(f"dimension mismatch: residual {r.shape}, W {W.shape}")
    return float(n * (r @ W @ r))


@dataclass
class GmmFit:
    W: np.ndarray
    fbar: np.ndarray
    n: int
    pi_proj: np.ndarray | None
    f_proj: np.ndarray | None
    J_opt: float
    status: Status
    diagnostics: str = ""

    @property
    def ok(self) -> bool:
        return self.status.ok

    def require_ok(self) -> "GmmFit":
        if not self.ok:
            raise SolverError(f"projection failed: {self.diagnostics}")
        return self


def _clean_simplex(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def project(fbar, A: LikelihoodMatrix, W, n: int) -> GmmFit:
    """Minimize ``J_n(A pi, fbar)`` over the simplex.

    Stated as a conic QP in ``(pi, r)`` with ``r = sqrt(n) R (A pi - fbar)``,
    ``R'R = W``, minimizing ``|r|^2``. The returned ``pi_proj`` is clipped and
    renormalized, and ``f_proj``/``J_opt`` are recomputed from it so that
    ``f_proj = A pi_proj`` holds exactly.
    """
    fbar = np.asarray(fbar, dtype=float)
    M = A.entries
    m, d = M.shape
    if fbar.shape != (m,):
        raise DomainError(f"fbar has shape {fbar.shape}, expected ({m},)")
    W = check_weighting(W, m)
    S = math.sqrt(n) * weighting_root(W)
    k = S.shape[0]
    P = sparse.block_diag([sparse.csc_matrix((d, d)), 2.0 * sparse.identity(k)], format="csc")
    q = np.zeros(d + k)
    G = sparse.vstack([
        sparse.hstack([sparse.csc_matrix(S @ M), -sparse.identity(k)]),
        sparse.hstack([sparse.csc_matrix(np.ones((1, d))), sparse.csc_matrix((1, k))]),
        sparse.hstack([-sparse.identity(d), sparse.csc_matrix((d, k))]),
    ], format="csc")
    h = np.concatenate([S @ fbar, [1.0], np.zeros(d)])
    sol = conic.solve(P, q, G, h, conic.Cones(zero=k + 1, nonneg=d))
    if not sol.status.ok:
        return GmmFit(W, fbar, n, None, None, math.nan, Status.FAILED,
                      f"solver returned {sol.raw_status} after {sol.iterations} iterations")
    pi = _clean_simplex(sol.x[:d])
    f = M @ pi
    return GmmFit(W, fbar, n, pi, f, j_stat(f, fbar, W, n), sol.status,
                  f"{sol.raw_status} in {sol.iterations} iterations")


def fit_dataset(data: Dataset, A: LikelihoodMatrix, W=None) -> GmmFit:
    fbar = empirical_pmf(data)
    if W is None:
        W = default_weighting(fbar, data.n)
    return project(fbar, A, W, data.n)


@dataclass
class BootstrapResult:
    replicates: np.ndarray
    seed: int
    B: int
    n_failed: int = 0
    scheme: str = "parametric-proj"

    def __post_init__(self):
        self.replicates = np.asarray(self.replicates, dtype=float)


def _replicate(seed_seq, f_proj, A, n, W_fixed):
    rng = np.random.default_rng(seed_seq)
    fstar = rng.multinomial(n, f_proj) / n
    W = default_weighting(fstar, n) if W_fixed is None else W_fixed
    fit = project(fstar, A, W, n)
    return fit.J_opt if fit.ok else math.nan


def bootstrap_jopt(data: Dataset | None, fit: GmmFit, A: LikelihoodMatrix, n: int, B: int, seed: int,
                   threads: int = 1, reweight: bool = True) -> BootstrapResult:
    """Parametric bootstrap of ``J_opt`` under the projected marginal.

    Replicate ``b`` draws ``n`` patterns from ``f_proj`` with the generator seeded by
    child ``b`` of ``SeedSequence(seed)``, recomputes the weighting matrix from the
    resampled frequencies (unless ``reweight`` is false) and re-solves the
    projection. Output order follows the replicate index. ``data`` is accepted for
    call-site symmetry; only its size is used when given.
    """
    if B < 1:
        raise DomainError("B must be at least 1")
    fit.require_ok()
    if data is not None and data.n != n:
        raise DomainError(f"n={n} does not match dataset size {data.n}")
    f_proj = np.clip(fit.f_proj, 0.0, None)
    f_proj = f_proj / f_proj.sum()
    W_fixed = None if reweight else fit.W
    seeds = np.random.SeedSequence(seed).spawn(B)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            reps = list(ex.map(lambda s: _replicate(s, f_proj, A, n, W_fixed), seeds))
    else:
        reps = [_replicate(s, f_proj, A, n, W_fixed) for s in seeds]
    reps = np.array(reps)
    failed = int(np.isnan(reps).sum())
    if failed:
        log.warning("%d of %d bootstrap replicates failed", failed, B)
        if failed > MAX_FAILED_SHARE * B:
            raise SolverError(f"{failed} of {B} bootstrap replicates failed")
    return BootstrapResult(reps[~np.isnan(reps)], seed, B, failed)


def kappa_quantile(boot: BootstrapResult | np.ndarray, alpha: float) -> float:
    """Upper ``1 - alpha`` empirical quantile (inverted CDF, conservative order statistic)."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    reps = boot.replicates if isinstance(boot, BootstrapResult) else np.asarray(boot, dtype=float)
    if reps.size == 0:
        raise DomainError("no bootstrap replicates")
    srt = np.sort(reps)
    # smallest order statistic whose empirical CDF reaches 1 - alpha
    k = max(1, math.ceil((1.0 - alpha) * srt.size - 1e-9))
    return float(srt[k - 1])
