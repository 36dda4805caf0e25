"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``bootstrap``, ``bound``, ``bound-curve``, ``ci``.
Every flag can also be given in a ``--config`` file (see :mod:`ebdiscrim.config`);
flags win over the file.

Exit codes: 0 success, 2 validation, 3 solver, 4 specification-test rejection, 5 I/O.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import conic
from .bounds import LOWER, UPPER, bound_curve, default_kappa_grid, solve_linear_constraint, solve_slack
from .config import RunConfig, subsystem_seed
from .estimands import KINDS, make_estimand
from .exceptions import DomainError, SolverError, UndefinedEstimandError, ValidationError
from .flocal import (BOTH, calibrate, chi2_localization, confidence_interval_from_fit,
                     fixed_localization)
from .gmm import BootstrapResult, GmmFit, bootstrap_jopt, fit_dataset, kappa_quantile
from .ingest import Dataset, empirical_pmf, load_csv, simulate_from_support, write_csv
from .jsonfmt import dumps, fmt_float
from .model import ExperimentDesign, build_grid, likelihood_matrix

log = logging.getLogger("ebdiscrim")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_REJECTED, EXIT_IO = 0, 2, 3, 4, 5

# one-sided lower bounds for probability estimands, two-sided for odds ratios
DEFAULT_DIRECTION = {"discr": LOWER, "neq": LOWER, "logit": LOWER, "pdiscr": LOWER, "odds": BOTH}


class SpecificationRejected(Exception):
    pass


@dataclass(frozen=True)
class EstimandClause:
    kind: str
    z: tuple | None
    L_prime: int | None
    direction: str

    def build(self, grid, design):
        return make_estimand(self.kind, self.z, grid, design, self.L_prime)

    @property
    def tag(self) -> str:
        s = self.kind
        if self.z is not None:
            s += f"_{self.z[0]}-{self.z[1]}"
        if self.L_prime is not None:
            s += f"_Lp{self.L_prime}"
        return s


def parse_clause(text: str, pattern: str | None = None, lprime: int | None = None) -> EstimandClause:
    """Parse ``KIND[:CA,CB[:LPRIME]][@lower|upper|both]``."""
    body, _, direction = text.partition("@")
    parts = body.split(":")
    kind = parts[0].strip()
    if kind not in KINDS:
        raise ValidationError(f"unknown estimand {kind!r}; expected one of {', '.join(KINDS)}")
    zt = parts[1] if len(parts) > 1 else pattern
    lp = parts[2] if len(parts) > 2 else lprime
    z = None
    if kind != "pdiscr":
        if zt is None:
            raise ValidationError(f"estimand {text!r} needs a pattern CA,CB")
        try:
            ca, cb = (int(v) for v in str(zt).split(","))
        except ValueError:
            raise ValidationError(f"bad pattern {zt!r}; expected CA,CB")
        z = (ca, cb)
    L_prime = None
    if kind == "odds":
        if lp is None:
            raise ValidationError("odds estimand needs L' (':LPRIME' or --lprime)")
        L_prime = int(lp)
        if L_prime < 1:
            raise ValidationError("L' must be >= 1")
    direction = direction or DEFAULT_DIRECTION[kind]
    if direction not in (LOWER, UPPER, BOTH):
        raise ValidationError(f"bad direction {direction!r}")
    return EstimandClause(kind, z, L_prime, direction)


def _clauses(cfg: RunConfig, pattern=None, lprime=None):
    out = [parse_clause(t, pattern, lprime) for t in cfg.estimands]
    for c in out:
        if c.z is not None and not all(0 <= v <= cfg.L for v in c.z):
            raise ValidationError(f"pattern {c.z} outside [0, {cfg.L}]")
    return out


def _parse_mixture(items) -> tuple[np.ndarray, np.ndarray]:
    pts, ws = [], []
    for item in items:
        try:
            pa, pb, w = (float(v) for v in item.split(","))
        except ValueError:
            raise ValidationError(f"mixture component {item!r} must be PA,PB,WEIGHT")
        if not (0 <= pa <= 1 and 0 <= pb <= 1) or w < 0:
            raise ValidationError(f"mixture component {item!r} out of range")
        pts.append((pa, pb))
        ws.append(w)
    if not pts or sum(ws) <= 0:
        raise ValidationError("mixture needs at least one component with positive weight")
    ws = np.array(ws) / sum(ws)
    return np.array(pts), ws


def _require_data(cfg: RunConfig) -> Dataset:
    if not cfg.data:
        raise ValidationError("no input data: pass --data PATH")
    return load_csv(cfg.data, ExperimentDesign(cfg.L))


def _write_text(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    return buf.getvalue()


def _fit_payload(fit: GmmFit, design: ExperimentDesign, K: int) -> dict:
    return {
        "L": design.L,
        "K": K,
        "n": fit.n,
        "patterns": [list(z) for z in design.patterns],
        "status": str(fit.status),
        "diagnostics": fit.diagnostics,
        "J_opt": fit.J_opt,
        "fbar": fit.fbar,
        "f_proj": fit.f_proj if fit.f_proj is not None else None,
        "W": fit.W,
    }


def _fit(cfg: RunConfig, data: Dataset, K: int):
    design = ExperimentDesign(cfg.L)
    A = likelihood_matrix(build_grid(K), design)
    fit = fit_dataset(data, A)
    if not fit.ok:
        raise SolverError(f"projection failed on K={K}: {fit.diagnostics}")
    return A, fit


def _load_replicates(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return np.array([float(r["J_opt"]) for r in rows])
    except (KeyError, ValueError):
        raise ValidationError(f"{path}: expected a replicate,J_opt CSV")


def _bootstrap(cfg: RunConfig, data: Dataset, A, fit: GmmFit) -> BootstrapResult:
    if cfg.replicates:
        reps = _load_replicates(cfg.replicates)
        return BootstrapResult(reps, cfg.seed, len(reps))
    ref_K = cfg.reference_K
    if ref_K is not None and ref_K != A.grid.K:
        A, fit = _fit(cfg, data, ref_K)
    boot = bootstrap_jopt(data, fit, A, data.n, cfg.B, subsystem_seed(cfg.seed, "bootstrap"),
                          threads=cfg.threads)
    boot.seed = cfg.seed
    return boot


# --- subcommands -------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> Dataset:
    pts, ws = _parse_mixture(cfg.mixture)
    data = simulate_from_support(pts, ws, ExperimentDesign(cfg.L), cfg.n, subsystem_seed(cfg.seed, "simulate"))
    if cfg.out in (None, "-"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("job_id", "callbacks_a", "callbacks_b"))
        for i, (ca, cb) in enumerate(data.jobs(), start=1):
            w.writerow((i, ca, cb))
        sys.stdout.write(buf.getvalue())
    else:
        write_csv(data, cfg.out)
    return data


def cmd_fit(cfg: RunConfig) -> dict:
    data = _require_data(cfg)
    design = ExperimentDesign(cfg.L)
    A = likelihood_matrix(build_grid(cfg.K), design)
    fit = fit_dataset(data, A)
    payload = _fit_payload(fit, design, cfg.K)
    _write_text(dumps(payload), cfg.out)
    if cfg.fbar_out:
        rows = [(ca, cb, float(f)) for (ca, cb), f in zip(design.patterns, fit.fbar)]
        Path(cfg.fbar_out).write_text(_csv_text(("c_a", "c_b", "fbar"), rows))
    if not fit.ok:
        raise SolverError(f"projection failed: {fit.diagnostics}")
    return payload


def cmd_bootstrap(cfg: RunConfig) -> dict:
    data = _require_data(cfg)
    A, fit = _fit(cfg, data, cfg.K)
    boot = _bootstrap(cfg, data, A, fit)
    summary = {
        "scheme": boot.scheme,
        "B": boot.B,
        "seed": cfg.seed,
        "n_failed": boot.n_failed,
        "J_opt": fit.J_opt,
        "kappa": {fmt_float(a): kappa_quantile(boot, a) for a in cfg.alphas},
    }
    rows = [(i, float(v)) for i, v in enumerate(boot.replicates)]
    csv_text = _csv_text(("replicate", "J_opt"), rows)
    if cfg.out in (None, "-"):
        sys.stdout.write(csv_text)
        sys.stderr.write(dumps(summary))
    else:
        Path(cfg.out).write_text(csv_text)
        sys.stdout.write(dumps(summary))
    return summary


def _load_pmf(path, design: ExperimentDesign) -> np.ndarray:
    f = np.zeros(design.pattern_count)
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                f[design.index((int(row["c_a"]), int(row["c_b"])))] = float(row[next(k for k in row if k not in ("c_a", "c_b"))])
            except (KeyError, ValueError, StopIteration, DomainError):
                raise ValidationError(f"{path}: expected c_a,c_b,<value> rows")
    if abs(f.sum() - 1) > 1e-9 or np.any(f < 0):
        raise ValidationError(f"{path}: not a probability mass function")
    return f


def _resolve_kappa(cfg: RunConfig, data, A, fit, alpha) -> tuple[float, str]:
    if cfg.kappa is not None:
        return cfg.kappa, "user"
    floc = _localization(cfg, data, A, fit, alpha)
    return floc.kappa_hat, floc.provenance


def cmd_bound(cfg: RunConfig) -> dict:
    data = _require_data(cfg)
    design = ExperimentDesign(cfg.L)
    A, fit = _fit(cfg, data, cfg.K)
    results = []
    kappa, prov = None, None
    for clause in _clauses(cfg):
        est = clause.build(A.grid, design)
        if cfg.constraint == "slack":
            if kappa is None:
                kappa, prov = _resolve_kappa(cfg, data, A, fit, cfg.alphas[0])
            res = solve_slack(est, cfg.direction, A, fit.fbar, fit.W, fit.n, kappa, fit.J_opt)
        else:
            f_ref = {"empirical": fit.fbar, "projected": fit.f_proj}.get(cfg.constraint)
            if cfg.constraint == "exact":
                if not cfg.fref:
                    raise ValidationError("constraint 'exact' needs --fref PATH")
                f_ref = _load_pmf(cfg.fref, design)
            res = solve_linear_constraint(est, cfg.direction, f_ref, A, cfg.constraint)
        d = res.to_dict()
        d["constraint"] = cfg.constraint
        results.append(d)
    payload = {"K": cfg.K, "J_opt": fit.J_opt, "kappa_source": prov, "bounds": results}
    _write_text(dumps(payload), cfg.out)
    return payload


def cmd_curve(cfg: RunConfig) -> list:
    """Bound-versus-slack CSVs, one per estimand and grid size."""
    data = _require_data(cfg)
    design = ExperimentDesign(cfg.L)
    out_dir = Path(cfg.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    clauses = _clauses(cfg)
    ks = cfg.grid_sizes
    explicit = [k for k in cfg.kappas if k != "jopt"]
    upper_ref = None
    if not cfg.kappas:
        ref_cfg = cfg.replace(reference_K=cfg.reference_K or ks[0])
        A0, fit0 = _fit(cfg, data, ref_cfg.reference_K)
        upper_ref = kappa_quantile(_bootstrap(ref_cfg, data, A0, fit0), 0.01)
    written = []
    for K in ks:
        A, fit = _fit(cfg, data, K)
        if cfg.kappas:
            grid = sorted({fit.J_opt if k == "jopt" else float(k) for k in cfg.kappas})
        else:
            grid = default_kappa_grid(fit.J_opt, upper_ref)
        for clause in clauses:
            est = clause.build(A.grid, design)
            direction = cfg.direction if clause.direction == BOTH else clause.direction
            curve = bound_curve(est, direction, A, fit.fbar, fit.W, fit.n, grid, fit.J_opt)
            path = out_dir / f"curve_{clause.tag}_{direction}_K{K}.csv"
            path.write_text(_csv_text(("kappa", "value", "status"), curve.rows()))
            written.append(str(path))
    for p in written:
        log.info("wrote %s", p)
    return written


def _localization(cfg: RunConfig, data, A, fit, alpha):
    src = cfg.kappa_source
    if src == "chi2":
        return chi2_localization(A.design.pattern_count, alpha)
    if src.startswith("fixed:"):
        return fixed_localization(float(src.split(":", 1)[1]), alpha)
    return calibrate(_bootstrap(cfg, data, A, fit), alpha)


def cmd_ci(cfg: RunConfig) -> dict:
    data = _require_data(cfg)
    design = ExperimentDesign(cfg.L)
    A, fit = _fit(cfg, data, cfg.K)
    clauses = _clauses(cfg)
    estimands = [c.build(A.grid, design) for c in clauses]
    directions = [c.direction for c in clauses]
    boot = None
    families = []
    for alpha in cfg.alphas:
        if cfg.kappa_source == "bootstrap":
            if boot is None:
                boot = _bootstrap(cfg, data, A, fit)
            floc = calibrate(boot, alpha)
        else:
            floc = _localization(cfg, data, A, fit, alpha)
        fam = confidence_interval_from_fit(floc, estimands, A, fit, directions)
        families.append({
            "alpha": alpha,
            "kappa_hat": floc.kappa_hat,
            "provenance": floc.provenance,
            "provenance_details": floc.details,
            "family_id": fam.family_id,
            "specification_test": fam.specification_test,
            "intervals": [ci.to_dict() for ci in fam.intervals],
        })
    payload = {"L": cfg.L, "K": cfg.K, "n": data.n, "J_opt": fit.J_opt, "families": families}
    _write_text(dumps(payload), cfg.out)
    if any(f["specification_test"]["rejected"] for f in families):
        raise SpecificationRejected("no mixture attains J_n <= kappa_hat; the model is rejected")
    return payload


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "bootstrap": cmd_bootstrap,
    "bound": cmd_bound,
    "bound-curve": cmd_curve,
    "ci": cmd_ci,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--data", help="input CSV (job_id,callbacks_a,callbacks_b)")
    common.add_argument("--out", help="output path ('-' for stdout; a directory for bound-curve)")
    common.add_argument("-L", "--L", dest="L", type=int, help="applications per group per job")
    common.add_argument("-K", "--K", dest="K", type=int, action="append",
                        help="grid points per axis (repeat for a K sweep in bound-curve)")
    common.add_argument("--reference-K", dest="reference_K", type=int,
                        help="grid used for the bootstrap (default: the analysis grid)")
    common.add_argument("--estimand", dest="estimands", action="append",
                        help="KIND[:CA,CB[:LPRIME]][@lower|upper|both], KIND in " + "|".join(KINDS))
    common.add_argument("--pattern", help="default pattern CA,CB for --estimand clauses")
    common.add_argument("--lprime", type=int, help="default L' for odds estimands")
    common.add_argument("--alpha", dest="alphas", type=float, action="append")
    common.add_argument("--kappa-source", dest="kappa_source", help="bootstrap | chi2 | fixed:<v>")
    common.add_argument("--bootstrap", choices=["parametric-proj"])
    common.add_argument("-B", "--B", dest="B", type=int, help="bootstrap replicates")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--solver-tol", dest="solver_tol", type=float)
    common.add_argument("--replicates", help="reuse a bootstrap replicate CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ebdiscrim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="simulate a dataset from a discrete mixture")
    s.add_argument("--n", type=int)
    s.add_argument("--mixture", nargs="+", help="components PA,PB,WEIGHT")
    f = sub.add_parser("fit", parents=[common], help="GMM projection; writes GmmFit JSON")
    f.add_argument("--fbar-out", dest="fbar_out")
    sub.add_parser("bootstrap", parents=[common], help="bootstrap J_opt; replicate CSV + kappa quantiles")
    b = sub.add_parser("bound", parents=[common], help="one bound per estimand as JSON")
    b.add_argument("--constraint", choices=["exact", "empirical", "projected", "slack"])
    b.add_argument("--direction", choices=[LOWER, UPPER])
    b.add_argument("--kappa", type=float)
    b.add_argument("--fref", help="c_a,c_b,f CSV for the exact constraint")
    c = sub.add_parser("bound-curve", parents=[common], help="kappa,value,status CSVs")
    c.add_argument("--direction", choices=[LOWER, UPPER])
    c.add_argument("--kappas", nargs="+", help="slack values; 'jopt' stands for J_opt")
    sub.add_parser("ci", parents=[common], help="F-localization confidence intervals as JSON")
    return p


def config_from_args(args) -> RunConfig:
    over = {k: v for k, v in vars(args).items()
            if k not in ("config", "command", "verbose", "pattern", "lprime") and v is not None}
    if "K" in over:
        ks = over.pop("K")
        if args.command == "bound-curve" and len(ks) > 1:
            over["k_sweep"] = tuple(ks)
            over["K"] = ks[0]
        else:
            over["K"] = ks[-1]
    for key in ("estimands", "alphas", "mixture", "kappas"):
        if key in over:
            over[key] = tuple(over[key])
    if args.config:
        cfg = RunConfig.load(args.config, **over)
    else:
        cfg = RunConfig(**over)
    if args.pattern or args.lprime:
        cfg = cfg.replace(estimands=tuple(
            _expand_defaults(t, args.pattern, args.lprime) for t in cfg.estimands))
    return cfg


def _expand_defaults(text, pattern, lprime) -> str:
    c = parse_clause(text, pattern, lprime)
    s = c.kind
    if c.z is not None:
        s += f":{c.z[0]},{c.z[1]}"
        if c.L_prime is not None:
            s += f":{c.L_prime}"
    return s + f"@{c.direction}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        conic.set_tolerances(cfg.solver_tol)
        COMMANDS[args.command](cfg)
    except SpecificationRejected as exc:
        print(f"ebdiscrim: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (ValidationError, DomainError, UndefinedEstimandError) as exc:
        print(f"ebdiscrim: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"ebdiscrim: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"ebdiscrim: I/O error{f' on {name}' if name else ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
