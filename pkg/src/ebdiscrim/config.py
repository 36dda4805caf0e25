"""Run configuration: a flat ``key = value`` text file, overridable from the CLI.

Lists are whitespace separated. Example::

    L = 4
    K = 50
    estimands = discr:1,0 discr:4,0 odds:4,0:4
    alphas = 0.05 0.01
    kappa_source = bootstrap
    B = 200
    seed = 20240101

All randomness derives from ``seed``: each subsystem takes its own child of
``numpy.random.SeedSequence(seed)``, ``simulate`` child 0 and ``bootstrap`` child 1.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import ValidationError

SUBSYSTEMS = ("simulate", "bootstrap")


def subsystem_seed(seed: int, name: str) -> int:
    child = np.random.SeedSequence(seed).spawn(len(SUBSYSTEMS))[SUBSYSTEMS.index(name)]
    return int(child.generate_state(1, dtype=np.uint32)[0])


@dataclass
class RunConfig:
    L: int = 4
    K: int = 50
    k_sweep: tuple = ()
    reference_K: int | None = None
    estimands: tuple = ("discr:1,0",)
    alphas: tuple = (0.05,)
    kappa_source: str = "bootstrap"
    bootstrap: str = "parametric-proj"
    B: int = 200
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    solver_tol: float = 1e-8
    constraint: str = "slack"
    direction: str = "lower"
    kappa: float | None = None
    kappas: tuple = ()
    n: int = 1000
    mixture: tuple = ()
    data: str | None = None
    out: str | None = None
    fbar_out: str | None = None
    replicates: str | None = None
    fref: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.L < 1:
            raise ValidationError("L must be >= 1")
        if self.K < 2 or any(k < 2 for k in self.k_sweep):
            raise ValidationError("grid sizes must be >= 2")
        if self.reference_K is not None and self.reference_K < 2:
            raise ValidationError("reference_K must be >= 2")
        if not all(0 < a < 1 for a in self.alphas):
            raise ValidationError("alphas must lie in (0, 1)")
        if self.B < 1:
            raise ValidationError("B must be >= 1")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if not self.solver_tol > 0:
            raise ValidationError("solver_tol must be positive")
        if self.bootstrap != "parametric-proj":
            raise ValidationError(f"unsupported bootstrap scheme {self.bootstrap!r}")
        if self.constraint not in ("exact", "empirical", "projected", "slack"):
            raise ValidationError(f"unknown constraint {self.constraint!r}")
        if self.direction not in ("lower", "upper"):
            raise ValidationError(f"unknown direction {self.direction!r}")
        if self.kappa is not None and self.kappa < 0:
            raise ValidationError("kappa must be nonnegative")
        ks = self.kappa_source
        if not (ks in ("bootstrap", "chi2") or ks.startswith("fixed:")):
            raise ValidationError(f"kappa_source must be bootstrap, chi2 or fixed:<v>, got {ks!r}")
        if ks.startswith("fixed:"):
            try:
                v = float(ks.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad fixed kappa in {ks!r}")
            if v < 0:
                raise ValidationError("fixed kappa must be nonnegative")

    @property
    def grid_sizes(self) -> tuple:
        return tuple(self.k_sweep) or (self.K,)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = " ".join(_fmt(x) for x in v)
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
        return cls.from_mapping(raw, **overrides)

    @classmethod
    def from_mapping(cls, raw: dict, **overrides) -> "RunConfig":
        types = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in types:
                raise ValidationError(f"unknown config key {key!r}")
            kwargs[key] = _parse(key, value, types[key])
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValidationError(str(exc))

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_INT_KEYS = {"L", "K", "reference_K", "B", "seed", "threads", "n"}
_FLOAT_KEYS = {"solver_tol", "kappa"}
_INT_TUPLES = {"k_sweep"}
_FLOAT_TUPLES = {"alphas"}
_STR_TUPLES = {"estimands", "kappas", "mixture"}


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse(key: str, value: str, f):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _INT_TUPLES:
            return tuple(int(v) for v in value.split())
        if key in _FLOAT_TUPLES:
            return tuple(float(v) for v in value.split())
        if key in _STR_TUPLES:
            return tuple(value.split())
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {value!r}")
    return value
