"""Correspondence-experiment datasets: CSV I/O, empirical frequencies, simulation.

The CSV schema has one row per job::

    job_id,callbacks_a,callbacks_b
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DomainError, ValidationError
from .model import ExperimentDesign, Grid, binom_pmf_matrix, check_weights

CSV_HEADER = ("job_id", "callbacks_a", "callbacks_b")


@dataclass(frozen=True)
class Dataset:
    design: ExperimentDesign
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        L = self.design.L
        clean = {}
        for (ca, cb), k in self.counts.items():
            if not (0 <= ca <= L and 0 <= cb <= L):
                raise ValidationError(f"pattern {(ca, cb)} outside [0, {L}]^2")
            if k < 0:
                raise ValidationError(f"negative count for pattern {(ca, cb)}")
            if k:
                clean[(int(ca), int(cb))] = int(k)
        if not clean:
            raise ValidationError("dataset contains no jobs")
        object.__setattr__(self, "counts", dict(sorted(clean.items())))

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def count_vector(self) -> np.ndarray:
        v = np.zeros(self.design.pattern_count, dtype=np.int64)
        for z, k in self.counts.items():
            v[self.design.index(z)] = k
        return v

    @classmethod
    def from_count_vector(cls, counts, design: ExperimentDesign) -> "Dataset":
        return cls(design, {z: int(k) for z, k in zip(design.patterns, counts) if k})

    def jobs(self):
        """Yield one ``(c_a, c_b)`` per job, in pattern order."""
        for z, k in self.counts.items():
            for _ in range(k):
                yield z


def load_csv(path, design: ExperimentDesign) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ValidationError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        counts: Counter = Counter()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                ca, cb = int(row[1]), int(row[2])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: callbacks must be integers")
            if not (0 <= ca <= design.L and 0 <= cb <= design.L):
                raise ValidationError(
                    f"{path}:{lineno} (job {row[0]}): callbacks ({ca},{cb}) outside [0,{design.L}]"
                )
            counts[(ca, cb)] += 1
    if not counts:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(design, dict(counts))


def write_csv(data: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, (ca, cb) in enumerate(data.jobs(), start=1):
            w.writerow((i, ca, cb))


def empirical_pmf(data: Dataset) -> np.ndarray:
    """Frequencies ``count(z) / n`` in the fixed pattern order."""
    return data.count_vector() / data.n


def simulate_from_support(support, weights, design: ExperimentDesign, n: int, rng) -> Dataset:
    """Draw ``theta_i`` from a discrete mixture, then ``Z_i`` from the bivariate binomial.

    ``rng`` is a seed or a :class:`numpy.random.Generator`.
    """
    if n < 1:
        raise DomainError("n must be positive")
    support = np.asarray(support, dtype=float).reshape(-1, 2)
    weights = check_weights(weights, size=support.shape[0])
    rng = np.random.default_rng(rng)
    draws = rng.multinomial(n, weights)
    idx = np.flatnonzero(draws)
    reps = draws[idx]
    pa = np.repeat(support[idx, 0], reps)
    pb = np.repeat(support[idx, 1], reps)
    ca = rng.binomial(design.L, pa)
    cb = rng.binomial(design.L, pb)
    counts = Counter(zip(ca.tolist(), cb.tolist()))
    return Dataset(design, dict(counts))


def simulate(pi, grid: Grid, design: ExperimentDesign, n: int, seed) -> Dataset:
    return simulate_from_support(grid.points, pi, design, n, seed)


def mixture_marginal(support, weights, design: ExperimentDesign) -> np.ndarray:
    """Marginal pmf of an arbitrary (off-grid) discrete mixture."""
    support = np.asarray(support, dtype=float).reshape(-1, 2)
    Ba = binom_pmf_matrix(design.L, support[:, 0])
    Bb = binom_pmf_matrix(design.L, support[:, 1])
    cols = (Ba[:, None, :] * Bb[None, :, :]).reshape(design.pattern_count, -1)
    return cols @ np.asarray(weights, dtype=float)
