"""Finitely supported probability measures on integer lattice levels.

Atoms are (value index, weight) pairs; physical positions are index times
the lattice step size, applied only at output.  Convex order is decided
through potential functions, which is exact on finite supports.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import MeasureError
from .tolerances import DEFAULT

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: tuple  # ((value_index, weight), ...) sorted by value index

    def __post_init__(self):
        seen = set()
        total = 0.0
        for v, w in self.atoms:
            if int(v) != v:
                raise MeasureError(f"atom value {v!r} is not an integer lattice index")
            if v in seen:
                raise MeasureError(f"duplicate atom at level {v}")
            seen.add(v)
            if w < -WEIGHT_SUM_TOL:
                raise MeasureError(f"negative weight {w} at level {v}")
            total += w
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {total}, not 1")
        object.__setattr__(
            self,
            "atoms",
            tuple(sorted((int(v), float(w)) for v, w in self.atoms if w > 0.0)),
        )

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs):
        return cls(tuple((int(v), float(w)) for v, w in pairs))

    @classmethod
    def point(cls, v):
        """Dirac mass at level v."""
        return cls(((int(v), 1.0),))

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text) if isinstance(text, str) else text
        try:
            return cls.from_pairs(obj["atoms"])
        except (KeyError, TypeError) as exc:
            raise MeasureError(f"bad measure JSON: {exc}") from exc

    def to_json_obj(self):
        return {"atoms": [[v, w] for v, w in self.atoms]}

    # -- views ---------------------------------------------------------------

    @cached_property
    def levels(self):
        return np.array([v for v, _ in self.atoms], dtype=np.int64)

    @cached_property
    def weights(self):
        return np.array([w for _, w in self.atoms], dtype=np.float64)

    def weight(self, v) -> float:
        for lv, w in self.atoms:
            if lv == v:
                return w
        return 0.0

    @property
    def support(self):
        return frozenset(v for v, _ in self.atoms)

    def mean(self) -> float:
        return float(np.dot(self.levels, self.weights))


def moment(mu: DiscreteMeasure, p: int, step_size: float = 1.0) -> float:
    """p-th moment in physical units: sum (v * step)^p * w."""
    if p < 0:
        raise MeasureError("moment order must be >= 0")
    x = mu.levels.astype(np.float64) * step_size
    return float(np.dot(x**p, mu.weights))


def potential(mu: DiscreteMeasure, x: float) -> float:
    """U_mu(x) = -sum |x - y| mu(dy), in index units."""
    return float(-np.dot(np.abs(x - mu.levels), mu.weights))


def convex_order(lam: DiscreteMeasure, mu: DiscreteMeasure, tol=DEFAULT) -> bool:
    """True iff lam precedes mu in convex order.

    On finite supports this is equivalent to equal means together with
    U_lam >= U_mu at every atom of either measure.
    """
    if abs(lam.mean() - mu.mean()) > tol.mean_equality:
        return False
    grid = sorted(lam.support | mu.support)
    for x in grid:
        if potential(lam, x) < potential(mu, x) - tol.potential_slack:
            return False
    return True


def quantile_coupling(lam: DiscreteMeasure, mu: DiscreteMeasure):
    """Monotone (Hoeffding-Frechet) coupling of two discrete measures.

    Returns (rows, cols, matrix) with rows summing to lam and columns to mu.
    Built by sweeping both quantile functions in lockstep; independent of
    any LP machinery.
    """
    rows = [v for v, _ in lam.atoms]
    cols = [v for v, _ in mu.atoms]
    plan = np.zeros((len(rows), len(cols)))
    i = j = 0
    ri = lam.atoms[0][1]
    cj = mu.atoms[0][1]
    while True:
        m = min(ri, cj)
        plan[i, j] += m
        ri -= m
        cj -= m
        if ri <= 1e-15:
            i += 1
            if i == len(rows):
                break
            ri = lam.atoms[i][1]
        if cj <= 1e-15:
            j += 1
            if j == len(cols):
                break
            cj = mu.atoms[j][1]
    return rows, cols, plan
