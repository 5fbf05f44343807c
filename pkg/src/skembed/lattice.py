"""Discrete time-state lattice: specs, augmented states, and reachability.

States are integer tuples (k, x[, m][, i][, l]) where the optional running
max / running min / zero-visit coordinates are present exactly when the
corresponding feature is tracked.  All comparisons and barrier logic run
in integer index units; physical units (step_size, time_step) enter only
at output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import LatticeError, ResourceLimitError
from .measures import DiscreteMeasure

FEATURES = ("max", "min", "zero_visits")
DEFAULT_STATE_CAP = 2_000_000

SYMMETRIC = "symmetric"
DRIFT = "drift"
CUSTOM = "custom"


@dataclass(frozen=True)
class LatticeSpec:
    steps: int
    step_size: float = 1.0
    time_step: float | None = None  # defaults to step_size**2 (Brownian scaling)
    kernel: str = SYMMETRIC
    p_up: float | None = None  # custom kernel only
    tracked: frozenset = frozenset()
    start_support: tuple = (0,)

    def __post_init__(self):
        if self.steps < 0:
            raise LatticeError("horizon must be >= 0")
        if self.step_size <= 0:
            raise LatticeError("step_size must be > 0")
        if self.time_step is None:
            object.__setattr__(self, "time_step", self.step_size**2)
        if self.time_step <= 0:
            raise LatticeError("time_step must be > 0")
        if self.kernel not in (SYMMETRIC, DRIFT, CUSTOM):
            raise LatticeError(f"unknown kernel {self.kernel!r}")
        if self.kernel == SYMMETRIC:
            # Brownian scaling so x^2 - t is a martingale on the lattice
            if abs(self.time_step - self.step_size**2) > 1e-12 * max(1.0, self.step_size**2):
                raise LatticeError(
                    "symmetric kernel requires time_step == step_size**2 "
                    f"(got {self.time_step}, need {self.step_size ** 2})"
                )
        if self.kernel == CUSTOM:
            if self.p_up is None or not (0.0 <= self.p_up <= 1.0):
                raise LatticeError("custom kernel needs p_up in [0,1]")
        elif self.p_up is not None:
            raise LatticeError("p_up is only meaningful for the custom kernel")
        bad = set(self.tracked) - set(FEATURES)
        if bad:
            raise LatticeError(f"unknown tracked features: {sorted(bad)}")
        object.__setattr__(self, "tracked", frozenset(self.tracked))
        object.__setattr__(self, "start_support", tuple(int(v) for v in self.start_support))

    # branch list: (dx, probability), zero-probability branches dropped
    def branches(self):
        if self.kernel == SYMMETRIC:
            return ((1, 0.5), (-1, 0.5))
        if self.kernel == DRIFT:
            return ((1, 1.0),)
        out = []
        if self.p_up > 0.0:
            out.append((1, self.p_up))
        if self.p_up < 1.0:
            out.append((-1, 1.0 - self.p_up))
        return tuple(out)

    @property
    def has_max(self):
        return "max" in self.tracked

    @property
    def has_min(self):
        return "min" in self.tracked

    @property
    def has_zero(self):
        return "zero_visits" in self.tracked


@dataclass(frozen=True, order=True)
class AugmentedState:
    """Lattice node: time index, position index, optional tracked features."""

    k: int
    x: int
    m: int | None = None
    i: int | None = None
    l: int | None = None

    def key(self) -> str:
        parts = [str(self.k), str(self.x)]
        for f in (self.m, self.i, self.l):
            if f is not None:
                parts.append(str(f))
        return ":".join(parts)

    @classmethod
    def from_key(cls, key: str, spec: LatticeSpec) -> "AugmentedState":
        parts = [int(p) for p in key.split(":")]
        want = 2 + spec.has_max + spec.has_min + spec.has_zero
        if len(parts) != want:
            raise LatticeError(f"state key {key!r} has {len(parts)} fields, want {want}")
        it = iter(parts[2:])
        return cls(
            parts[0],
            parts[1],
            next(it) if spec.has_max else None,
            next(it) if spec.has_min else None,
            next(it) if spec.has_zero else None,
        )


def _start_tuple(spec: LatticeSpec, x: int):
    return (
        0,
        x,
        x if spec.has_max else None,
        x if spec.has_min else None,
        0 if spec.has_zero else None,
    )


def _advance(spec: LatticeSpec, t, dx):
    k, x, m, i, l = t
    nx = x + dx
    return (
        k + 1,
        nx,
        max(m, nx) if m is not None else None,
        min(i, nx) if i is not None else None,
        l + (1 if x == 0 else 0) if l is not None else None,
    )


def child_states(spec: LatticeSpec, s: AugmentedState):
    """Kernel branches out of s: list of (child AugmentedState, probability)."""
    _check_state_features(spec, s)
    if s.k >= spec.steps:
        return []
    t = (s.k, s.x, s.m, s.i, s.l)
    return [
        (AugmentedState(*_advance(spec, t, dx)), pr) for dx, pr in spec.branches()
    ]


def _check_state_features(spec, s):
    if (s.m is not None) != spec.has_max or (s.i is not None) != spec.has_min or (
        s.l is not None
    ) != spec.has_zero:
        raise LatticeError(f"state {s} does not match tracked features {set(spec.tracked)}")


def path_prefix_state(spec: LatticeSpec, prefix) -> AugmentedState:
    """Augmented state of a path prefix (list of value indices, start first)."""
    if not prefix:
        raise LatticeError("empty prefix")
    steps = {dx for dx, _ in spec.branches()}
    t = _start_tuple(spec, int(prefix[0]))
    for a, b in zip(prefix[:-1], prefix[1:]):
        if b - a not in steps:
            raise LatticeError(f"step {a}->{b} not in kernel support {sorted(steps)}")
        t = _advance(spec, t, b - a)
    if t[0] > spec.steps:
        raise LatticeError(f"prefix longer than horizon {spec.steps}")
    return AugmentedState(*t)


class StateGraph:
    """Reachable augmented states with the transition kernel as a DAG.

    States are topologically ordered by time index and sorted within each
    level, so every array in the object is deterministic.  Immutable after
    construction.
    """

    def __init__(self, spec, states, starts):
        self.spec = spec
        self.n_states = len(states)
        self._index = {t: j for j, t in enumerate(states)}
        self.k = np.array([t[0] for t in states], dtype=np.int64)
        self.x = np.array([t[1] for t in states], dtype=np.int64)
        self.max_idx = (
            np.array([t[2] for t in states], dtype=np.int64) if spec.has_max else None
        )
        self.min_idx = (
            np.array([t[3] for t in states], dtype=np.int64) if spec.has_min else None
        )
        self.zero_visits = (
            np.array([t[4] for t in states], dtype=np.int64) if spec.has_zero else None
        )
        self.start_indices = np.array([self._index[t] for t in starts], dtype=np.int64)
        self._start_by_level = {t[1]: self._index[t] for t in starts}
        self._states = states
        self._build_edges()

    def _build_edges(self):
        spec = self.spec
        src, dst, pr = [], [], []
        for j, t in enumerate(self._states):
            if t[0] >= spec.steps:
                continue
            for dx, p in spec.branches():
                child = _advance(spec, t, dx)
                ci = self._index.get(child)
                if ci is not None:
                    src.append(j)
                    dst.append(ci)
                    pr.append(p)
        self.edge_src = np.array(src, dtype=np.int64)
        self.edge_dst = np.array(dst, dtype=np.int64)
        self.edge_prob = np.array(pr, dtype=np.float64)
        # edges are emitted in source order; group boundaries per time level
        n_lev = spec.steps + 1
        counts = np.zeros(n_lev, dtype=np.int64)
        if len(src):
            np.add.at(counts, self.k[self.edge_src], 1)
        self.level_eptr = np.concatenate(([0], np.cumsum(counts)))
        # child CSR
        ptr = np.zeros(self.n_states + 1, dtype=np.int64)
        np.add.at(ptr, self.edge_src + 1, 1)
        self.child_ptr = np.cumsum(ptr)
        self.child_idx = self.edge_dst.copy()
        self.child_prob = self.edge_prob.copy()
        # parent CSR
        order = np.argsort(self.edge_dst, kind="stable")
        pptr = np.zeros(self.n_states + 1, dtype=np.int64)
        np.add.at(pptr, self.edge_dst + 1, 1)
        self.parent_ptr = np.cumsum(pptr)
        self.parent_idx = self.edge_src[order]
        self.parent_prob = self.edge_prob[order]

    # -- views ----------------------------------------------------------------

    @property
    def horizon(self):
        return self.spec.steps

    @cached_property
    def terminal_mask(self):
        return self.k == self.spec.steps

    def state(self, j) -> AugmentedState:
        return AugmentedState(*self._states[j])

    def key_of(self, j) -> str:
        return self.state(j).key()

    def index_of(self, s: AugmentedState) -> int:
        t = (s.k, s.x, s.m, s.i, s.l)
        if t not in self._index:
            raise LatticeError(f"state {s.key()} is not reachable")
        return self._index[t]

    def start_of_level(self, v: int) -> int:
        if v not in self._start_by_level:
            raise LatticeError(f"no start state at level {v}")
        return self._start_by_level[v]

    def feature(self, name):
        arr = {"max": self.max_idx, "min": self.min_idx, "zero_visits": self.zero_visits}[
            name
        ]
        return arr

    def children(self, j):
        sl = slice(self.child_ptr[j], self.child_ptr[j + 1])
        return list(zip(self.child_idx[sl].tolist(), self.child_prob[sl].tolist()))

    def check_kernel_sums(self, tol=1e-12):
        """Transition probabilities out of every non-terminal state sum to 1."""
        out = np.zeros(self.n_states)
        np.add.at(out, self.edge_src, self.edge_prob)
        nonterm = ~self.terminal_mask
        return bool(np.all(np.abs(out[nonterm] - 1.0) <= tol))


def enumerate_reachable(
    spec: LatticeSpec, lam: DiscreteMeasure, cap: int = DEFAULT_STATE_CAP
) -> StateGraph:
    """Every state with positive arrival probability under free evolution.

    The start law must sit on spec.start_support.  Raises ResourceLimitError
    instead of truncating when the state count would exceed ``cap``.
    """
    support = set(spec.start_support)
    for v, _ in lam.atoms:
        if v not in support:
            raise LatticeError(
                f"start atom at level {v} is outside start_support {sorted(support)}"
            )
    starts = [_start_tuple(spec, v) for v, _ in lam.atoms]
    frontier = dict.fromkeys(starts)
    levels = [sorted(frontier)]
    total = len(frontier)
    for _ in range(spec.steps):
        nxt = {}
        for t in frontier:
            for dx, _ in spec.branches():
                nxt[_advance(spec, t, dx)] = None
        total += len(nxt)
        if total > cap:
            raise ResourceLimitError(
                f"reachable state count exceeds cap {cap}; raise the cap explicitly"
            )
        frontier = nxt
        levels.append(sorted(frontier))
    states = [t for lev in levels for t in lev]
    return StateGraph(spec, states, starts)
