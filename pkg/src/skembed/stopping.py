"""Randomized stopping times in Markovian (augmented-state) representation.

A rule is a per-state probability p of stopping on arrival, conditional on
not having stopped yet.  Arrival and stopped masses follow by one forward
pass over the DAG; everything downstream (laws, moments, conditionals,
Monte Carlo) reads those arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import SkembedError
from .lattice import AugmentedState, LatticeSpec, StateGraph
from .measures import DiscreteMeasure


class RandomizedStoppingTime:
    """Stopping rule p plus derived arrival/stopped masses on a StateGraph."""

    def __init__(self, graph: StateGraph, lam: DiscreteMeasure, p: np.ndarray):
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (graph.n_states,):
            raise SkembedError("stop probabilities must cover every reachable state")
        if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
            j = int(np.argmax(np.abs(p - 0.5)))
            raise SkembedError(f"stop probability out of [0,1] at state {graph.key_of(j)}")
        self.graph = graph
        self.lam = lam
        self.p = np.clip(p, 0.0, 1.0)
        self._propagate()
        term = graph.terminal_mask & (self.arrival > 1e-12)
        if np.any(self.p[term] < 1.0 - 1e-12):
            j = int(np.nonzero(term & (self.p < 1.0 - 1e-12))[0][0])
            raise SkembedError(
                f"terminal state {graph.key_of(j)} carries mass but p < 1"
            )

    def _propagate(self):
        g = self.graph
        a = np.zeros(g.n_states)
        for v, w in self.lam.atoms:
            a[g.start_of_level(v)] += w
        cont = np.zeros(g.n_states)
        _kernels.propagate(
            g.level_eptr, g.edge_src, g.edge_dst, g.edge_prob, a, self.p, a, cont
        )
        # terminal states never continue
        cont[g.terminal_mask] = 0.0
        self.arrival = a
        self.continuing = cont
        self.stopped = a - cont
        np.clip(self.stopped, 0.0, None, out=self.stopped)

    # -- laws and moments ------------------------------------------------------

    def pushforward_law(self) -> DiscreteMeasure:
        """Law of the position at stopping."""
        g = self.graph
        w = {}
        for j in np.nonzero(self.stopped > 0.0)[0]:
            v = int(g.x[j])
            w[v] = w.get(v, 0.0) + float(self.stopped[j])
        total = sum(w.values())
        return DiscreteMeasure.from_pairs((v, wt / total) for v, wt in sorted(w.items()))

    def expected_time(self) -> float:
        """E[tau] in physical time units."""
        return float(np.dot(self.stopped, self.graph.k) * self.graph.spec.time_step)

    def expected_cost(self, cost) -> float:
        return float(np.dot(self.stopped, cost.values(self.graph)))

    def stopped_law_at(self, k: int) -> DiscreteMeasure:
        """Law of position under 'stop by the rule or at time k, whichever first'."""
        g = self.graph
        if not 0 <= k <= g.horizon:
            raise SkembedError(f"time index {k} outside [0, {g.horizon}]")
        w = {}
        early = (g.k < k) & (self.stopped > 0.0)
        for j in np.nonzero(early)[0]:
            w[int(g.x[j])] = w.get(int(g.x[j]), 0.0) + float(self.stopped[j])
        atk = g.k == k
        for j in np.nonzero(atk & (self.arrival > 0.0))[0]:
            w[int(g.x[j])] = w.get(int(g.x[j]), 0.0) + float(self.arrival[j])
        return DiscreteMeasure.from_pairs(sorted(w.items()))

    # -- survival ---------------------------------------------------------------

    @cached_property
    def free_arrival(self) -> np.ndarray:
        """Arrival mass of the never-stopping rule on the same graph."""
        g = self.graph
        a = np.zeros(g.n_states)
        for v, w in self.lam.atoms:
            a[g.start_of_level(v)] += w
        cont = np.zeros(g.n_states)
        _kernels.propagate(
            g.level_eptr,
            g.edge_src,
            g.edge_dst,
            g.edge_prob,
            a,
            np.zeros(g.n_states),
            a,
            cont,
        )
        return a

    def survival(self) -> np.ndarray:
        """H(state): probability of not yet being stopped on arrival.

        For the augmented-state representation this is the arrival mass
        relative to the never-stopping arrival mass of the same history
        class.
        """
        free = self.free_arrival
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(free > 0.0, self.arrival / free, 0.0)
        return np.clip(h, 0.0, 1.0)

    def last_stop_time_through(self, tol: float = 1e-9) -> np.ndarray:
        """Per state: latest time index at which mass flowing through the
        state is eventually stopped (its own stop included); -1 where no
        mass stops through the state.  Backward pass over the realized flow.
        """
        g = self.graph
        last = np.where(self.stopped > tol, g.k, -1)
        order = np.argsort(-g.k, kind="stable")
        for j in order:
            if self.continuing[j] <= tol:
                continue
            for t in range(g.child_ptr[j], g.child_ptr[j + 1]):
                c = g.child_idx[t]
                if last[c] > last[j]:
                    last[j] = last[c]
        return last

    # -- conditionals -------------------------------------------------------------

    def conditional(self, s: AugmentedState) -> "RandomizedStoppingTime":
        """Stopping rule conditioned on arriving unstopped at s.

        Returns a rule on the sub-lattice rooted at s (time re-based to 0,
        features carried over in absolute coordinates).  When the survival
        probability at s vanishes the instant-stop convention applies.
        """
        g = self.graph
        j = g.index_of(s)
        spec = g.spec
        sub_spec = LatticeSpec(
            steps=spec.steps - s.k,
            step_size=spec.step_size,
            time_step=spec.time_step,
            kernel=spec.kernel,
            p_up=spec.p_up,
            tracked=spec.tracked,
            start_support=(s.x,),
        )
        sub = _enumerate_from(sub_spec, s)
        h = self.survival()[j]
        p_sub = np.ones(sub.n_states)
        if h > 0.0:
            for jj in range(sub.n_states):
                t = sub._states[jj]
                abs_t = (t[0] + s.k,) + t[1:]
                orig = g._index.get(abs_t)
                p_sub[jj] = self.p[orig] if orig is not None else 1.0
            p_sub[sub.terminal_mask] = 1.0
        return RandomizedStoppingTime(sub, DiscreteMeasure.point(s.x), p_sub)


def _enumerate_from(spec: LatticeSpec, s: AugmentedState) -> StateGraph:
    """Reachability from a single augmented start state (features seeded)."""
    root = (
        0,
        s.x,
        s.m if spec.has_max else None,
        s.i if spec.has_min else None,
        s.l if spec.has_zero else None,
    )
    from .lattice import _advance

    frontier = {root: None}
    levels = [[root]]
    for _ in range(spec.steps):
        nxt = {}
        for t in frontier:
            for dx, _ in spec.branches():
                nxt[_advance(spec, t, dx)] = None
        frontier = nxt
        levels.append(sorted(frontier))
    states = [t for lev in levels for t in lev]
    return StateGraph(spec, states, [root])


def from_stop_probabilities(
    graph: StateGraph, lam: DiscreteMeasure, p
) -> RandomizedStoppingTime:
    """Build a rule from a per-state stop-probability map or array."""
    if isinstance(p, dict):
        arr = np.full(graph.n_states, np.nan)
        for key, val in p.items():
            s = key if isinstance(key, AugmentedState) else AugmentedState.from_key(key, graph.spec)
            arr[graph.index_of(s)] = val
        if np.any(np.isnan(arr)):
            j = int(np.nonzero(np.isnan(arr))[0][0])
            raise SkembedError(f"stop probability missing for state {graph.key_of(j)}")
    else:
        arr = np.asarray(p, dtype=np.float64)
    return RandomizedStoppingTime(graph, lam, arr)


def stop_at_fixed_time(graph: StateGraph, lam: DiscreteMeasure, k: int):
    """Deterministic rule tau == k (stops all mass at time index k)."""
    p = np.zeros(graph.n_states)
    p[graph.k >= k] = 1.0
    p[graph.terminal_mask] = 1.0
    return RandomizedStoppingTime(graph, lam, p)


def to_json_obj(xi: RandomizedStoppingTime):
    g = xi.graph
    return {
        "stop_prob": [[g.key_of(j), float(xi.p[j])] for j in range(g.n_states)],
    }
