"""Barrier structures in phase space: extraction, hitting rules, uniqueness.

A solved embedding's stopped support, projected to the cost's phase space,
must be a barrier-type region: the closure of the stopped phase points
under the kind's order (forward in time for barrier, backward for inverse,
both glued at t0 for cave, upward in the running max for the max phase,
and so on).  Extraction validates this and fails loudly when the declared
structure is violated -- the structure is the theorem being tested, so no
silent repair is ever attempted.

On a lattice the closed/open barrier distinction collapses to one
threshold per level plus at most one fractional stopping probability (the
discrete counterpart of the independent randomization needed at atoms);
the horizon wall k = N is a forced stop outside the phase region.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BarrierKindError, SkembedError
from .lattice import LatticeSpec, enumerate_reachable
from .measures import DiscreteMeasure
from .stopping import RandomizedStoppingTime
from .tolerances import DEFAULT, Tolerances

_UP = "up"      # region = {coord >= min stopped coord at the level}
_DOWN = "down"  # region = {coord <= max stopped coord at the level}

_KIND_ORIENT = {
    "barrier": _UP,
    "inverse": _DOWN,
    "threshold-increasing": _DOWN,   # vallois-min: widen with L
    "threshold-decreasing": _UP,     # vallois-max: shrink with L
}


@dataclass
class PhaseBarrier:
    """Barrier region per level plus boundary randomization entries.

    ``thresholds`` encodes the closed region (one threshold per level, a
    pre/post pair for cave, an antichain of coordinate pairs for the
    two-coordinate phases).  ``boundary`` carries stopping probabilities at
    region-boundary phase points, keyed by (coords, time index): the
    discrete counterpart of the closed/open barrier gap, where independent
    randomization is allowed.  For (t,x) phases the boundary collapses to
    at most one fractional entry per level.
    """

    phase: str
    kind: str
    coord_name: str
    step_size: float
    time_step: float
    t0_index: float | None = None
    thresholds: dict = field(default_factory=dict)
    # level -> {state key: (coords, p)}: stopping probabilities at states
    # projecting onto region-boundary phase points
    boundary: dict = field(default_factory=dict)
    orientation: str = _UP

    def contains(self, level, coords):
        """Closed-region membership of a phase point at this level."""
        if level not in self.thresholds:
            return False
        th = self.thresholds[level]
        c = coords[0]
        if self.kind == "cave":
            pre, post = th
            return (pre is not None and c <= pre) or (post is not None and c >= post)
        if self.phase in ("(max,min)", "(min,max,x)"):
            if self.orientation == _DOWN:
                return any(c <= a and coords[1] <= b for a, b in th)
            return any(c >= a and coords[1] >= b for a, b in th)
        if self.orientation == _UP:
            return c >= th
        return c <= th

    def boundary_prob(self, level, state_key):
        rec = self.boundary.get(level)
        if rec is not None and state_key in rec:
            return rec[state_key][1]
        return None

    def fractional_levels(self):
        return {
            lv: {key: cp for key, cp in rec.items() if cp[1] < 1.0 - 1e-12}
            for lv, rec in self.boundary.items()
            if any(cp[1] < 1.0 - 1e-12 for cp in rec.values())
        }


_PHASE_COORD_NAME = {
    "(t,x)": "t",
    "(max,x)": "max",
    "(absmax,x)": "absmax",
    "(L,x)": "L",
    "(max,min)": "max,-min",
    "(min,max,x)": "max,-min",
}


def _phase_points(graph, cost, idx):
    coords = cost.coords(graph)
    cols = [graph.k[idx], graph.x[idx]] + [c[idx] for c in coords]
    return np.stack(cols, axis=1) if len(idx) else np.zeros((0, 2 + len(coords)), dtype=np.int64)


def extract_barrier(sol, problem, tol: Tolerances = DEFAULT) -> PhaseBarrier:
    """Project the stopped support to phase space and validate the kind.

    Raises BarrierKindError listing offending levels when the support is
    not a barrier of the declared kind (a theorem-violation detector).
    """
    xi = sol.xi
    graph = xi.graph
    cost = problem.cost.with_time_step(graph.spec.time_step)
    interior = graph.k < graph.horizon
    st_idx = np.nonzero((xi.stopped > tol.support) & interior)[0]
    go_idx = np.nonzero(xi.continuing > tol.support)[0]
    st = _phase_points(graph, cost, st_idx)
    go = _phase_points(graph, cost, go_idx)

    # region consistency: no going phase point strictly inside the closure
    pairs = _kernels.sg_scan(
        go, st, cost.sg_mode, cost.t0_index if cost.t0_index is not None else 0.0,
        graph.horizon,
    )
    if pairs:
        offenders = sorted({int(go[a][1]) for a, _ in pairs})
        raise BarrierKindError(
            f"{cost.name}: continuing mass strictly inside the {cost.kind} region "
            f"at level(s) {offenders}",
            offenders=offenders,
        )

    ncoord = st.shape[1] - 2
    thresholds = {}
    orientation = _KIND_ORIENT.get(cost.kind, _UP)
    if cost.phase == "(max,x)" or cost.phase == "(absmax,x)":
        orientation = _UP  # region closed upward in the running extreme
    if cost.phase == "(max,min)":
        orientation = _DOWN  # perkins: small ranges stop first
    if cost.phase == "(min,max,x)":
        orientation = _UP  # range maximizer: big ranges stop

    by_level = {}
    for row in st:
        by_level.setdefault(int(row[1]), []).append(tuple(int(v) for v in row[2:]))
    if cost.kind == "cave":
        t0 = cost.t0_index
        for lv, pts in by_level.items():
            pre = [c[0] for c in pts if c[0] <= t0]
            post = [c[0] for c in pts if c[0] >= t0]
            thresholds[lv] = (max(pre) if pre else None, min(post) if post else None)
    elif ncoord == 1:
        for lv, pts in by_level.items():
            cs = [c[0] for c in pts]
            thresholds[lv] = min(cs) if orientation == _UP else max(cs)
    else:
        for lv, pts in by_level.items():
            # prune dominated points so the stored antichain is minimal
            keep = []
            for c in sorted(set(pts)):
                dominated = any(
                    (c != o)
                    and (
                        (orientation == _DOWN and c[0] <= o[0] and c[1] <= o[1])
                        or (orientation == _UP and c[0] >= o[0] and c[1] >= o[1])
                    )
                    for o in pts
                )
                if not dominated:
                    keep.append(c)
            thresholds[lv] = tuple(keep)

    # boundary randomization: phase points whose arrivals are not uniformly
    # stopped get time-qualified entries.  Strict-interior points were
    # already required to be fully stopped by the scan above; boundary
    # points carry the independent randomization the theory allows there.
    arrived = np.nonzero((xi.arrival > tol.support) & interior)[0]
    pts = _phase_points(graph, cost, arrived)
    groups = {}
    for row, j in zip(pts, arrived):
        key = (int(row[1]), tuple(int(v) for v in row[2:]))
        groups.setdefault(key, []).append(int(j))
    boundary = {}
    for (lv, coords), js in sorted(groups.items()):
        ps = [float(xi.stopped[j] / xi.arrival[j]) for j in js]
        pure_stop = all(p >= 1.0 - 1e-9 for p in ps)
        pure_go = all(p <= 1e-9 for p in ps)
        if pure_stop or (pure_go and coords not in
                         {c for c in by_level.get(lv, [])}):
            continue
        rec = boundary.setdefault(lv, {})
        for j, p in zip(js, ps):
            rec[graph.key_of(j)] = (coords, min(max(p, 0.0), 1.0))
    if cost.phase == "(t,x)":
        for lv, rec in boundary.items():
            fr = [cp[1] for cp in rec.values() if 1e-9 < cp[1] < 1.0 - 1e-9]
            if len(fr) > 1:
                raise BarrierKindError(
                    f"{cost.name}: more than one fractional entry at level {lv}",
                    offenders=[lv],
                )

    bar = PhaseBarrier(
        phase=cost.phase,
        kind=cost.kind,
        coord_name=_PHASE_COORD_NAME[cost.phase],
        step_size=graph.spec.step_size,
        time_step=graph.spec.time_step,
        t0_index=cost.t0_index,
        thresholds=thresholds,
        boundary=boundary,
        orientation=orientation,
    )
    _check_threshold_monotonicity(bar)
    return bar


def _check_threshold_monotonicity(bar: PhaseBarrier):
    """Monotone-table invariants per kind (grid check over the tables)."""
    if bar.phase == "(max,x)":
        # psi(m) = highest level stopped with max <= m must be increasing:
        # automatic for an up-closed region, asserted for belt and braces
        items = sorted(bar.thresholds.items())  # level -> min max-coord
        ms = sorted({th for _, th in items})
        psi = []
        for m in ms:
            xs = [lv for lv, th in items if th <= m]
            psi.append(max(xs))
        if any(b < a for a, b in zip(psi, psi[1:])):
            raise BarrierKindError("azema-yor psi(max) is not increasing")
    if bar.phase == "(L,x)":
        pos = sorted((lv, th) for lv, th in bar.thresholds.items() if lv > 0)
        neg = sorted((-lv, th) for lv, th in bar.thresholds.items() if lv < 0)
        for side in (pos, neg):
            # the threshold in L must be monotone level-by-level outward:
            # widening interval (min case) or shrinking interval (max case)
            if bar.orientation == _DOWN:
                if any(b[1] < a[1] for a, b in zip(side, side[1:])):
                    raise BarrierKindError("vallois thresholds not monotone (min case)")
            else:
                if any(b[1] > a[1] for a, b in zip(side, side[1:])):
                    raise BarrierKindError("vallois thresholds not monotone (max case)")


def hitting_rst(bar: PhaseBarrier, spec: LatticeSpec, lam: DiscreteMeasure,
                cost=None) -> RandomizedStoppingTime:
    """Stopping rule generated by a barrier: stop inside the region,
    stop with the recorded fraction at threshold entries, stop at the
    horizon regardless."""
    graph = enumerate_reachable(spec, lam)
    if cost is None:
        coords_arrays = _coords_for_phase(graph, bar.phase)
    else:
        coords_arrays = cost.with_time_step(spec.time_step).coords(graph)
    p = np.zeros(graph.n_states)
    n = graph.n_states
    for j in range(n):
        lv = int(graph.x[j])
        coords = tuple(int(c[j]) for c in coords_arrays)
        frac = bar.boundary_prob(lv, graph.key_of(j))
        if frac is not None:
            p[j] = frac
        elif bar.contains(lv, coords):
            p[j] = 1.0
    p[graph.terminal_mask] = 1.0
    return RandomizedStoppingTime(graph, lam, p)


def _coords_for_phase(graph, phase):
    if phase == "(t,x)":
        return (graph.k,)
    if phase == "(max,x)":
        _need(graph.max_idx, "max")
        return (graph.max_idx,)
    if phase == "(absmax,x)":
        _need(graph.max_idx, "max")
        _need(graph.min_idx, "min")
        return (np.maximum(graph.max_idx, -graph.min_idx),)
    if phase == "(L,x)":
        _need(graph.zero_visits, "zero_visits")
        return (graph.zero_visits,)
    if phase in ("(max,min)", "(min,max,x)"):
        _need(graph.max_idx, "max")
        _need(graph.min_idx, "min")
        return (graph.max_idx, -graph.min_idx)
    raise SkembedError(f"unknown phase {phase}")


def _need(arr, name):
    if arr is None:
        from .errors import FeatureError

        raise FeatureError({name})


def loynes_compare(b1: PhaseBarrier, b2: PhaseBarrier, spec: LatticeSpec,
                   lam: DiscreteMeasure, tol: Tolerances = DEFAULT) -> bool:
    """True iff the two barriers' hitting rules stop into identical joint laws."""
    if b1.phase != b2.phase or b1.kind != b2.kind:
        raise SkembedError(
            f"cannot compare barriers of phase/kind ({b1.phase},{b1.kind}) vs "
            f"({b2.phase},{b2.kind})"
        )
    r1 = hitting_rst(b1, spec, lam)
    r2 = hitting_rst(b2, spec, lam)
    return bool(np.max(np.abs(r1.stopped - r2.stopped)) <= 1e-9)


def export_barrier(bar: PhaseBarrier):
    """Tabular record, one row per level (two per level for cave), sorted.

    Columns: phase coordinate name, level, threshold index, threshold
    physical value, fraction; cave rows carry a region column.  A level's
    fraction is the probability of its unique fractional boundary entry
    (1.0 when the threshold stops everything); boundary entries at other
    times are emitted as extra rows with a 'coords@k' threshold index.
    """
    header = ["phase", "level", "threshold_index", "threshold_value", "fraction"]
    if bar.kind == "cave":
        header.append("region")
    rows = []
    scale = bar.time_step if bar.coord_name == "t" else bar.step_size
    fractional = bar.fractional_levels()
    for lv in sorted(bar.thresholds):
        th = bar.thresholds[lv]
        fr = fractional.get(lv, {})
        lead = None
        if len(fr) == 1:
            lead = next(iter(fr.values()))  # (coords, p)
        if bar.kind == "cave":
            pre, post = th
            for part, val in (("pre-t0", pre), ("post-t0", post)):
                if val is None:
                    continue
                frac = 1.0
                if lead is not None and lead[0][0] == val:
                    frac = lead[1]
                rows.append([bar.coord_name, lv, val, val * scale, frac, part])
        elif isinstance(th, tuple):
            for pt in th:
                frac = 1.0
                if lead is not None and lead[0] == pt:
                    frac = lead[1]
                rows.append(
                    [
                        bar.coord_name,
                        lv,
                        "|".join(str(c) for c in pt),
                        "|".join(f"{c * bar.step_size:.12g}" for c in pt),
                        frac,
                    ]
                )
        else:
            frac = 1.0
            if lead is not None and lead[0][0] == th:
                frac = lead[1]
            rows.append([bar.coord_name, lv, th, th * scale, frac])
        if len(fr) > 1:
            for key, (coords, p) in sorted(fr.items()):
                tag = "|".join(str(c) for c in coords) + "@" + key
                rows.append([bar.coord_name, lv, tag, p, p] + (
                    ["boundary"] if bar.kind == "cave" else []
                ))
    return header, rows


def export_barrier_csv(bar: PhaseBarrier) -> str:
    header, rows = export_barrier(bar)
    out = [",".join(header)]
    for row in rows:
        out.append(
            ",".join(
                f"{v:.12g}" if isinstance(v, float) else str(v) for v in row
            )
        )
    return "\n".join(out) + "\n"
