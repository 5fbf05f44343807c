"""Catalog of cost functionals with phase spaces and stop-go predicates.

Each entry evaluates its primary cost (and, where the embedding needs a
tie-break, a secondary cost) on the augmented states of a graph, declares
the phase space in which the optimizer's support is a barrier-type set,
and carries the closed-form stop-go predicate used by the monotonicity
checker.  Generator functions (h, phi) are validated against their shape
hypotheses on the lattice grid; defaults are fixed concrete choices and
all are overridable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CostError, FeatureError
from .lattice import AugmentedState, StateGraph

# sg predicate modes (see _kernels.sg_scan)
SG_GREATER = 0  # going coord strictly above stopped coord
SG_LESS = 1
SG_CAVE = 2
SG_COMPONENT_LE = 4  # going componentwise <= stopped, at least one strict
SG_COMPONENT_GE = 5


@dataclass(frozen=True)
class CostFunctional:
    name: str
    required: frozenset
    phase: str  # (t,x) | (max,x) | (absmax,x) | (L,x) | (max,min) | (min,max,x)
    kind: str   # barrier | inverse | cave | threshold-increasing | threshold-decreasing | two-sided
    sg_mode: int
    gamma: object  # callable graph -> ndarray
    gamma2: object = None  # optional secondary cost
    t0_index: float | None = None  # cave pivot, in time-index units
    params: dict = field(default_factory=dict)
    forbids_target_at_start: bool = False

    @property
    def has_secondary(self):
        return self.gamma2 is not None

    def with_time_step(self, dt) -> "CostFunctional":
        """Rebind the cave pivot to a lattice time grid (no-op otherwise)."""
        if self.name != "cave":
            return self
        import dataclasses

        return dataclasses.replace(self, t0_index=self.params["t0"] / dt)

    def check_features(self, tracked):
        missing = self.required - set(tracked)
        if missing:
            raise FeatureError(missing, self.name)

    def values(self, graph: StateGraph) -> np.ndarray:
        self.check_features(graph.spec.tracked)
        return self.gamma(graph)

    def secondary_values(self, graph: StateGraph):
        if self.gamma2 is None:
            return None
        self.check_features(graph.spec.tracked)
        return self.gamma2(graph)

    # -- phase coordinates -------------------------------------------------------

    def coords(self, graph: StateGraph):
        """Per-state phase coordinate array(s) used by barriers and sg scans."""
        self.check_features(graph.spec.tracked)
        if self.phase == "(t,x)":
            return (graph.k,)
        if self.phase == "(max,x)":
            return (graph.max_idx,)
        if self.phase == "(absmax,x)":
            return (np.maximum(graph.max_idx, -graph.min_idx),)
        if self.phase == "(L,x)":
            return (graph.zero_visits,)
        if self.phase in ("(max,min)", "(min,max,x)"):
            return (graph.max_idx, -graph.min_idx)
        raise CostError(f"unknown phase {self.phase}")

    def state_coords(self, s: AugmentedState):
        feats = {"max": s.m, "min": s.i, "zero_visits": s.l}
        missing = {f for f in self.required if feats[f] is None}
        if missing:
            raise FeatureError(missing, self.name)
        if self.phase == "(t,x)":
            return (s.k,)
        if self.phase == "(max,x)":
            return (s.m,)
        if self.phase == "(absmax,x)":
            return (max(s.m, -s.i),)
        if self.phase == "(L,x)":
            return (s.l,)
        return (s.m, -s.i)


def sg_pair(cost: CostFunctional, going: AugmentedState, stopped: AugmentedState) -> bool:
    """Membership of (going, stopped) in the cost's stop-go set.

    Requires equal position levels; pairs at different levels are never
    stop-go pairs (swapping them would break the embedding constraint).
    """
    if going.x != stopped.x:
        return False
    g = cost.state_coords(going)
    s = cost.state_coords(stopped)
    m = cost.sg_mode
    if m == SG_GREATER:
        return g[0] > s[0]
    if m == SG_LESS:
        return g[0] < s[0]
    if m == SG_CAVE:
        t0 = cost.t0_index
        return (g[0] < s[0] <= t0) or (t0 <= s[0] < g[0])
    if m == SG_COMPONENT_LE:
        return g[0] <= s[0] and g[1] <= s[1] and (g[0] < s[0] or g[1] < s[1])
    if m == SG_COMPONENT_GE:
        return g[0] >= s[0] and g[1] >= s[1] and (g[0] > s[0] or g[1] > s[1])
    raise CostError(f"bad sg mode {m}")


# ---------------------------------------------------------------------------
# generator-function grammar and shape checks
# ---------------------------------------------------------------------------

EXPRESSIONS = {
    "t^2": lambda t: t * t,
    "t^3": lambda t: t**3,
    "sqrt": lambda t: np.sqrt(t),
    "exp-decay": lambda t: 1.0 - np.exp(-t),
}


def resolve_function(spec, default_name):
    """Callable from an expression name, a table, or a callable."""
    if spec is None:
        spec = default_name
    if callable(spec):
        return spec
    if isinstance(spec, str):
        if spec not in EXPRESSIONS:
            raise CostError(f"unknown expression {spec!r}; grammar: {sorted(EXPRESSIONS)}")
        return EXPRESSIONS[spec]
    if isinstance(spec, dict) and "table" in spec:
        pts = sorted((float(a), float(b)) for a, b in spec["table"])
        ts = np.array([p[0] for p in pts])
        vs = np.array([p[1] for p in pts])
        return lambda t: np.interp(t, ts, vs)
    raise CostError(f"cannot interpret function spec {spec!r}")


def _second_differences(vals):
    return vals[2:] - 2.0 * vals[1:-1] + vals[:-2]


def _check_convex(h, ts, tol, what):
    if len(ts) >= 3 and np.any(_second_differences(h(ts)) < -tol):
        raise CostError(f"{what} is not convex on the lattice grid")


def _check_concave(h, ts, tol, what):
    if len(ts) >= 3 and np.any(_second_differences(h(ts)) > tol):
        raise CostError(f"{what} is not concave on the lattice grid")


def _check_increasing(f, ts, tol, what):
    vals = f(ts)
    if len(ts) >= 2 and np.any(np.diff(vals) <= tol):
        raise CostError(f"{what} is not strictly increasing on the lattice grid")


def _time_grid(graph):
    return np.arange(graph.spec.steps + 1) * graph.spec.time_step


_SHAPE_TOL = 1e-12


# ---------------------------------------------------------------------------
# catalog entries
# ---------------------------------------------------------------------------


def root_cost(h=None) -> CostFunctional:
    """gamma = h(t) with h convex: minimizer hits a (t,x) barrier."""
    hf = resolve_function(h, "t^2")

    def gamma(graph):
        ts = _time_grid(graph)
        _check_convex(hf, ts, _SHAPE_TOL, "root h")
        return hf(graph.k * graph.spec.time_step)

    return CostFunctional(
        name="root",
        required=frozenset(),
        phase="(t,x)",
        kind="barrier",
        sg_mode=SG_GREATER,
        gamma=gamma,
        params={"h": h if isinstance(h, str) else None},
    )


def rost_cost(h=None) -> CostFunctional:
    """gamma = h(t) with h concave: minimizer hits an inverse barrier."""
    hf = resolve_function(h, "sqrt")

    def gamma(graph):
        ts = _time_grid(graph)
        _check_concave(hf, ts, _SHAPE_TOL, "rost h")
        return hf(graph.k * graph.spec.time_step)

    return CostFunctional(
        name="rost",
        required=frozenset(),
        phase="(t,x)",
        kind="inverse",
        sg_mode=SG_LESS,
        gamma=gamma,
        params={"h": h if isinstance(h, str) else None},
    )


def default_cave_phi(t0):
    """Concave ramp to 1 at t0, exponential decay after (design default)."""

    def phi(t):
        t = np.asarray(t, dtype=np.float64)
        rising = t / t0 * (2.0 - t / t0)
        falling = np.exp(-(t - t0))
        return np.where(t <= t0, rising, falling)

    return phi


def cave_cost(t0: float, phi=None, time_step: float = 1.0) -> CostFunctional:
    """gamma = phi(t), concave before t0 and convex after: cave barrier.

    t0 is physical time; stop-go comparisons run in time-index units, so the
    pivot index is t0 / time_step (rebind with ``with_time_step`` when the
    lattice uses a different grid).
    """
    if t0 <= 0:
        raise CostError("cave pivot t0 must be > 0")
    pf = default_cave_phi(t0) if phi is None else resolve_function(phi, None)

    def gamma(graph):
        dt = graph.spec.time_step
        ts = _time_grid(graph)
        if abs(float(np.asarray(pf(0.0)))) > 1e-9:
            raise CostError("cave phi must vanish at 0")
        if abs(float(np.asarray(pf(t0))) - 1.0) > 1e-9:
            raise CostError("cave phi must equal 1 at t0")
        pre = ts[ts <= t0 + 1e-12]
        post = ts[ts >= t0 - 1e-12]
        _check_concave(pf, pre, _SHAPE_TOL, "cave phi before t0")
        _check_convex(pf, post, _SHAPE_TOL, "cave phi after t0")
        if len(post) >= 2 and np.any(np.diff(pf(post)) > _SHAPE_TOL):
            raise CostError("cave phi must decrease after t0")
        return np.asarray(pf(graph.k * dt), dtype=np.float64)

    return CostFunctional(
        name="cave",
        required=frozenset(),
        phase="(t,x)",
        kind="cave",
        sg_mode=SG_CAVE,
        gamma=gamma,
        t0_index=t0 / time_step,
        params={"t0": t0},
    )


def azema_yor_cost() -> CostFunctional:
    """Maximize E[running max]: gamma = -max, with the barycentre tie-break."""

    def gamma(graph):
        return -(graph.max_idx * graph.spec.step_size).astype(np.float64)

    def gamma2(graph):
        phi = 1.0 - np.exp2(-(graph.max_idx.astype(np.float64)) - 1.0)
        return phi * (graph.x * graph.spec.step_size) ** 2

    return CostFunctional(
        name="azema_yor",
        required=frozenset({"max"}),
        phase="(max,x)",
        kind="threshold-increasing",
        sg_mode=SG_GREATER,
        gamma=gamma,
        gamma2=gamma2,
    )


def jacka_cost(phi=None) -> CostFunctional:
    """Maximize E[phi(sup |B|)] with phi bounded strictly increasing."""
    user = phi

    def gamma(graph):
        j = np.maximum(graph.max_idx, -graph.min_idx).astype(np.float64)
        if user is None:
            vals = 1.0 - np.exp2(-j - 1.0)
        else:
            f = resolve_function(user, None)
            dx = graph.spec.step_size
            grid = np.arange(int(j.max()) + 1) * dx
            _check_increasing(f, grid, _SHAPE_TOL, "jacka phi")
            vals = f(j * dx)
        return -vals

    def gamma2(graph):
        j = np.maximum(graph.max_idx, -graph.min_idx).astype(np.float64)
        phi2 = 1.0 - np.exp2(-j - 1.0)
        return phi2 * (graph.x * graph.spec.step_size) ** 2

    return CostFunctional(
        name="jacka",
        required=frozenset({"max", "min"}),
        phase="(absmax,x)",
        kind="two-sided",
        sg_mode=SG_GREATER,
        gamma=gamma,
        gamma2=gamma2,
    )


def _increasing_2d_default(a_idx, b_idx):
    return (1.0 - np.exp2(-a_idx - 1.0)) + (1.0 - np.exp2(-b_idx - 1.0))


def perkins_cost(phi=None, phi_tilde=None) -> CostFunctional:
    """Minimize E[phi(max, -min)] with phi strictly increasing in both."""

    def _eval_phi(graph, which):
        a = graph.max_idx.astype(np.float64)
        b = (-graph.min_idx).astype(np.float64)
        if which is None:
            return _increasing_2d_default(a, b)
        f = resolve_function(which, None)
        dx = graph.spec.step_size
        return f(a * dx, b * dx)

    def gamma(graph):
        return _eval_phi(graph, phi)

    def gamma2(graph):
        tilde = _eval_phi(graph, phi_tilde)
        return -((graph.x * graph.spec.step_size) ** 2) * tilde

    return CostFunctional(
        name="perkins",
        required=frozenset({"max", "min"}),
        phase="(max,min)",
        kind="threshold-decreasing",
        sg_mode=SG_COMPONENT_LE,
        gamma=gamma,
        gamma2=gamma2,
        forbids_target_at_start=True,
    )


def range_cost(phi=None, phi_tilde=None) -> CostFunctional:
    """Maximize E[phi(max, -min)]: thresholds monotone in both coordinates."""

    def _eval_phi(graph, which):
        a = graph.max_idx.astype(np.float64)
        b = (-graph.min_idx).astype(np.float64)
        if which is None:
            return _increasing_2d_default(a, b)
        f = resolve_function(which, None)
        dx = graph.spec.step_size
        return f(a * dx, b * dx)

    def gamma(graph):
        return -_eval_phi(graph, phi)

    def gamma2(graph):
        tilde = _eval_phi(graph, phi_tilde)
        return ((graph.x * graph.spec.step_size) ** 2) * tilde

    return CostFunctional(
        name="range",
        required=frozenset({"max", "min"}),
        phase="(min,max,x)",
        kind="two-sided",
        sg_mode=SG_COMPONENT_GE,
        gamma=gamma,
        gamma2=gamma2,
    )


def vallois_cost(h=None, direction="min") -> CostFunctional:
    """Optimize E[h(L)] for the zero-level visit count L, h strictly concave.

    direction='min' minimizes (interval thresholds widen with L);
    direction='max' maximizes (thresholds shrink).  Physical local time is
    the visit count scaled by the step size.
    """
    if direction not in ("min", "max"):
        raise CostError("vallois direction must be 'min' or 'max'")
    hf = resolve_function(h, "exp-decay")

    def gamma(graph):
        l = graph.zero_visits.astype(np.float64) * graph.spec.step_size
        grid = np.arange(int(graph.zero_visits.max()) + 2) * graph.spec.step_size
        _check_concave(hf, grid, _SHAPE_TOL, "vallois h")
        vals = hf(l)
        return vals if direction == "min" else -vals

    def gamma2(graph):
        l = graph.zero_visits.astype(np.float64) * graph.spec.step_size
        return np.exp(-l) * (graph.x * graph.spec.step_size) ** 2

    return CostFunctional(
        name="vallois",
        required=frozenset({"zero_visits"}),
        phase="(L,x)",
        kind="threshold-increasing" if direction == "min" else "threshold-decreasing",
        sg_mode=SG_LESS if direction == "min" else SG_GREATER,
        gamma=gamma,
        gamma2=gamma2,
        params={"direction": direction},
    )


CATALOG = {
    "root": root_cost,
    "rost": rost_cost,
    "cave": cave_cost,
    "azema_yor": azema_yor_cost,
    "jacka": jacka_cost,
    "perkins": perkins_cost,
    "range": range_cost,
    "vallois": vallois_cost,
}


def from_json_obj(obj) -> CostFunctional:
    """Build a catalog cost from {'name': ..., params...}."""
    obj = dict(obj)
    name = obj.pop("name", None)
    if name not in CATALOG:
        raise CostError(f"unknown cost {name!r}; catalog: {sorted(CATALOG)}")
    if name == "root":
        return root_cost(obj.get("h"))
    if name == "rost":
        return rost_cost(obj.get("h"))
    if name == "cave":
        if "t0" not in obj:
            raise CostError("cave cost needs t0")
        return cave_cost(float(obj["t0"]), obj.get("phi"))
    if name == "azema_yor":
        return azema_yor_cost()
    if name == "jacka":
        return jacka_cost(obj.get("phi"))
    if name == "perkins":
        return perkins_cost(obj.get("phi"), obj.get("phi_tilde"))
    if name == "range":
        return range_cost(obj.get("phi"), obj.get("phi_tilde"))
    return vallois_cost(obj.get("h"), obj.get("direction", "min"))
