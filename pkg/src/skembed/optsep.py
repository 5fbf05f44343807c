"""Embedding problems as linear programs over stopping and flow masses.

The primal variables are the stopped mass per augmented state plus the
continuing mass per non-terminal state; constraints are flow conservation
per state and one marginal row per target atom.  The LP dual rows map back
to the certificate pair (psi on levels, phi on states): phi is a
submartingale along the walk with martingale equality wherever mass flows,
phi + psi <= gamma everywhere with equality on the stopped support, and
the dual value integral psi d(mu) matches the primal objective.

A path-tree oracle re-solves the same problem over fully history-dependent
stopping rules for small horizons, validating that the augmented-state
(Markovian) reduction is lossless for catalog costs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .costs import CostFunctional
from .errors import CostError, InfeasibleError, LatticeError, ResourceLimitError, SkembedError
from .lattice import LatticeSpec, StateGraph, enumerate_reachable, _advance, _start_tuple
from .measures import DiscreteMeasure, convex_order
from .simplex import OPTIMAL, StandardFormLP
from .stopping import RandomizedStoppingTime
from .tolerances import DEFAULT, Tolerances

EXACT = "exact"


def soft(eps: float):
    """Soft marginal mode with a total-variation budget."""
    if not 0.0 <= eps <= 1.0:
        raise SkembedError("soft-mode epsilon must be in [0,1]")
    return ("soft", float(eps))


@dataclass
class EmbeddingProblem:
    spec: LatticeSpec
    lam: DiscreteMeasure
    mu: DiscreteMeasure
    cost: CostFunctional
    mode: object = EXACT
    secondary: bool | None = None  # None: run iff the cost carries a tie-break

    def __post_init__(self):
        self.cost = self.cost.with_time_step(self.spec.time_step)
        self.cost.check_features(self.spec.tracked)
        if self.secondary is None:
            self.secondary = self.cost.has_secondary
        if self.secondary and not self.cost.has_secondary:
            raise CostError(f"cost {self.cost.name} has no secondary functional")
        if self.cost.forbids_target_at_start:
            for v, _ in self.lam.atoms:
                if self.mu.weight(v) > 0.0:
                    raise CostError(
                        f"cost {self.cost.name} requires the target to carry no mass "
                        f"at the start level {v}"
                    )
        if self.is_martingale_kernel and not convex_order(self.lam, self.mu):
            warnings.warn(
                "start law is not prior to the target in convex order; "
                "the embedding LP will likely be infeasible",
                stacklevel=2,
            )

    @property
    def is_martingale_kernel(self):
        return self.spec.kernel == "symmetric" or (
            self.spec.kernel == "custom" and self.spec.p_up == 0.5
        )

    @property
    def epsilon(self):
        return self.mode[1] if isinstance(self.mode, tuple) else None


@dataclass
class AssembledLP:
    lp: StandardFormLP
    sigma_var: np.ndarray  # per state, column index or -1
    cont_var: np.ndarray
    levels: list  # marginal-row levels, in row order
    n_state_rows: int
    soft_plus: dict = field(default_factory=dict)  # level -> column of s+
    soft_minus: dict = field(default_factory=dict)
    c2: np.ndarray | None = None


def _assemble(graph, gamma, lam_entries, mu, mode, gamma2=None) -> AssembledLP:
    """Build the stopping/flow LP for any graph-like object.

    graph needs: n_states, k, x, terminal_mask, child_ptr/idx/prob.
    lam_entries: [(state index, weight)].
    """
    S = graph.n_states
    x = graph.x
    terminal = graph.terminal_mask
    exact = mode == EXACT
    supp = {v for v, _ in mu.atoms}
    if exact:
        has_sigma = np.array([int(x[j]) in supp for j in range(S)], dtype=bool)
        levels = [v for v, _ in mu.atoms]
    else:
        has_sigma = np.ones(S, dtype=bool)
        levels = sorted(set(int(v) for v in x) | supp)
    level_row = {v: len(graph.k) + r for r, v in enumerate(levels)}

    sigma_var = np.full(S, -1, dtype=np.int64)
    cont_var = np.full(S, -1, dtype=np.int64)
    nv = 0
    for j in range(S):
        if has_sigma[j]:
            sigma_var[j] = nv
            nv += 1
    for j in range(S):
        if not terminal[j]:
            cont_var[j] = nv
            nv += 1

    rows, cols, vals = [], [], []
    for j in range(S):
        sv = sigma_var[j]
        if sv >= 0:
            rows.append(j)
            cols.append(sv)
            vals.append(1.0)
            rows.append(level_row[int(x[j])])
            cols.append(sv)
            vals.append(1.0)
        cv = cont_var[j]
        if cv >= 0:
            rows.append(j)
            cols.append(cv)
            vals.append(1.0)
            for t in range(graph.child_ptr[j], graph.child_ptr[j + 1]):
                rows.append(int(graph.child_idx[t]))
                cols.append(cv)
                vals.append(-float(graph.child_prob[t]))

    m_rows = S + len(levels)
    soft_plus, soft_minus = {}, {}
    if not exact:
        eps = mode[1]
        budget_row = m_rows
        m_rows += 1
        for v in levels:
            soft_plus[v] = nv
            rows += [level_row[v], budget_row]
            cols += [nv, nv]
            vals += [1.0, 1.0]
            nv += 1
            soft_minus[v] = nv
            rows += [level_row[v], budget_row]
            cols += [nv, nv]
            vals += [-1.0, 1.0]
            nv += 1
        rows.append(budget_row)
        cols.append(nv)
        vals.append(1.0)
        nv += 1  # budget slack

    b = np.zeros(m_rows)
    for j, w in lam_entries:
        b[j] += w
    for v, w in mu.atoms:
        b[level_row[v]] += w
    if not exact:
        b[-1] = 2.0 * mode[1]

    c = np.zeros(nv)
    c[sigma_var[sigma_var >= 0]] = gamma[sigma_var >= 0]
    c2 = None
    if gamma2 is not None:
        c2 = np.zeros(nv)
        c2[sigma_var[sigma_var >= 0]] = gamma2[sigma_var >= 0]

    lp = StandardFormLP(
        n=nv,
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        vals=np.array(vals, dtype=np.float64),
        b=b,
        c=c,
    )
    return AssembledLP(
        lp=lp,
        sigma_var=sigma_var,
        cont_var=cont_var,
        levels=levels,
        n_state_rows=S,
        soft_plus=soft_plus,
        soft_minus=soft_minus,
        c2=c2,
    )


def assemble_lp(problem: EmbeddingProblem, graph: StateGraph | None = None) -> AssembledLP:
    if graph is None:
        graph = enumerate_reachable(problem.spec, problem.lam)
    gamma = problem.cost.values(graph)
    gamma2 = problem.cost.secondary_values(graph) if problem.secondary else None
    lam_entries = [(graph.start_of_level(v), w) for v, w in problem.lam.atoms]
    return _assemble(graph, gamma, lam_entries, problem.mu, problem.mode, gamma2)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass
class DualCertificate:
    """Optimality proof object: level function psi and state function phi."""

    psi: dict  # level -> value (every reachable level)
    phi: np.ndarray  # per state
    epsilon: float | None = None
    budget_dual: float | None = None

    def psi_of(self, v):
        return self.psi.get(int(v), 0.0)

    def to_json_obj(self, graph):
        return {
            "psi": [[int(v), float(val)] for v, val in sorted(self.psi.items())],
            "phi": [[graph.key_of(j), float(self.phi[j])] for j in range(graph.n_states)],
            "epsilon": self.epsilon,
            "budget_dual": self.budget_dual,
        }


def _build_certificate(asm: AssembledLP, graph, gamma, lam_entries, lpsol) -> DualCertificate:
    y = lpsol.y
    phi_raw = y[: asm.n_state_rows].copy()
    psi = {v: float(y[asm.n_state_rows + r]) for r, v in enumerate(asm.levels)}
    c0 = sum(w * phi_raw[j] for j, w in lam_entries)
    phi = phi_raw - c0
    psi = {v: val + c0 for v, val in psi.items()}
    # levels with no marginal row: tightest feasible value
    slackless = gamma - phi
    for v in sorted(set(int(t) for t in graph.x)):
        if v not in psi:
            at = graph.x == v
            psi[v] = float(slackless[at].min())
    budget_dual = None
    eps = None
    if asm.soft_plus:
        budget_dual = float(y[-1])
        eps = asm.lp.b[-1] / 2.0
    return DualCertificate(psi=psi, phi=phi, epsilon=eps, budget_dual=budget_dual)


@dataclass
class CheckResult:
    ok: bool
    checks: dict
    primal: float
    dual: float
    gap: float

    def failures(self):
        return [k for k, (ok, _) in self.checks.items() if not ok]


def certificate_check(sol, problem, tol: Tolerances = DEFAULT) -> CheckResult:
    """Re-verify every certificate invariant independently of the solver.

    The LP dual of the minimization problem makes phi a submartingale along
    the walk (phi(s) <= sum p(child) phi(child)) with martingale equality
    wherever mass keeps flowing; phi + psi <= gamma everywhere with equality
    on the stopped support; value = integral of psi against the target.
    """
    xi = sol.xi
    graph = xi.graph
    cert = sol.certificate
    cost = problem.cost.with_time_step(graph.spec.time_step)
    gamma = cost.values(graph)
    phi = cert.phi
    psi_arr = np.array([cert.psi_of(v) for v in graph.x])
    eps_slack = tol.cert_slack
    checks = {}

    # normalization E_lambda[phi(start)] = 0
    e0 = sum(w * phi[graph.start_of_level(v)] for v, w in xi.lam.atoms)
    checks["normalization"] = (abs(e0) <= eps_slack, f"E_lam[phi]={e0:.3e}")

    # martingale / submartingale structure
    drift = np.zeros(graph.n_states)
    np.add.at(drift, graph.edge_src, graph.edge_prob * phi[graph.edge_dst])
    nonterm = ~graph.terminal_mask
    diff = phi[nonterm] - drift[nonterm]  # <= 0 required (submartingale)
    worst_sub = float(diff.max()) if diff.size else 0.0
    checks["submartingale"] = (
        worst_sub <= eps_slack,
        f"max phi - E[phi(child)] = {worst_sub:.3e}",
    )
    flowing = nonterm & (xi.continuing > tol.support)
    gap_flow = np.abs(phi[flowing] - drift[flowing])
    worst_flow = float(gap_flow.max()) if gap_flow.size else 0.0
    checks["martingale_on_flow"] = (
        worst_flow <= eps_slack,
        f"max |phi - E[phi(child)]| on flow = {worst_flow:.3e}",
    )

    # pointwise dual feasibility and complementary slackness
    slack = gamma - phi - psi_arr
    worst_feas = float(slack.min()) if len(slack) else 0.0
    checks["dual_feasibility"] = (
        worst_feas >= -eps_slack,
        f"min gamma-phi-psi = {worst_feas:.3e} at "
        f"{graph.key_of(int(np.argmin(slack))) if len(slack) else '-'}",
    )
    on_supp = xi.stopped > tol.cert_slack
    worst_cs = float(np.abs(slack[on_supp]).max()) if on_supp.any() else 0.0
    checks["complementary_slackness"] = (
        worst_cs <= eps_slack,
        f"max |slack| on stopped support = {worst_cs:.3e}",
    )

    # duality gap, dual value recomputed from scratch
    dual = sum(w * cert.psi_of(v) for v, w in problem.mu.atoms)
    if cert.budget_dual is not None:
        dual += cert.budget_dual * 2.0 * cert.epsilon
    primal = float(np.dot(xi.stopped, gamma))
    gap = abs(primal - dual)
    allowed = tol.gap_rel * (1.0 + abs(primal)) + (
        tol.lex_width if sol.secondary_objective is not None else 0.0
    )
    checks["duality_gap"] = (gap <= allowed, f"|primal-dual|={gap:.3e} (allow {allowed:.1e})")

    ok = all(flag for flag, _ in checks.values())
    return CheckResult(ok=ok, checks=checks, primal=primal, dual=dual, gap=gap)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------


@dataclass
class OptimalSolution:
    xi: RandomizedStoppingTime
    objective: float
    certificate: DualCertificate
    gap: float
    secondary_objective: float | None = None
    marginal_error: float = 0.0  # max atom deviation (exact) / achieved TV (soft)
    lp_iterations: int = 0


def _map_back(graph, lam, asm, x, mu) -> RandomizedStoppingTime:
    sv, cv = asm.sigma_var, asm.cont_var
    sigma = np.where(sv >= 0, x[np.clip(sv, 0, None)], 0.0)
    cont = np.where(cv >= 0, x[np.clip(cv, 0, None)], 0.0)
    arrival = sigma + cont
    supp = {v for v, _ in mu.atoms}
    default = np.array([1.0 if int(v) in supp else 0.0 for v in graph.x])
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(arrival > 1e-11, sigma / np.maximum(arrival, 1e-300), default)
    p = np.clip(p, 0.0, 1.0)
    p[graph.terminal_mask] = 1.0
    return RandomizedStoppingTime(graph, lam, p)


def _hint_for_infeasibility(problem, graph):
    hints = []
    reachable_levels = set(int(v) for v in graph.x)
    for v, w in problem.mu.atoms:
        if v not in reachable_levels:
            hints.append(
                f"target level {v} is unreachable within {problem.spec.steps} steps "
                "(parity or range obstruction)"
            )
    if not hints:
        if problem.is_martingale_kernel and not convex_order(problem.lam, problem.mu):
            hints.append("start law is not prior to target in convex order")
        else:
            hints.append(
                "horizon likely too short: interior mass cannot be exhausted "
                f"within {problem.spec.steps} steps"
            )
    return "; ".join(hints)


def solve(problem: EmbeddingProblem, tol: Tolerances = DEFAULT,
          graph: StateGraph | None = None) -> OptimalSolution:
    """Solve the embedding problem; raises InfeasibleError with a certificate."""
    if graph is None:
        graph = enumerate_reachable(problem.spec, problem.lam)
    asm = assemble_lp(problem, graph)
    gamma = problem.cost.values(graph)
    lam_entries = [(graph.start_of_level(v), w) for v, w in problem.lam.atoms]

    if problem.secondary:
        first, second = simplex.solve_lexicographic(asm.lp, asm.c2, tol)
        if first.status != OPTIMAL:
            raise InfeasibleError(
                "embedding LP infeasible",
                farkas=first.farkas,
                hint=_hint_for_infeasibility(problem, graph),
            )
        if second.status != OPTIMAL:
            raise SkembedError("secondary LP failed on a nonempty optimal face")
        lpsol, xvec = first, second.x
        secondary_objective = second.objective
        iterations = first.iterations + second.iterations
    else:
        lpsol = simplex.solve(asm.lp, tol)
        if lpsol.status != OPTIMAL:
            if lpsol.status == simplex.INFEASIBLE:
                raise InfeasibleError(
                    "embedding LP infeasible",
                    farkas=lpsol.farkas,
                    hint=_hint_for_infeasibility(problem, graph),
                )
            raise SkembedError(f"LP terminated with status {lpsol.status}")
        xvec = lpsol.x
        secondary_objective = None
        iterations = lpsol.iterations

    xi = _map_back(graph, problem.lam, asm, xvec, problem.mu)
    cert = _build_certificate(asm, graph, gamma, lam_entries, lpsol)
    objective = float(np.dot(xi.stopped, gamma))
    dual = sum(w * cert.psi_of(v) for v, w in problem.mu.atoms)
    if cert.budget_dual is not None:
        dual += cert.budget_dual * 2.0 * cert.epsilon
    gap = abs(objective - dual)

    law = xi.pushforward_law()
    if problem.mode == EXACT:
        levels = sorted(set(law.support) | set(problem.mu.support))
        marg = max(abs(law.weight(v) - problem.mu.weight(v)) for v in levels)
    else:
        levels = sorted(set(law.support) | set(problem.mu.support))
        marg = 0.5 * sum(abs(law.weight(v) - problem.mu.weight(v)) for v in levels)
    return OptimalSolution(
        xi=xi,
        objective=objective,
        certificate=cert,
        gap=gap,
        secondary_objective=secondary_objective,
        marginal_error=marg,
        lp_iterations=iterations,
    )


# ---------------------------------------------------------------------------
# feasibility and couplings
# ---------------------------------------------------------------------------


@dataclass
class FeasibilityReport:
    feasible: bool
    reason: str = ""
    farkas: np.ndarray | None = None


def feasibility_check(problem: EmbeddingProblem, tol: Tolerances = DEFAULT) -> FeasibilityReport:
    """Phase-1 LP only; infeasibility reported with heuristic reasons."""
    graph = enumerate_reachable(problem.spec, problem.lam)
    gamma = np.zeros(graph.n_states)
    lam_entries = [(graph.start_of_level(v), w) for v, w in problem.lam.atoms]
    asm = _assemble(graph, gamma, lam_entries, problem.mu, problem.mode)
    res = simplex.solve(asm.lp, tol, phase1_only=True)
    if res.status == OPTIMAL:
        return FeasibilityReport(feasible=True)
    return FeasibilityReport(
        feasible=False,
        reason=_hint_for_infeasibility(problem, graph),
        farkas=res.farkas,
    )


def induced_coupling(sol: OptimalSolution, problem: EmbeddingProblem):
    """Joint law of (start level, stopped level): rows sum to lam, cols to mu."""
    xi = sol.xi
    graph = xi.graph
    rows = [v for v, _ in problem.lam.atoms]
    cols = sorted(set(int(v) for v in graph.x[xi.stopped > 0]) | problem.mu.support)
    col_of = {v: j for j, v in enumerate(cols)}
    mat = np.zeros((len(rows), len(cols)))
    for r, (v, w) in enumerate(problem.lam.atoms):
        cond = RandomizedStoppingTime(graph, DiscreteMeasure.point(v), xi.p)
        for lv, lw in cond.pushforward_law().atoms:
            mat[r, col_of[lv]] += w * lw
    return rows, cols, mat


# ---------------------------------------------------------------------------
# monotonicity principle
# ---------------------------------------------------------------------------


@dataclass
class StopGoViolation:
    going: str
    stopped: str

    def to_json_obj(self):
        return {"going": self.going, "stopped": self.stopped}


def verify_monotonicity(sol, problem, tol: Tolerances = DEFAULT):
    """Scan optimizer supports for stop-go pairs; empty list = gamma-monotone.

    Going states are those with continuing mass, stopped states those with
    stopped mass (above the support tolerance).  A pair is a violation only
    when the improving exchange exists on the lattice: the going state's
    realized continuation (its bush under this very rule, the relative
    stop-go notion) must fit after the stopped state's time, i.e.
    stopped.k + realized bush depth <= horizon.  Pairs failing that test
    are continuum artifacts of the finite horizon, not improvable.
    """
    from . import _kernels

    xi = sol.xi
    graph = xi.graph
    cost = problem.cost.with_time_step(graph.spec.time_step)
    coords = cost.coords(graph)
    go_idx = np.nonzero(xi.continuing > tol.support)[0]
    st_idx = np.nonzero(xi.stopped > tol.support)[0]

    def feat(idx):
        colocated = [graph.k[idx], graph.x[idx]] + [c[idx] for c in coords]
        return np.stack(colocated, axis=1) if len(idx) else np.zeros((0, 2 + len(coords)))

    pairs = _kernels.sg_scan(
        feat(go_idx),
        feat(st_idx),
        cost.sg_mode,
        cost.t0_index if cost.t0_index is not None else 0.0,
        graph.horizon,
    )
    last = xi.last_stop_time_through(tol.support)
    out = []
    for a, b in pairs:
        g_j = int(go_idx[a])
        s_j = int(st_idx[b])
        depth = last[g_j] - graph.k[g_j]
        if depth >= 1 and graph.k[s_j] + depth <= graph.horizon:
            out.append(StopGoViolation(graph.key_of(g_j), graph.key_of(s_j)))
    return out


# ---------------------------------------------------------------------------
# path-tree oracle
# ---------------------------------------------------------------------------

_ORACLE_MAX_STEPS = 12


class _ForestGraph:
    """Prefix forest: one node per path prefix, duck-typed like StateGraph."""

    def __init__(self, spec, lam):
        if spec.steps > _ORACLE_MAX_STEPS:
            raise ResourceLimitError(
                f"path-tree oracle limited to {_ORACLE_MAX_STEPS} steps (got {spec.steps})"
            )
        self.spec = spec
        nodes = []  # feature tuples
        parents = []
        starts = []
        frontier = []
        for v, _ in lam.atoms:
            t = _start_tuple(spec, v)
            starts.append(len(nodes))
            frontier.append((len(nodes), t))
            nodes.append(t)
            parents.append(-1)
        src, dst, pr = [], [], []
        for _ in range(spec.steps):
            nxt = []
            for j, t in frontier:
                for dx, p in spec.branches():
                    child = _advance(spec, t, dx)
                    cj = len(nodes)
                    nodes.append(child)
                    parents.append(j)
                    src.append(j)
                    dst.append(cj)
                    pr.append(p)
                    nxt.append((cj, child))
            frontier = nxt
        self.n_states = len(nodes)
        self.k = np.array([t[0] for t in nodes], dtype=np.int64)
        self.x = np.array([t[1] for t in nodes], dtype=np.int64)
        self.max_idx = (
            np.array([t[2] for t in nodes], dtype=np.int64) if spec.has_max else None
        )
        self.min_idx = (
            np.array([t[3] for t in nodes], dtype=np.int64) if spec.has_min else None
        )
        self.zero_visits = (
            np.array([t[4] for t in nodes], dtype=np.int64) if spec.has_zero else None
        )
        self.terminal_mask = self.k == spec.steps
        self.edge_src = np.array(src, dtype=np.int64)
        self.edge_dst = np.array(dst, dtype=np.int64)
        self.edge_prob = np.array(pr, dtype=np.float64)
        order = np.argsort(self.edge_src, kind="stable")
        ptr = np.zeros(self.n_states + 1, dtype=np.int64)
        np.add.at(ptr, self.edge_src + 1, 1)
        self.child_ptr = np.cumsum(ptr)
        self.child_idx = self.edge_dst[order]
        self.child_prob = self.edge_prob[order]
        self._start_nodes = starts


@dataclass
class OracleSolution:
    objective: float
    secondary_objective: float | None
    stopped_mass_by_state: dict  # (k, x, feats...) -> stopped mass, aggregated


def solve_pathtree_oracle(problem: EmbeddingProblem, tol: Tolerances = DEFAULT) -> OracleSolution:
    """Exact optimum over all history-dependent randomized stopping rules.

    Independent of the Markovian state reduction: the LP runs over full
    path prefixes.  Horizon capped (the tree has 2^N leaves per start atom).
    """
    forest = _ForestGraph(problem.spec, problem.lam)
    cost = problem.cost.with_time_step(problem.spec.time_step)
    gamma = cost.values(forest)
    gamma2 = cost.secondary_values(forest) if problem.secondary else None
    lam_entries = list(zip(forest._start_nodes, [w for _, w in problem.lam.atoms]))
    asm = _assemble(forest, gamma, lam_entries, problem.mu, problem.mode, gamma2)
    if problem.secondary:
        first, second = simplex.solve_lexicographic(asm.lp, asm.c2, tol)
        if first.status != OPTIMAL:
            raise InfeasibleError("oracle LP infeasible", farkas=first.farkas)
        xvec = second.x
        obj = float(asm.lp.c @ xvec)
        sec = second.objective
    else:
        lpsol = simplex.solve(asm.lp, tol)
        if lpsol.status != OPTIMAL:
            raise InfeasibleError("oracle LP infeasible", farkas=lpsol.farkas)
        xvec = lpsol.x
        obj = lpsol.objective
        sec = None
    agg = {}
    for j in range(forest.n_states):
        sv = asm.sigma_var[j]
        if sv >= 0 and xvec[sv] > 1e-12:
            key_parts = [int(forest.k[j]), int(forest.x[j])]
            for arr in (forest.max_idx, forest.min_idx, forest.zero_visits):
                if arr is not None:
                    key_parts.append(int(arr[j]))
            key = tuple(key_parts)
            agg[key] = agg.get(key, 0.0) + float(xvec[sv])
    return OracleSolution(objective=obj, secondary_objective=sec, stopped_mass_by_state=agg)
