"""Command-line entry point: solve, verify, and barrier subcommands.

Exit codes -- solve: 0 optimal, 2 infeasible (Farkas certificate written),
1 input error; verify: 0 all checks pass, 3 any check fails, 1 input
error; barrier: 4 when the extracted support violates its kind invariant
(the theorem-violation signal).  All configuration comes from explicit
flags; no environment variables are consulted for run parameters.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import barriers, costs, montecarlo, optsep
from ._json import canonical_json
from .errors import BarrierKindError, InfeasibleError, SkembedError
from .lattice import AugmentedState, LatticeSpec, enumerate_reachable
from .measures import DiscreteMeasure
from .stopping import RandomizedStoppingTime
from .tolerances import DEFAULT


def load_problem(obj) -> optsep.EmbeddingProblem:
    """Problem from the canonical JSON schema (see README)."""
    lat = obj["lattice"]
    kernel = lat.get("kernel", "symmetric")
    p_up = None
    if isinstance(kernel, dict):
        p_up = float(kernel["custom"])
        kernel = "custom"
    lam = DiscreteMeasure.from_json(obj["start"])
    spec = LatticeSpec(
        steps=int(lat["steps"]),
        step_size=float(lat.get("step_size", 1.0)),
        time_step=lat.get("time_step"),
        kernel=kernel,
        p_up=p_up,
        tracked=frozenset(lat.get("tracked", [])),
        start_support=tuple(lat.get("start_support", [v for v, _ in lam.atoms])),
    )
    mu = DiscreteMeasure.from_json(obj["target"])
    cost = costs.from_json_obj(obj["cost"])
    mode = obj.get("mode", "exact")
    if isinstance(mode, dict):
        mode = optsep.soft(float(mode["soft"]))
    elif mode != "exact":
        raise SkembedError(f"mode must be 'exact' or {{'soft': eps}}, got {mode!r}")
    secondary = obj.get("secondary")
    return optsep.EmbeddingProblem(
        spec=spec, lam=lam, mu=mu, cost=cost, mode=mode, secondary=secondary
    )


def solution_json_obj(sol, problem, violations=None, oracle=None):
    xi = sol.xi
    g = xi.graph
    rows, cols, mat = optsep.induced_coupling(sol, problem)
    out = {
        "objective": sol.objective,
        "secondary_objective": sol.secondary_objective,
        "gap": sol.gap,
        "marginal_error": sol.marginal_error,
        "expected_time": xi.expected_time(),
        "stop_prob": [[g.key_of(j), float(xi.p[j])] for j in range(g.n_states)],
        "certificate": sol.certificate.to_json_obj(g),
        "coupling": {
            "rows": rows,
            "cols": cols,
            "matrix": [[float(v) for v in row] for row in mat],
        },
        "monotonicity": {
            "violations": [v.to_json_obj() for v in (violations or [])],
        },
    }
    if oracle is not None:
        out["oracle"] = {
            "objective": oracle.objective,
            "difference": abs(oracle.objective - sol.objective),
        }
    return out


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_solve(args) -> int:
    try:
        problem = load_problem(_load_json(args.problem))
    except (SkembedError, KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    tol = _tolerances(args)
    try:
        sol = optsep.solve(problem, tol)
    except InfeasibleError as exc:
        payload = {
            "status": "infeasible",
            "hint": exc.hint,
            "farkas": [float(v) for v in exc.farkas] if exc.farkas is not None else None,
        }
        _write(canonical_json(payload), args.out)
        print(f"infeasible: {exc.hint}", file=sys.stderr)
        return 2
    violations = optsep.verify_monotonicity(sol, problem, tol)
    oracle = None
    if args.oracle:
        oracle = optsep.solve_pathtree_oracle(problem, tol)
    _write(canonical_json(solution_json_obj(sol, problem, violations, oracle)), args.out)
    return 0


def rebuild_rst(problem, solution_obj) -> RandomizedStoppingTime:
    graph = enumerate_reachable(problem.spec, problem.lam)
    pmap = {key: val for key, val in solution_obj["stop_prob"]}
    p = np.zeros(graph.n_states)
    for key, val in pmap.items():
        s = AugmentedState.from_key(key, problem.spec)
        p[graph.index_of(s)] = val
    return RandomizedStoppingTime(graph, problem.lam, p)


def cmd_verify(args) -> int:
    try:
        problem = load_problem(_load_json(args.problem))
        sol_obj = _load_json(args.solution)
        xi = rebuild_rst(problem, sol_obj)
    except (SkembedError, KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    tol = _tolerances(args)
    cert_obj = sol_obj["certificate"]
    cert = optsep.DualCertificate(
        psi={int(v): float(val) for v, val in cert_obj["psi"]},
        phi=_phi_array(cert_obj["phi"], xi.graph, problem),
        epsilon=cert_obj.get("epsilon"),
        budget_dual=cert_obj.get("budget_dual"),
    )
    sol = optsep.OptimalSolution(
        xi=xi,
        objective=float(sol_obj["objective"]),
        certificate=cert,
        gap=float(sol_obj["gap"]),
        secondary_objective=sol_obj.get("secondary_objective"),
    )
    report = optsep.certificate_check(sol, problem, tol)
    violations = optsep.verify_monotonicity(sol, problem, tol)
    mc = montecarlo.verify_embedding(
        xi,
        problem.mu,
        n=args.samples,
        seed=args.seed,
        cost=problem.cost,
        workers=args.workers,
    )
    out = {
        "certificate": {
            "passed": report.ok,
            "checks": {k: {"passed": ok, "detail": d} for k, (ok, d) in report.checks.items()},
            "primal": report.primal,
            "dual": report.dual,
            "gap": report.gap,
        },
        "monotonicity": {
            "passed": not violations,
            "violations": [v.to_json_obj() for v in violations],
        },
        "embedding": mc.to_json_obj(),
    }
    ok = report.ok and not violations and mc.passed
    _write(canonical_json(out), args.out)
    return 0 if ok else 3


def cmd_barrier(args) -> int:
    try:
        problem = load_problem(_load_json(args.problem))
    except (SkembedError, KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    tol = _tolerances(args)
    try:
        if args.solution:
            sol_obj = _load_json(args.solution)
            xi = rebuild_rst(problem, sol_obj)
            sol = optsep.OptimalSolution(
                xi=xi,
                objective=float(sol_obj["objective"]),
                certificate=None,
                gap=float(sol_obj["gap"]),
                secondary_objective=sol_obj.get("secondary_objective"),
            )
        else:
            sol = optsep.solve(problem, tol)
    except InfeasibleError as exc:
        print(f"infeasible: {exc.hint}", file=sys.stderr)
        return 2
    except (SkembedError, KeyError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    try:
        bar = barriers.extract_barrier(sol, problem, tol)
    except BarrierKindError as exc:
        print(f"barrier kind violation: {exc}", file=sys.stderr)
        return 4
    _write(barriers.export_barrier_csv(bar).rstrip("\n"), args.out)
    return 0


def _phi_array(pairs, graph, problem):
    phi = np.zeros(graph.n_states)
    for key, val in pairs:
        s = AugmentedState.from_key(key, problem.spec)
        phi[graph.index_of(s)] = val
    return phi


def _tolerances(args):
    overrides = {}
    for name in ("feasibility", "optimality", "support", "gap_rel", "cert_slack"):
        val = getattr(args, f"tol_{name}", None)
        if val is not None:
            overrides[name] = val
    return DEFAULT.with_overrides(**overrides) if overrides else DEFAULT


def _add_tol_flags(p):
    p.add_argument("--tol-feasibility", type=float, dest="tol_feasibility")
    p.add_argument("--tol-optimality", type=float, dest="tol_optimality")
    p.add_argument("--tol-support", type=float, dest="tol_support")
    p.add_argument("--tol-gap-rel", type=float, dest="tol_gap_rel")
    p.add_argument("--tol-cert-slack", type=float, dest="tol_cert_slack")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="skembed",
        description="Optimal Skorokhod embedding on random-walk lattices",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve a problem file, write solution JSON")
    ps.add_argument("--problem", required=True)
    ps.add_argument("--out", default="-")
    ps.add_argument("--oracle", action="store_true",
                    help="also run the path-tree oracle and embed the comparison")
    _add_tol_flags(ps)
    ps.set_defaults(func=cmd_solve)

    pv = sub.add_parser("verify", help="certificate + monotonicity + Monte Carlo checks")
    pv.add_argument("--problem", required=True)
    pv.add_argument("--solution", required=True)
    pv.add_argument("--out", default="-")
    pv.add_argument("--samples", type=int, default=100_000)
    pv.add_argument("--seed", type=int, default=20240601)
    pv.add_argument("--workers", type=int, default=1)
    _add_tol_flags(pv)
    pv.set_defaults(func=cmd_verify)

    pb = sub.add_parser("barrier", help="extract the phase barrier, write CSV")
    pb.add_argument("--problem", required=True)
    pb.add_argument("--solution", help="solution JSON from solve (else solve now)")
    pb.add_argument("--out", default="-")
    _add_tol_flags(pb)
    pb.set_defaults(func=cmd_barrier)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
