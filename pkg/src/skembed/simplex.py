"""Self-contained sparse LP core: revised simplex with exact dual multipliers.

Minimizes c.x subject to A x = b, 0 <= x <= ub (ub optional, +inf default).
Two-phase start with artificial variables, Dantzig pricing with a Bland
fallback after a stall (anti-cycling), dense basis inverse maintained by
product-form updates with periodic refactorization.  Infeasibility is
reported with a Farkas certificate row vector; a lexicographic two-objective
solve restricts to the optimal face of the first objective.

No external solver is used anywhere; numpy provides the dense linear
algebra for refactorization only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import LPError, SolverStallError
from .tolerances import DEFAULT, Tolerances

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_REFACTOR_EVERY = 100
_RESIDUAL_CHECK_EVERY = 32
_STALL_LIMIT = 500


@dataclass
class StandardFormLP:
    """min c.x  s.t.  A x = b,  0 <= x <= ub  (A in triplet form)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    b: np.ndarray
    c: np.ndarray
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if not (len(self.rows) == len(self.cols) == len(self.vals)):
            raise LPError("triplet arrays must have equal length")
        if len(self.c) != self.n:
            raise LPError("objective length != n")
        if not np.all(np.isfinite(self.b)):
            raise LPError("right-hand side must be finite")
        if not np.all(np.isfinite(self.vals)):
            raise LPError("matrix entries must be finite")
        m = len(self.b)
        if len(self.rows) and (
            self.rows.min() < 0
            or self.rows.max() >= m
            or self.cols.min() < 0
            or self.cols.max() >= self.n
        ):
            raise LPError("triplet index out of range")
        if self.ub is None:
            self.ub = np.full(self.n, np.inf)
        else:
            self.ub = np.asarray(self.ub, dtype=np.float64)
            if len(self.ub) != self.n or np.any(self.ub < 0):
                raise LPError("upper bounds must be nonnegative, one per variable")
        self._csc = None

    @property
    def m(self):
        return len(self.b)

    def csc(self):
        """(indptr, indices, data) with duplicate triplets summed."""
        if self._csc is None:
            order = np.lexsort((self.rows, self.cols))
            r = self.rows[order]
            c = self.cols[order]
            v = self.vals[order]
            if len(r):
                new = np.empty(len(r), dtype=bool)
                new[0] = True
                new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
                grp = np.cumsum(new) - 1
                data = np.zeros(grp[-1] + 1)
                np.add.at(data, grp, v)
                rr = r[new]
                cc = c[new]
            else:
                data = np.zeros(0)
                rr = np.zeros(0, dtype=np.int64)
                cc = np.zeros(0, dtype=np.int64)
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            np.add.at(indptr, cc + 1, 1)
            indptr = np.cumsum(indptr)
            self._csc = (indptr, rr, data)
        return self._csc

    def column(self, j):
        indptr, indices, data = self.csc()
        sl = slice(indptr[j], indptr[j + 1])
        return indices[sl], data[sl]

    def dump(self):
        """MPS-like text dump for debugging (documented, not load-bearing)."""
        lines = [f"LP n={self.n} m={self.m}"]
        lines.append("OBJ " + " ".join(f"{v:.6g}" for v in self.c))
        lines.append("RHS " + " ".join(f"{v:.6g}" for v in self.b))
        indptr, indices, data = self.csc()
        for j in range(self.n):
            ent = " ".join(
                f"{indices[t]}:{data[t]:.6g}" for t in range(indptr[j], indptr[j + 1])
            )
            lines.append(f"COL {j} [{ent}]")
        return "\n".join(lines)


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float | None = None
    dual_objective: float | None = None
    farkas: np.ndarray | None = None
    iterations: int = 0
    phase1_objective: float = 0.0


_LB, _UB, _BASIC = 0, 1, 2


class _Simplex:
    def __init__(self, lp: StandardFormLP, tol: Tolerances):
        self.lp = lp
        self.tol = tol
        self.m = lp.m
        self.n = lp.n
        self.indptr, self.indices, self.data = lp.csc()
        self.sign_b = np.where(lp.b >= 0.0, 1.0, -1.0)
        self.total = self.n + self.m  # structural + artificial
        self.ub = np.concatenate([lp.ub, np.full(self.m, np.inf)])
        self.vstat = np.full(self.total, _LB, dtype=np.int8)
        self.basis = np.arange(self.n, self.total, dtype=np.int64)
        self.vstat[self.basis] = _BASIC
        self.binv = np.diag(self.sign_b).copy()
        self.xb = np.abs(lp.b).astype(np.float64)
        self.iterations = 0
        self.phase = 1
        self.force_bland = False
        self.c = np.zeros(self.total)
        self.c[self.n :] = 1.0
        self._rc_buf = np.zeros(self.n)

    # -- column access (structural or artificial) --------------------------------

    def col(self, j):
        if j < self.n:
            sl = slice(self.indptr[j], self.indptr[j + 1])
            return self.indices[sl], self.data[sl]
        r = j - self.n
        return np.array([r]), np.array([self.sign_b[r]])

    def ftran(self, j):
        rows, vals = self.col(j)
        return self.binv[:, rows] @ vals

    # -- invariant maintenance -----------------------------------------------------

    def b_effective(self):
        be = self.lp.b.astype(np.float64).copy()
        for j in np.nonzero(self.vstat == _UB)[0]:
            rows, vals = self.col(j)
            be[rows] -= vals * self.ub[j]
        return be

    def basis_matrix(self):
        B = np.zeros((self.m, self.m))
        for r, j in enumerate(self.basis):
            rows, vals = self.col(j)
            B[rows, r] = vals
        return B

    def refactorize(self):
        B = self.basis_matrix()
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SolverStallError(f"basis became singular: {exc}") from exc
        be = self.b_effective()
        self.xb = self.binv @ be
        # one step of iterative refinement (basis conditioning grows with
        # the lattice depth, plain solves lose ~cond * eps digits)
        self.xb += self.binv @ (be - B @ self.xb)

    def duals_refined(self):
        B = self.basis_matrix()
        cb = self.c[self.basis]
        y = cb @ self.binv
        for _ in range(2):
            y = y + (cb - y @ B) @ self.binv
        return y

    def residual(self):
        be = self.b_effective()
        for r, j in enumerate(self.basis):
            rows, vals = self.col(j)
            be[rows] -= vals * self.xb[r]
        return float(np.max(np.abs(be))) if self.m else 0.0

    # -- pricing ----------------------------------------------------------------------

    def duals(self):
        return self.c[self.basis] @ self.binv

    def price(self, y, bland, allow_artificial):
        _kernels.reduced_costs(
            self.c[: self.n], self.indptr, self.indices, self.data, y, self._rc_buf
        )
        rc = self._rc_buf
        eps = self.tol.optimality
        at_lb = self.vstat[: self.n] == _LB
        at_ub = self.vstat[: self.n] == _UB
        viol = np.zeros(self.n)
        viol[at_lb] = -rc[at_lb]
        viol[at_ub] = rc[at_ub]
        cands = np.nonzero(viol > eps)[0]
        best = -1
        if cands.size:
            best = int(cands[0]) if bland else int(cands[np.argmax(viol[cands])])
        if allow_artificial:
            # phase-1 artificials can re-enter only in pathological cases; skip
            pass
        if best < 0:
            return -1, rc
        return best, rc

    # -- pivoting ---------------------------------------------------------------------

    RETRY = "retry"

    def step(self, j, bland, fresh=False):
        """Pivot variable j in (or flip its bound). Returns status or None.

        Returns RETRY when the chosen pivot element is too small to trust
        on possibly drifted factors; the caller refactorizes and retries.
        """
        s = 1.0 if self.vstat[j] == _LB else -1.0
        d = self.ftran(j)
        piv = self.tol.pivot
        sd = s * d
        ub_b = self.ub[self.basis]
        ratios = np.full(self.m, np.inf)
        to_ub = np.zeros(self.m, dtype=bool)
        up = sd > piv
        if up.any():
            ratios[up] = self.xb[up] / sd[up]
        dn = (sd < -piv) & np.isfinite(ub_b)
        if dn.any():
            ratios[dn] = (self.xb[dn] - ub_b[dn]) / sd[dn]
            to_ub[dn] = True
        rmin = float(ratios.min()) if self.m else np.inf
        if np.isfinite(self.ub[j]) and self.ub[j] <= rmin:
            # bound-to-bound flip, no basis change
            self.xb -= self.ub[j] * sd
            self.vstat[j] = _UB if self.vstat[j] == _LB else _LB
            return None
        if not np.isfinite(rmin):
            return UNBOUNDED
        theta = max(rmin, 0.0)
        cand = np.nonzero(ratios <= rmin + 1e-13)[0]
        if bland:
            leave_r = int(cand[np.argmin(self.basis[cand])])
        else:
            leave_r = int(cand[np.argmax(np.abs(sd[cand]))])
        if abs(d[leave_r]) < 1e-7 and not fresh:
            return self.RETRY
        self.xb -= theta * sd
        leaving = self.basis[leave_r]
        self.vstat[leaving] = _UB if to_ub[leave_r] else _LB
        self.basis[leave_r] = j
        self.vstat[j] = _BASIC
        self.xb[leave_r] = theta if s > 0 else self.ub[j] - theta
        _kernels.rank1_update(self.binv, np.ascontiguousarray(d), leave_r)
        return None

    # -- main loop ----------------------------------------------------------------------

    def run(self):
        bland = self.force_bland
        stall = 0
        max_iter = 100 * (self.m + self.n) + 1000
        last_obj = np.inf
        since_refactor = 0
        fresh = False
        while True:
            if self.iterations >= max_iter:
                raise SolverStallError(
                    f"simplex exceeded {max_iter} iterations (phase {self.phase})"
                )
            if since_refactor >= _REFACTOR_EVERY or (
                since_refactor and since_refactor % _RESIDUAL_CHECK_EVERY == 0
                and self.residual() > 1e-9
            ):
                self.refactorize()
                since_refactor = 0
                fresh = True
            y = self.duals()
            j, _ = self.price(y, bland, allow_artificial=False)
            if j < 0:
                return OPTIMAL
            status = self.step(j, bland, fresh)
            if status == self.RETRY:
                self.refactorize()
                since_refactor = 0
                fresh = True
                continue
            fresh = False
            if status is not None:
                return status
            self.iterations += 1
            since_refactor += 1
            obj = float(self.c[self.basis] @ self.xb)
            if obj < last_obj - 1e-12 * (1.0 + abs(last_obj)):
                stall = 0
                bland = self.force_bland
            else:
                stall += 1
                if stall >= _STALL_LIMIT:
                    bland = True
            last_obj = obj

    def run_verified(self):
        """Iterate until optimality certified on freshly refactorized duals.

        Product-form updates drift; a solution is accepted only when a
        re-pricing after a from-scratch refactorization finds no entering
        candidate.
        """
        while True:
            status = self.run()
            if status != OPTIMAL:
                return status
            before = self.iterations
            self.refactorize()
            status = self.run()
            if status != OPTIMAL:
                return status
            if self.iterations == before:
                return OPTIMAL

    def drive_out_artificials(self):
        pr = np.zeros(self.n)
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            if abs(self.xb[r]) > self.tol.feasibility:
                continue
            # pr[j] = -(row_r of Binv) . A_j for every structural column
            _kernels.reduced_costs(
                np.zeros(self.n), self.indptr, self.indices, self.data, self.binv[r], pr
            )
            usable = (np.abs(pr) > 1e-7) & (self.vstat[: self.n] == _LB)
            js = np.nonzero(usable)[0]
            if js.size == 0:
                continue  # redundant row: artificial stays basic at zero, pinned
            j = int(js[0])
            d = self.ftran(j)
            leaving = self.basis[r]
            self.basis[r] = j
            self.vstat[j] = _BASIC
            self.vstat[leaving] = _LB
            self.xb[r] = 0.0
            _kernels.rank1_update(self.binv, np.ascontiguousarray(d), r)

    # -- extraction ------------------------------------------------------------------------

    def solution_x(self):
        x = np.zeros(self.n)
        at_ub = np.nonzero(self.vstat[: self.n] == _UB)[0]
        x[at_ub] = self.ub[at_ub]
        for r, j in enumerate(self.basis):
            if j < self.n:
                x[j] = self.xb[r]
        return x


def solve(lp: StandardFormLP, tol: Tolerances = DEFAULT, phase1_only=False) -> LPSolution:
    """Solve to proven optimality; deterministic for a fixed instance."""
    try:
        return _solve(lp, tol, phase1_only)
    except SolverStallError:
        # rare numerical trouble: retry once with maximally cautious settings
        global _REFACTOR_EVERY
        saved = _REFACTOR_EVERY
        _REFACTOR_EVERY = 25
        try:
            return _solve(lp, tol, phase1_only, bland_from_start=True)
        finally:
            _REFACTOR_EVERY = saved


def _solve(lp, tol, phase1_only=False, bland_from_start=False) -> LPSolution:
    sx = _Simplex(lp, tol)
    sx.force_bland = bland_from_start
    status = sx.run_verified()
    if status != OPTIMAL:  # pragma: no cover - phase 1 is always bounded
        raise SolverStallError("phase 1 terminated abnormally")
    w = float(sx.c[sx.basis] @ sx.xb)
    scale = 1.0 + float(np.abs(lp.b).max()) if lp.m else 1.0
    if w > tol.feasibility * scale:
        y = sx.duals()
        return LPSolution(status=INFEASIBLE, farkas=y.copy(), phase1_objective=w,
                          iterations=sx.iterations)
    if phase1_only:
        return LPSolution(status=OPTIMAL, phase1_objective=w, iterations=sx.iterations)
    sx.refactorize()
    sx.drive_out_artificials()
    sx.phase = 2
    sx.c = np.concatenate([lp.c, np.zeros(sx.m)])
    sx.ub[lp.n :] = 0.0  # pin any artificial still basic at zero
    status = sx.run_verified()
    if status == UNBOUNDED:
        return LPSolution(status=UNBOUNDED, iterations=sx.iterations)
    sx.refactorize()
    x = sx.solution_x()
    y = sx.duals()
    rc = np.zeros(lp.n)
    _kernels.reduced_costs(lp.c, *lp.csc(), y, rc)
    obj = float(lp.c @ x)
    at_ub = np.nonzero(sx.vstat[: lp.n] == _UB)[0]
    dual_obj = float(y @ lp.b) + float(rc[at_ub] @ lp.ub[at_ub])
    return LPSolution(
        status=OPTIMAL,
        x=x,
        y=y.copy(),
        reduced_costs=rc,
        objective=obj,
        dual_objective=dual_obj,
        iterations=sx.iterations,
    )


def solve_lexicographic(
    lp: StandardFormLP, c2: np.ndarray, tol: Tolerances = DEFAULT
) -> tuple[LPSolution, LPSolution]:
    """Minimize c2 over the (width 2*lex_width) optimal face of lp.

    Returns (primary solution, secondary solution); the secondary solution's
    objective is c2.x.  Implemented by appending the near-binding constraint
    c.x + s = opt1 + lex_width with 0 <= s <= 2*lex_width and re-solving.
    """
    first = solve(lp, tol)
    if first.status != OPTIMAL:
        return first, first
    w = tol.lex_width
    c2 = np.asarray(c2, dtype=np.float64)
    if len(c2) != lp.n:
        raise LPError("secondary objective length != n")
    nz = np.nonzero(lp.c)[0]
    rows2 = np.concatenate([lp.rows, np.full(len(nz) + 1, lp.m, dtype=np.int64)])
    cols2 = np.concatenate([lp.cols, nz, [lp.n]])
    vals2 = np.concatenate([lp.vals, lp.c[nz], [1.0]])
    lp2 = StandardFormLP(
        n=lp.n + 1,
        rows=rows2,
        cols=cols2,
        vals=vals2,
        b=np.concatenate([lp.b, [first.objective + w]]),
        c=np.concatenate([c2, [0.0]]),
        ub=np.concatenate([lp.ub, [2.0 * w]]),
    )
    second = solve(lp2, tol)
    if second.status == OPTIMAL:
        second.x = second.x[: lp.n]
        second.reduced_costs = second.reduced_costs[: lp.n]
        second.objective = float(c2 @ second.x)
    return first, second
