"""Exception types shared across the package."""


class SkembedError(Exception):
    """Base class for all package errors."""


class LatticeError(SkembedError):
    """Invalid lattice specification or path."""


class ResourceLimitError(SkembedError):
    """A configured size cap would be exceeded (never silently truncated)."""


class MeasureError(SkembedError):
    """Invalid discrete measure."""


class FeatureError(SkembedError):
    """A cost functional requires a feature the lattice does not track."""

    def __init__(self, missing, cost_name=""):
        self.missing = tuple(sorted(missing))
        self.cost_name = cost_name
        names = ", ".join(self.missing)
        super().__init__(
            f"cost {cost_name or '<unnamed>'} requires untracked feature(s): {names}"
        )


class CostError(SkembedError):
    """Generator function violates the shape hypotheses (convexity etc.)."""


class LPError(SkembedError):
    """Malformed linear program."""


class SolverStallError(SkembedError):
    """Simplex exceeded its iteration budget (should not happen in practice)."""


class InfeasibleError(SkembedError):
    """Embedding problem is infeasible at this horizon.

    Carries the Farkas certificate row vector ``farkas`` (y with y.b > 0 and
    y.A <= 0) and a human-readable ``hint``.  The certificate is the
    authoritative output; the hint is heuristic text only.
    """

    def __init__(self, message, farkas=None, hint=""):
        super().__init__(message)
        self.farkas = farkas
        self.hint = hint


class BarrierKindError(SkembedError):
    """Extracted support violates the declared barrier-kind invariant.

    This is a theorem-violation detector, not a repairable condition; it
    carries the offending level/phase coordinate.
    """

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)
