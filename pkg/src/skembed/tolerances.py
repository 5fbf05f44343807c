"""Central tolerance configuration.

Every numeric tolerance used by the solver and the verification layers
lives here so the defaults are pinned in one place.  All values are
absolute unless the name says otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # simplex
    feasibility: float = 1e-9        # primal residual per row
    optimality: float = 1e-9         # reduced-cost threshold
    pivot: float = 1e-10             # smallest acceptable pivot element
    # Half-width of the lexicographic face.  The optimal value is known to
    # ~1e-15 relative, and any width w lets the secondary solve shift mass
    # of order w / (reduced-cost gap) along the face, so the width must sit
    # far below the 1e-9 support tolerance for the monotonicity scans.
    lex_width: float = 1e-12

    # certificates / duality
    gap_rel: float = 1e-8            # |primal - dual| <= gap_rel * (1 + |primal|)
    cert_slack: float = 1e-8         # dual feasibility and complementary slackness

    # embedding solutions
    marginal_atom: float = 1e-9      # pushforward vs target, per atom
    support: float = 1e-9            # mass threshold defining supports
    mass_balance: float = 1e-12      # flow conservation checks

    # measures
    mean_equality: float = 1e-10
    potential_slack: float = 1e-12

    # generator-function grid checks (convexity/concavity)
    grid_shape: float = 1e-12

    def with_overrides(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT = Tolerances()
