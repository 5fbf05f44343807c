"""Optimal Skorokhod embedding on random-walk lattices.

Cost-minimizing randomized stopping times as linear programs, optimality
certified by LP duality, barrier structure extraction in the cost's phase
space, stop-go (monotonicity) verification, and seeded Monte Carlo checks
of the embedding property.
"""

from ._kernels import BACKEND
from .costs import (
    CATALOG,
    CostFunctional,
    azema_yor_cost,
    cave_cost,
    jacka_cost,
    perkins_cost,
    range_cost,
    root_cost,
    rost_cost,
    sg_pair,
    vallois_cost,
)
from .errors import (
    BarrierKindError,
    CostError,
    FeatureError,
    InfeasibleError,
    LatticeError,
    LPError,
    MeasureError,
    ResourceLimitError,
    SkembedError,
)
from .lattice import (
    AugmentedState,
    LatticeSpec,
    StateGraph,
    child_states,
    enumerate_reachable,
    path_prefix_state,
)
from .measures import DiscreteMeasure, convex_order, moment, potential, quantile_coupling
from .optsep import (
    DualCertificate,
    EmbeddingProblem,
    OptimalSolution,
    assemble_lp,
    certificate_check,
    feasibility_check,
    induced_coupling,
    soft,
    solve,
    solve_pathtree_oracle,
    verify_monotonicity,
)
from .barriers import (
    PhaseBarrier,
    export_barrier,
    export_barrier_csv,
    extract_barrier,
    hitting_rst,
    loynes_compare,
)
from .montecarlo import (
    SampleReport,
    dkw_tolerance,
    estimate_cost,
    sample_paths,
    verify_embedding,
)
from .stopping import RandomizedStoppingTime, from_stop_probabilities, stop_at_fixed_time
from .tolerances import DEFAULT, Tolerances

__version__ = "0.1.0"
