"""Seeded path sampling and empirical verification of the embedding.

All randomness is counter-based: the i-th sample's draws depend only on
(seed, i, step), so partitioning samples across workers and re-aggregating
reproduces the single-stream result exactly, and reports are bit-identical
across runs for a fixed seed.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SkembedError
from .measures import DiscreteMeasure
from .stopping import RandomizedStoppingTime


@dataclass
class SampleReport:
    n: int
    seed: int
    empirical: DiscreteMeasure
    kolmogorov: float
    tolerance: float
    passed: bool
    expected_time: float
    time_halfwidth: float
    cost_mean: float | None = None
    cost_halfwidth: float | None = None

    def to_json_obj(self):
        return {
            "n": self.n,
            "seed": self.seed,
            "empirical": self.empirical.to_json_obj(),
            "kolmogorov": self.kolmogorov,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "expected_time": self.expected_time,
            "time_halfwidth": self.time_halfwidth,
            "cost_mean": self.cost_mean,
            "cost_halfwidth": self.cost_halfwidth,
        }


def dkw_tolerance(n: int, floor: float = 0.01, alpha: float = 0.001) -> float:
    """sup-CDF tolerance from the DKW bound at confidence 1 - alpha."""
    return max(floor, math.sqrt(math.log(2.0 / alpha) / (2.0 * n)))


def sample_paths(xi: RandomizedStoppingTime, n: int, seed: int, workers: int = 1):
    """n i.i.d. stopped samples: arrays (state index, time index).

    Deterministic in (xi, n, seed); the worker count only partitions the
    counter-based stream and never changes the aggregate.
    """
    if n < 1:
        raise SkembedError("need at least one sample")
    g = xi.graph
    starts = g.start_indices.astype(np.int64)
    weights = np.array([w for _, w in xi.lam.atoms])
    start_cdf = np.cumsum(weights)
    start_cdf[-1] = 1.0
    # branch-0 cumulative probability per edge slot
    child_cdf = np.zeros(len(g.child_idx))
    for j in range(g.n_states):
        lo, hi = g.child_ptr[j], g.child_ptr[j + 1]
        if hi > lo:
            child_cdf[lo:hi] = np.cumsum(g.child_prob[lo:hi])
    out_state = np.full(n, -1, dtype=np.int64)
    out_k = np.full(n, -1, dtype=np.int64)

    def run_chunk(i0, cnt):
        _kernels.sample_paths_kernel(
            starts,
            start_cdf,
            g.child_ptr,
            g.child_idx,
            child_cdf,
            xi.p,
            g.k,
            g.horizon,
            np.uint64(seed),
            i0,
            cnt,
            out_state,
            out_k,
        )

    if workers <= 1:
        run_chunk(0, n)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(np.int64)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(run_chunk, int(bounds[w]), int(bounds[w + 1] - bounds[w]))
                for w in range(workers)
                if bounds[w + 1] > bounds[w]
            ]
            for f in futs:
                f.result()
    return out_state, out_k


def _empirical_measure(graph, states, n) -> DiscreteMeasure:
    levels = graph.x[states]
    vals, counts = np.unique(levels, return_counts=True)
    return DiscreteMeasure.from_pairs(
        (int(v), c / n) for v, c in zip(vals, counts)
    )


def kolmogorov_distance(emp: DiscreteMeasure, target: DiscreteMeasure) -> float:
    grid = sorted(emp.support | target.support)
    ce = ct = 0.0
    worst = 0.0
    for v in grid:
        ce += emp.weight(v)
        ct += target.weight(v)
        worst = max(worst, abs(ce - ct))
    return worst


def verify_embedding(
    xi: RandomizedStoppingTime,
    mu: DiscreteMeasure,
    n: int,
    seed: int,
    tol: float | None = None,
    cost=None,
    workers: int = 1,
) -> SampleReport:
    """Empirical test of B_tau ~ mu with a DKW-derived default tolerance."""
    states, ks = sample_paths(xi, n, seed, workers)
    g = xi.graph
    emp = _empirical_measure(g, states, n)
    dist = kolmogorov_distance(emp, mu)
    tolerance = dkw_tolerance(n) if tol is None else tol
    times = ks.astype(np.float64) * g.spec.time_step
    t_mean = float(times.mean())
    t_half = float(1.96 * times.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    cost_mean = cost_half = None
    if cost is not None:
        vals = cost.values(g)[states]
        cost_mean = float(vals.mean())
        cost_half = float(1.96 * vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SampleReport(
        n=n,
        seed=seed,
        empirical=emp,
        kolmogorov=dist,
        tolerance=tolerance,
        passed=dist <= tolerance,
        expected_time=t_mean,
        time_halfwidth=t_half,
        cost_mean=cost_mean,
        cost_halfwidth=cost_half,
    )


@dataclass
class CostEstimate:
    mean: float
    halfwidth: float
    n: int
    seed: int


def estimate_cost(xi, cost, n: int, seed: int, workers: int = 1) -> CostEstimate:
    """Monte Carlo mean of the cost at the stopped state, with a 95% CI."""
    states, _ = sample_paths(xi, n, seed, workers)
    vals = cost.values(xi.graph)[states]
    half = float(1.96 * vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CostEstimate(mean=float(vals.mean()), halfwidth=half, n=n, seed=seed)
