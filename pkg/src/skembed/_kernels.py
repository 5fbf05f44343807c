"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The backend is fixed at import time.  By default numba is used when it
imports cleanly; set ``SKEMBED_BACKEND=numpy`` to force the fallback or
``SKEMBED_BACKEND=numba`` to insist on the jitted path.  Both paths
implement identical operations (the Monte Carlo streams are bit-identical
because all randomness comes from integer hashing); the simplex linear
algebra may differ across backends by float rounding only.

``benchmarks/bench_backends.py`` times the two paths against each other.
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("SKEMBED_BACKEND", "auto").strip().lower()
if _FLAG not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"SKEMBED_BACKEND must be auto|numba|numpy, got {_FLAG!r}")

HAS_NUMBA = False
if _FLAG != "numpy":
    try:
        import numba

        HAS_NUMBA = True
    except ImportError:
        if _FLAG == "numba":
            raise
USE_NUMBA = HAS_NUMBA and _FLAG != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# counter-based RNG (splitmix64 finalizer)
#
# Every uniform is a pure function of (seed, stream, counter), so sample
# streams can be partitioned across workers and re-aggregated exactly.
# ---------------------------------------------------------------------------

_PHI1 = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix64_np(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def uniform_np(seed, stream, counter):
    """Vectorized counter-based uniform in [0, 1)."""
    z = (
        np.uint64(seed) * _PHI1
        + np.asarray(stream, dtype=np.uint64) * _MIX1
        + np.asarray(counter, dtype=np.uint64) * _MIX2
        + _PHI1
    )
    z = _mix64_np(z * _PHI1 + _PHI1)
    return ((z >> np.uint64(11)).astype(np.float64)) * _U53


# ---------------------------------------------------------------------------
# numpy fallback implementations
# ---------------------------------------------------------------------------


def _rank1_update_np(binv, d, r):
    """In-place product-form update of a basis inverse after a pivot.

    Column r of the basis is replaced by the column whose ftran image is d.
    """
    row = binv[r] / d[r]
    binv -= np.outer(d, row)
    binv[r] = row


def _reduced_costs_np(c, indptr, indices, data, y, out):
    """out[j] = c[j] - y . A[:, j] for every column of the CSC matrix."""
    n = len(c)
    if len(data) == 0:
        out[:] = c
        return
    prod = data * y[indices]
    col = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.subtract(c, np.bincount(col, weights=prod, minlength=n), out=out)


def _propagate_np(level_eptr, src, dst, prob, lam, p, a, cont):
    """Forward mass flow through the state DAG, one time level at a time.

    level_eptr[k]:level_eptr[k+1] slices the edge arrays to the edges whose
    source lives at time level k.  ``a`` must be preloaded with ``lam``.
    """
    nlev = len(level_eptr) - 1
    for k in range(nlev):
        lo, hi = level_eptr[k], level_eptr[k + 1]
        if lo == hi:
            continue
        s = src[lo:hi]
        cont[s] = a[s] * (1.0 - p[s])
        np.add.at(a, dst[lo:hi], cont[s] * prob[lo:hi])


def _sample_paths_np(
    start_states,
    start_cdf,
    child_ptr,
    child_idx,
    child_cdf,
    p,
    k_of,
    horizon,
    seed,
    i0,
    n,
    out_state,
    out_k,
):
    """Vectorized path sampler for samples i0 .. i0+n-1 (counter-based RNG)."""
    streams = np.arange(i0, i0 + n, dtype=np.uint64)
    u = uniform_np(seed, streams, 0)
    cur = start_states[np.searchsorted(start_cdf, u, side="right")].copy()
    alive = np.ones(n, dtype=bool)
    for step in range(horizon + 1):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        st = cur[idx]
        u = uniform_np(seed, streams[idx], 1 + 2 * step)
        stop = u < p[st]
        stopping = idx[stop]
        out_state[i0 + stopping] = cur[stopping]
        out_k[i0 + stopping] = k_of[cur[stopping]]
        alive[stopping] = False
        moving = idx[~stop]
        if moving.size == 0:
            continue
        st = cur[moving]
        u = uniform_np(seed, streams[moving], 2 + 2 * step)
        base = child_ptr[st]
        nch = child_ptr[st + 1] - base
        # binary kernels: take the second branch when u falls past branch 0
        take_second = (nch > 1) & (u >= child_cdf[base])
        cur[moving] = child_idx[base + take_second.astype(np.int64)]


def _sg_scan_np(go_feat, st_feat, mode, t0_idx, horizon):
    """All (going, stopped) index pairs violating a stop-go predicate.

    Feature rows are (k, x, coord[, coord2]).  Pairs require equal x;
    stopped states at the horizon are excluded because no continuation can
    be transplanted onto them on a finite lattice.

    Modes: 0 going coord > stopped coord, 1 going < stopped, 2 cave split
    at t0_idx, 4 going componentwise <= stopped with one strict,
    5 the reverse.
    """
    pairs = []
    if len(go_feat) == 0 or len(st_feat) == 0:
        return pairs
    interior = np.nonzero(st_feat[:, 0] < horizon)[0]
    st = st_feat[interior]
    for gi in range(len(go_feat)):
        g = go_feat[gi]
        snz = np.nonzero(st[:, 1] == g[1])[0]
        if snz.size == 0:
            continue
        s = st[snz]
        if mode == 0:
            bad = g[2] > s[:, 2]
        elif mode == 1:
            bad = g[2] < s[:, 2]
        elif mode == 2:
            bad = ((g[2] < s[:, 2]) & (s[:, 2] <= t0_idx)) | (
                (t0_idx <= s[:, 2]) & (s[:, 2] < g[2])
            )
        elif mode == 4:
            le = (g[2] <= s[:, 2]) & (g[3] <= s[:, 3])
            bad = le & ((g[2] < s[:, 2]) | (g[3] < s[:, 3]))
        elif mode == 5:
            ge = (g[2] >= s[:, 2]) & (g[3] >= s[:, 3])
            bad = ge & ((g[2] > s[:, 2]) | (g[3] > s[:, 3]))
        else:
            raise ValueError(f"unknown sg mode {mode}")
        for sj in np.nonzero(bad)[0]:
            pairs.append((gi, int(interior[snz[sj]])))
    return pairs


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _mix64(z):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    @njit(cache=True)
    def _uniform(seed, stream, counter):
        z = (
            np.uint64(seed) * _PHI1
            + np.uint64(stream) * _MIX1
            + np.uint64(counter) * _MIX2
            + _PHI1
        )
        z = _mix64(z * _PHI1 + _PHI1)
        return np.float64(z >> np.uint64(11)) * _U53

    @njit(cache=True)
    def _rank1_update_nb(binv, d, r):
        m = binv.shape[0]
        piv = d[r]
        for j in range(m):
            binv[r, j] /= piv
        for i in range(m):
            if i == r:
                continue
            di = d[i]
            if di != 0.0:
                for j in range(m):
                    binv[i, j] -= di * binv[r, j]

    @njit(cache=True)
    def _reduced_costs_nb(c, indptr, indices, data, y, out):
        n = len(c)
        for j in range(n):
            acc = 0.0
            for t in range(indptr[j], indptr[j + 1]):
                acc += data[t] * y[indices[t]]
            out[j] = c[j] - acc

    @njit(cache=True)
    def _propagate_nb(level_eptr, src, dst, prob, lam, p, a, cont):
        nlev = len(level_eptr) - 1
        for k in range(nlev):
            for e in range(level_eptr[k], level_eptr[k + 1]):
                s = src[e]
                cont[s] = a[s] * (1.0 - p[s])
                a[dst[e]] += cont[s] * prob[e]

    @njit(cache=True)
    def _sample_paths_nb(
        start_states,
        start_cdf,
        child_ptr,
        child_idx,
        child_cdf,
        p,
        k_of,
        horizon,
        seed,
        i0,
        n,
        out_state,
        out_k,
    ):
        for i in range(n):
            stream = np.uint64(i0 + i)
            u = _uniform(seed, stream, np.uint64(0))
            lo = 0
            hi = len(start_cdf)
            while lo < hi:  # searchsorted, side='right'
                mid = (lo + hi) // 2
                if u < start_cdf[mid]:
                    hi = mid
                else:
                    lo = mid + 1
            cur = start_states[lo]
            for step in range(horizon + 1):
                u = _uniform(seed, stream, np.uint64(1 + 2 * step))
                if u < p[cur]:
                    break
                u = _uniform(seed, stream, np.uint64(2 + 2 * step))
                base = child_ptr[cur]
                if child_ptr[cur + 1] - base > 1 and u >= child_cdf[base]:
                    cur = child_idx[base + 1]
                else:
                    cur = child_idx[base]
            out_state[i0 + i] = cur
            out_k[i0 + i] = k_of[cur]


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    rank1_update = _rank1_update_nb
    reduced_costs = _reduced_costs_nb
    propagate = _propagate_nb
    sample_paths_kernel = _sample_paths_nb
else:
    rank1_update = _rank1_update_np
    reduced_costs = _reduced_costs_np
    propagate = _propagate_np
    sample_paths_kernel = _sample_paths_np

sg_scan = _sg_scan_np  # the pair scan is numpy-vectorized on both backends

NUMPY_IMPLS = {
    "rank1_update": _rank1_update_np,
    "reduced_costs": _reduced_costs_np,
    "propagate": _propagate_np,
    "sample_paths_kernel": _sample_paths_np,
}
NUMBA_IMPLS = (
    {
        "rank1_update": _rank1_update_nb,
        "reduced_costs": _reduced_costs_nb,
        "propagate": _propagate_nb,
        "sample_paths_kernel": _sample_paths_nb,
    }
    if USE_NUMBA
    else {}
)
