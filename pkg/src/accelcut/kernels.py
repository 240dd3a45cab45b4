"""Enumeration kernels behind the brute-force oracles.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one.  The
numba path is used unless the environment variable ``ACCELCUT_NUMBA`` is set
to ``0`` (or numba cannot be imported).  Both paths return identical results;
``benchmarks/bench_kernels.py`` times them against each other.
"""

from __future__ import annotations

import itertools
import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

SENSE_LE, SENSE_GE, SENSE_EQ = 0, 1, 2
_CHUNK = 1 << 14


def use_numba() -> bool:
    return HAS_NUMBA and os.environ.get("ACCELCUT_NUMBA", "1") != "0"


def _njit(fn):
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


# --------------------------------------------------------------------------
# TSP: exhaustive tour enumeration with city 0 fixed as the start
# --------------------------------------------------------------------------

@_njit
def _tsp_numba(cost):
    n = cost.shape[0]
    m = n - 1
    perm = np.arange(1, n)
    best_perm = perm.copy()
    best = np.inf
    c = np.zeros(m, dtype=np.int64)
    # Heap's algorithm, iterative form
    i = 0
    first = True
    while True:
        if first:
            first = False
        else:
            while i < m and c[i] >= i:
                c[i] = 0
                i += 1
            if i >= m:
                break
            if i % 2 == 0:
                tmp = perm[0]
                perm[0] = perm[i]
                perm[i] = tmp
            else:
                tmp = perm[c[i]]
                perm[c[i]] = perm[i]
                perm[i] = tmp
            c[i] += 1
            i = 0
        total = cost[0, perm[0]]
        for k in range(m - 1):
            total += cost[perm[k], perm[k + 1]]
        total += cost[perm[m - 1], 0]
        if total < best - 1e-12:
            best = total
            best_perm[:] = perm
    out = np.empty(n, dtype=np.int64)
    out[0] = 0
    out[1:] = best_perm
    return best, out


def _tsp_numpy(cost):
    n = cost.shape[0]
    best, best_perm = np.inf, None
    perms = itertools.permutations(range(1, n))
    while True:
        block = np.array(list(itertools.islice(perms, _CHUNK)), dtype=np.int64)
        if block.size == 0:
            break
        block = block.reshape(len(block), n - 1)
        total = cost[0, block[:, 0]] + cost[block[:, -1], 0]
        if n > 2:
            total = total + cost[block[:, :-1], block[:, 1:]].sum(axis=1)
        k = int(np.argmin(total))
        if total[k] < best - 1e-12:
            best, best_perm = float(total[k]), block[k]
    return best, np.concatenate([[0], best_perm]).astype(np.int64)


def tsp_best_tour(cost: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum tour cost and tour (0-based city order starting at city 0)."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if use_numba():
        best, perm = _tsp_numba(cost)
        return float(best), perm
    return _tsp_numpy(cost)


# --------------------------------------------------------------------------
# JSSP: enumerate orientations of disjunctive pairs, longest path schedule
# --------------------------------------------------------------------------

@_njit
def _jssp_numba(p, job_arcs, pairs):
    nops = p.shape[0]
    npairs = pairs.shape[0]
    narcs = job_arcs.shape[0] + npairs
    src = np.empty(narcs, dtype=np.int64)
    dst = np.empty(narcs, dtype=np.int64)
    for a in range(job_arcs.shape[0]):
        src[a] = job_arcs[a, 0]
        dst[a] = job_arcs[a, 1]
    best = np.inf
    best_mask = -1
    best_s = np.zeros(nops)
    s = np.zeros(nops)
    off = job_arcs.shape[0]
    for mask in range(1 << npairs):
        for q in range(npairs):
            if (mask >> q) & 1:
                src[off + q] = pairs[q, 0]
                dst[off + q] = pairs[q, 1]
            else:
                src[off + q] = pairs[q, 1]
                dst[off + q] = pairs[q, 0]
        s[:] = 0.0
        cyclic = True
        for _ in range(nops + 1):
            changed = False
            for a in range(narcs):
                t = s[src[a]] + p[src[a]]
                if t > s[dst[a]]:
                    s[dst[a]] = t
                    changed = True
            if not changed:
                cyclic = False
                break
        if cyclic:
            continue
        mk = 0.0
        for o in range(nops):
            if s[o] + p[o] > mk:
                mk = s[o] + p[o]
        if mk < best - 1e-12:
            best = mk
            best_mask = mask
            best_s[:] = s
    return best, best_mask, best_s


def _jssp_numpy(p, job_arcs, pairs):
    nops = p.shape[0]
    npairs = pairs.shape[0]
    best, best_mask, best_s = np.inf, -1, np.zeros(nops)
    total = 1 << npairs
    for start in range(0, total, _CHUNK):
        masks = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(npairs)[None, :]) & 1).astype(bool)
        s = np.zeros((len(masks), nops))
        stable = np.zeros(len(masks), dtype=bool)
        for _ in range(nops + 1):
            prev = s.copy()
            for a, b in job_arcs:
                np.maximum(s[:, b], s[:, a] + p[a], out=s[:, b])
            for q in range(npairs):
                a, b = pairs[q]
                fwd = bits[:, q]
                s[fwd, b] = np.maximum(s[fwd, b], s[fwd, a] + p[a])
                s[~fwd, a] = np.maximum(s[~fwd, a], s[~fwd, b] + p[b])
            stable = np.all(s == prev, axis=1)
            if stable.all():
                break
        mk = np.where(stable, (s + p[None, :]).max(axis=1), np.inf)
        k = int(np.argmin(mk))
        if mk[k] < best - 1e-12:
            best, best_mask, best_s = float(mk[k]), int(masks[k]), s[k].copy()
    return best, best_mask, best_s


def jssp_best_schedule(p, job_arcs, pairs) -> tuple[float, int, np.ndarray]:
    """Optimal makespan over all acyclic orientations.

    ``pairs[q] = (a, b)``; bit ``q`` of the returned mask is 1 when ``a``
    precedes ``b``.  Start times are the earliest (semi-active) schedule.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    job_arcs = np.ascontiguousarray(np.asarray(job_arcs, dtype=np.int64).reshape(-1, 2))
    pairs = np.ascontiguousarray(np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    if use_numba():
        best, mask, s = _jssp_numba(p, job_arcs, pairs)
        return float(best), int(mask), s
    return _jssp_numpy(p, job_arcs, pairs)


# --------------------------------------------------------------------------
# CWLP: enumerate single-source assignments
# --------------------------------------------------------------------------

@_njit
def _cwlp_numba(d, u, f, c):
    ni = d.shape[0]
    nj = u.shape[0]
    a = np.zeros(ni, dtype=np.int64)
    best = np.inf
    best_a = np.full(ni, -1, dtype=np.int64)
    min_open = nj + 1
    load = np.zeros(nj)
    while True:
        load[:] = 0.0
        for i in range(ni):
            load[a[i]] += d[i]
        ok = True
        for j in range(nj):
            if load[j] > u[j] + 1e-9:
                ok = False
                break
        if ok:
            cost = 0.0
            nopen = 0
            for j in range(nj):
                if load[j] > 0.0:
                    cost += f[j]
                    nopen += 1
            for i in range(ni):
                cost += c[i, a[i]]
            if cost < best - 1e-12:
                best = cost
                best_a[:] = a
            if nopen < min_open:
                min_open = nopen
        k = 0
        while k < ni:
            a[k] += 1
            if a[k] < nj:
                break
            a[k] = 0
            k += 1
        if k == ni:
            break
    return best, best_a, min_open


def _cwlp_numpy(d, u, f, c):
    ni, nj = d.shape[0], u.shape[0]
    total = nj ** ni
    best, best_a, min_open = np.inf, np.full(ni, -1, dtype=np.int64), nj + 1
    radix = nj ** np.arange(ni, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        a = (codes[:, None] // radix[None, :]) % nj
        onehot = a[:, :, None] == np.arange(nj)[None, None, :]
        load = (onehot * d[None, :, None]).sum(axis=1)
        ok = np.all(load <= u[None, :] + 1e-9, axis=1)
        if not ok.any():
            continue
        opened = load > 0.0
        cost = (opened * f[None, :]).sum(axis=1) + c[np.arange(ni)[None, :], a].sum(axis=1)
        cost = np.where(ok, cost, np.inf)
        k = int(np.argmin(cost))
        if cost[k] < best - 1e-12:
            best, best_a = float(cost[k]), a[k].copy()
        min_open = min(min_open, int(opened[ok].sum(axis=1).min()))
    return best, best_a, min_open


def cwlp_best_assignment(d, u, f, c) -> tuple[float, np.ndarray, int]:
    """Optimal cost, its assignment and the fewest open warehouses of any feasible assignment.

    A warehouse counts as open when at least one customer is assigned to it;
    opening an unused warehouse never helps since fixed costs are nonnegative.
    """
    d = np.ascontiguousarray(d, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    f = np.ascontiguousarray(f, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    if use_numba():
        best, a, mo = _cwlp_numba(d, u, f, c)
        return float(best), a, int(mo)
    return _cwlp_numpy(d, u, f, c)


# --------------------------------------------------------------------------
# Batch row evaluation: maximum violation of a row set per candidate point
# --------------------------------------------------------------------------

@_njit
def _violation_numba(indptr, indices, data, rhs, sense, x):
    npts = x.shape[0]
    nrows = rhs.shape[0]
    out = np.zeros(npts)
    for s in range(npts):
        worst = 0.0
        for r in range(nrows):
            act = 0.0
            for k in range(indptr[r], indptr[r + 1]):
                act += data[k] * x[s, indices[k]]
            if sense[r] == 0:
                v = act - rhs[r]
            elif sense[r] == 1:
                v = rhs[r] - act
            else:
                v = abs(act - rhs[r])
            if v > worst:
                worst = v
        out[s] = worst
    return out


def _violation_numpy(indptr, indices, data, rhs, sense, x):
    npts = x.shape[0]
    if rhs.shape[0] == 0:
        return np.zeros(npts)
    prod = x[:, indices] * data[None, :]
    lengths = np.diff(indptr)
    act = np.zeros((npts, rhs.shape[0]))
    nonempty = lengths > 0
    if prod.shape[1]:
        sums = np.add.reduceat(prod, indptr[:-1][nonempty], axis=1)
        act[:, nonempty] = sums
    v = np.where(sense[None, :] == 0, act - rhs[None, :],
                 np.where(sense[None, :] == 1, rhs[None, :] - act, np.abs(act - rhs[None, :])))
    return np.maximum(v.max(axis=1), 0.0)


def max_violation(indptr, indices, data, rhs, sense, points) -> np.ndarray:
    """Maximum row violation (>= 0) for every row of ``points`` against a CSR row set."""
    args = (np.ascontiguousarray(indptr, dtype=np.int64),
            np.ascontiguousarray(indices, dtype=np.int64),
            np.ascontiguousarray(data, dtype=np.float64),
            np.ascontiguousarray(rhs, dtype=np.float64),
            np.ascontiguousarray(sense, dtype=np.int64),
            np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64))
    if use_numba():
        return _violation_numba(*args)
    return _violation_numpy(*args)
