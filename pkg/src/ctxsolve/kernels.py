"""Hot inner loops: dense min-cost flow and max-product message passing.

Every kernel exists twice. The ``*_loops`` variants are written in the
numba subset and get compiled with ``@njit``; the ``*_numpy`` variants are
vectorized equivalents used when numba is missing or when the environment
sets ``CTXSOLVE_DISABLE_JIT=1``. Both follow the same operation order, so
they return the same answers (see ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_DISABLED = os.environ.get("CTXSOLVE_DISABLE_JIT", "0").lower() not in ("", "0", "false", "no")
USE_JIT = numba is not None and not JIT_DISABLED

INF = np.inf


def _njit(fn):
    if not USE_JIT:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# min-cost flow on a dense residual graph
# ---------------------------------------------------------------------------


def _bellman_ford_loops(cap, cost, source):
    V = cap.shape[0]
    dist = np.full(V, INF)
    dist[source] = 0.0
    for _ in range(V):
        changed = False
        for u in range(V):
            if dist[u] == INF:
                continue
            for v in range(V):
                if cap[u, v] > 0:
                    nd = dist[u] + cost[u, v]
                    if nd < dist[v]:
                        dist[v] = nd
                        changed = True
        if not changed:
            break
    for v in range(V):
        if dist[v] == INF:
            dist[v] = 0.0
    return dist


def _dijkstra_loops(cap, cost, pot, source):
    V = cap.shape[0]
    dist = np.full(V, INF)
    prev = np.full(V, -1, dtype=np.int64)
    done = np.zeros(V, dtype=np.bool_)
    dist[source] = 0.0
    for _ in range(V):
        u = -1
        best = INF
        for v in range(V):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for v in range(V):
            if cap[u, v] > 0 and not done[v]:
                nd = dist[u] + cost[u, v] + pot[u] - pot[v]
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = u
    return dist, prev


def _augment_loops(cap, cost, prev, source, sink, limit):
    f = limit
    v = sink
    while v != source:
        u = prev[v]
        if cap[u, v] < f:
            f = cap[u, v]
        v = u
    total = 0.0
    v = sink
    while v != source:
        u = prev[v]
        cap[u, v] -= f
        cap[v, u] += f
        total += f * cost[u, v]
        v = u
    return f, total


_bellman_ford_loops = _njit(_bellman_ford_loops)
_dijkstra_loops = _njit(_dijkstra_loops)
_augment_loops = _njit(_augment_loops)


def _min_cost_flow_loops(cap, cost, source, sink, demand):
    pot = _bellman_ford_loops(cap, cost, source)
    flow = 0
    total = 0.0
    while flow < demand:
        dist, prev = _dijkstra_loops(cap, cost, pot, source)
        if dist[sink] == INF:
            break
        for v in range(cap.shape[0]):
            if dist[v] < INF:
                pot[v] += dist[v]
        f, c = _augment_loops(cap, cost, prev, source, sink, demand - flow)
        flow += f
        total += c
    return flow, total


def _bellman_ford_numpy(cap, cost, source):
    V = cap.shape[0]
    dist = np.full(V, INF)
    dist[source] = 0.0
    open_arc = cap > 0
    for _ in range(V):
        cand = np.where(open_arc, dist[:, None] + cost, INF).min(axis=0)
        better = cand < dist
        if not better.any():
            break
        dist = np.where(better, cand, dist)
    dist[dist == INF] = 0.0
    return dist


def _dijkstra_numpy(cap, cost, pot, source):
    V = cap.shape[0]
    dist = np.full(V, INF)
    prev = np.full(V, -1, dtype=np.int64)
    done = np.zeros(V, dtype=bool)
    dist[source] = 0.0
    for _ in range(V):
        masked = np.where(done, INF, dist)
        u = int(np.argmin(masked))
        if masked[u] == INF:
            break
        done[u] = True
        nd = dist[u] + cost[u] + pot[u] - pot
        upd = (cap[u] > 0) & ~done & (nd < dist)
        dist[upd] = nd[upd]
        prev[upd] = u
    return dist, prev


def _min_cost_flow_numpy(cap, cost, source, sink, demand):
    pot = _bellman_ford_numpy(cap, cost, source)
    flow = 0
    total = 0.0
    while flow < demand:
        dist, prev = _dijkstra_numpy(cap, cost, pot, source)
        if dist[sink] == INF:
            break
        reached = dist < INF
        pot[reached] += dist[reached]
        # path walk is O(path length); plain Python is fine here
        f, c = _augment_loops(cap, cost, prev, source, sink, demand - flow)
        flow += int(f)
        total += c
    return flow, total


min_cost_flow_jit = _njit(_min_cost_flow_loops)
min_cost_flow_numpy = _min_cost_flow_numpy


def min_cost_flow(cap, cost, source, sink, demand):
    """Push up to ``demand`` units from source to sink at minimum cost.

    ``cap`` (int64, V x V) is the residual capacity matrix and is updated
    in place; ``cost`` must be antisymmetric on arcs that can carry flow in
    both directions. Returns ``(flow, total_cost)``.
    """
    cap = np.ascontiguousarray(cap, dtype=np.int64) if cap.dtype != np.int64 else cap
    if USE_JIT:
        flow, total = min_cost_flow_jit(cap, cost, source, sink, demand)
    else:
        flow, total = min_cost_flow_numpy(cap, cost, source, sink, demand)
    return int(flow), float(total)


# ---------------------------------------------------------------------------
# max-product on a fully connected pairwise graph
# ---------------------------------------------------------------------------


def _max_product_loops(unary, theta, damping, max_sweeps, tol):
    n, L = unary.shape
    msg = np.zeros((n, n, L))
    new = np.zeros((n, n, L))
    h = np.zeros((n, L))
    converged = False
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        for i in range(n):
            for l in range(L):
                acc = unary[i, l]
                for k in range(n):
                    acc += msg[k, i, l]
                h[i, l] = acc
        delta = 0.0
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                top = -INF
                for lj in range(L):
                    best = -INF
                    for li in range(L):
                        val = h[i, li] - msg[j, i, li] + theta[li, lj]
                        if val > best:
                            best = val
                    new[i, j, lj] = best
                    if best > top:
                        top = best
                for lj in range(L):
                    damped = damping * msg[i, j, lj] + (1.0 - damping) * (new[i, j, lj] - top)
                    d = abs(damped - msg[i, j, lj])
                    if d > delta:
                        delta = d
                    new[i, j, lj] = damped
        for i in range(n):
            for j in range(n):
                if i != j:
                    for l in range(L):
                        msg[i, j, l] = new[i, j, l]
        if delta < tol:
            converged = True
            break
    belief = np.zeros((n, L))
    for i in range(n):
        for l in range(L):
            acc = unary[i, l]
            for k in range(n):
                acc += msg[k, i, l]
            belief[i, l] = acc
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        best = belief[i, 0]
        arg = 0
        for l in range(1, L):
            if belief[i, l] > best:
                best = belief[i, l]
                arg = l
        labels[i] = arg
    return labels, converged, sweeps


def _max_product_numpy(unary, theta, damping, max_sweeps, tol):
    n, L = unary.shape
    msg = np.zeros((n, n, L))
    off = ~np.eye(n, dtype=bool)
    converged = False
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        h = unary + msg.sum(axis=0)
        # cavity[i, j] = h[i] - msg[j -> i]
        cavity = h[:, None, :] - msg.transpose(1, 0, 2)
        raw = (cavity[:, :, :, None] + theta[None, None, :, :]).max(axis=2)
        raw = raw - raw.max(axis=2, keepdims=True)
        damped = damping * msg + (1.0 - damping) * raw
        damped[~off] = 0.0
        delta = np.abs(damped - msg)[off].max() if n > 1 else 0.0
        msg = damped
        if delta < tol:
            converged = True
            break
    belief = unary + msg.sum(axis=0)
    return belief.argmax(axis=1).astype(np.int64), converged, sweeps


max_product_jit = _njit(_max_product_loops)
max_product_numpy = _max_product_numpy


def max_product(unary, theta, damping=0.5, max_sweeps=50, tol=1e-6):
    """Damped synchronous max-product; returns ``(labels, converged, sweeps)``.

    ``unary`` is (n, L); ``theta`` (L, L) is the symmetric potential shared
    by every unordered node pair. Messages are log-domain with max entry 0.
    """
    unary = np.ascontiguousarray(unary, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if USE_JIT:
        labels, conv, sweeps = max_product_jit(unary, theta, float(damping), int(max_sweeps), float(tol))
    else:
        labels, conv, sweeps = max_product_numpy(unary, theta, float(damping), int(max_sweeps), float(tol))
    return labels, bool(conv), int(sweeps)
