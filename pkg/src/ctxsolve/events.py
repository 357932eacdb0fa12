"""Event assignment step.

Maximize ``sum_ik a[i, k] y[i, k]`` over 0/1 ``y`` with at most one event
per photo and between ``nu_min`` and ``nu_max`` photos per event. The
constraint matrix is that of a bipartite transportation problem, so the
LP optimum is integral; we solve it exactly as a min-cost flow:

    S* -> s                 cap M
    s -> photo i            cap 1,  cost 0
    photo i -> event k      cap 1,  cost -a[i, k]
    event k -> t            cap nu_max - nu_min   (lower bound nu_min removed)
    event k -> T*           cap nu_min
    t -> T*                 cap M - K * nu_min
    s -> t                  cap M   (abstention bypass, optional)

A feasible assignment exists iff the max flow from S* to T* equals M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, StructuralError
from .model import UNASSIGNED, Collection, ContextParams, EventState, Hyperparams, IdentityState
from .potentials import affinity_matrix


@dataclass(frozen=True, eq=False)
class EventLP:
    affinity: np.ndarray  # (M, K)
    nu_min: int
    nu_max: int
    assign_all: bool = False

    @property
    def num_photos(self) -> int:
        return self.affinity.shape[0]

    @property
    def num_events(self) -> int:
        return self.affinity.shape[1]

    def check(self) -> None:
        M, K = self.affinity.shape
        if not np.all(np.isfinite(self.affinity)):
            raise NumericError("event affinities must be finite")
        if not 0 <= self.nu_min <= self.nu_max:
            raise ConfigError(f"need 0 <= nu_min <= nu_max, got {self.nu_min}, {self.nu_max}")
        if K * self.nu_min > M:
            raise ConfigError(f"K * nu_min = {K * self.nu_min} exceeds the {M} photos")
        if self.assign_all and K * self.nu_max < M:
            raise ConfigError(f"K * nu_max = {K * self.nu_max} cannot hold all {M} photos")


def build_event_lp(X: IdentityState, ctx: ContextParams, c: Collection, h: Hyperparams) -> EventLP:
    M = c.num_photos
    lp = EventLP(affinity_matrix(X, ctx, c), h.nu_min, h.resolve_nu_max(M), h.assign_all_photos)
    lp.check()
    return lp


def _flow_network(lp: EventLP):
    """Dense residual network whose min-cost flow of value M is the LP optimum.

    Node layout: source 0, photos 1..M, events M+1..M+K, sink M+K+1, then a
    super source and super sink that turn the lower bounds into saturated
    arcs. Returns (cap, cost, super_source, super_sink, M).
    """
    A = lp.affinity
    M, K = A.shape
    s, t, S, T = 0, M + K + 1, M + K + 2, M + K + 3
    V = M + K + 4
    photos = np.arange(1, M + 1)
    events = np.arange(M + 1, M + K + 1)
    cap = np.zeros((V, V), dtype=np.int64)
    cost = np.zeros((V, V))

    cap[S, s] = M
    cap[s, photos] = 1
    cap[np.ix_(photos, events)] = 1
    cost[np.ix_(photos, events)] = -A
    cost[np.ix_(events, photos)] = A.T
    cap[events, t] = lp.nu_max - lp.nu_min
    cap[events, T] = lp.nu_min
    cap[t, T] = M - K * lp.nu_min
    if not lp.assign_all:
        cap[s, t] = M
    return cap, cost, S, T, M


def solve_event_lp(lp: EventLP) -> tuple[EventState, float]:
    """Exact 0/1 optimum of the event program and its value."""
    lp.check()
    A = lp.affinity
    M, K = A.shape
    cap, cost, S, T, demand = _flow_network(lp)
    photos = np.arange(1, M + 1)
    events = np.arange(M + 1, M + K + 1)
    flow, _ = kernels.min_cost_flow(cap, cost, S, T, demand)
    if flow < M:
        raise StructuralError("event program is infeasible for the given bounds")
    # a used photo -> event arc leaves residual capacity on its reverse arc
    used = cap[np.ix_(events, photos)].T == 1
    assignment = np.full(M, UNASSIGNED, dtype=np.int64)
    rows, cols = np.nonzero(used)
    assignment[rows] = cols
    value = float(A[rows, cols].sum())
    return EventState(assignment), value


def event_step(X: IdentityState, ctx: ContextParams, c: Collection, h: Hyperparams) -> EventState:
    return solve_event_lp(build_event_lp(X, ctx, c, h))[0]
