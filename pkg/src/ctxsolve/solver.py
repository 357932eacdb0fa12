"""Coordinate-ascent driver: identities -> events -> context, repeated."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .context import context_step, update_cooccurrence
from .errors import ConfigError, CtxSolveError
from .events import event_step
from .identity import MaxProductConfig, identity_step
from .model import Collection, ContextParams, EventState, Hyperparams, IdentityState
from .potentials import gallery_scores, objective_terms

log = logging.getLogger(__name__)

LLOYD_ITERATIONS = 10


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    visual: float
    event: float
    cooccurrence: float
    labels_changed: int
    events_changed: int
    wall_time: float

    def as_dict(self, timings: bool = False) -> dict:
        d = {
            "iteration": self.iteration,
            "objective": self.objective,
            "visual": self.visual,
            "event": self.event,
            "cooccurrence": self.cooccurrence,
            "labels_changed": self.labels_changed,
            "events_changed": self.events_changed,
        }
        if timings:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class SolverTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def num_iterations(self) -> int:
        return max(0, len(self.records) - 1)


@dataclass
class SolveResult:
    identities: IdentityState
    events: EventState
    context: ContextParams
    trace: SolverTrace
    table: np.ndarray


def kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator, iterations: int = LLOYD_ITERATIONS) -> np.ndarray:
    """k-means++ seeding followed by a fixed number of Lloyd iterations."""
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))
    for _ in range(iterations):
        dist = np.sum((points[:, None, :] - centers[None]) ** 2, axis=2)
        assign = dist.argmin(axis=1)
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
    return centers


def initialize(c: Collection, table: np.ndarray, h: Hyperparams, seed: int = 0):
    """Visual-only labels, k-means scene prototypes, uniform attendance,
    Q from the initial labels and one event step."""
    K, M = h.num_events, c.num_photos
    if K > M:
        raise ConfigError(f"{K} events requested for {M} photos")
    X0 = IdentityState.from_query(c, np.argmax(table, axis=1))
    rng = np.random.default_rng(seed)
    protos = kmeans_pp(c.scenes, K, rng)
    L = c.num_identities
    ctx0 = ContextParams(protos, np.full((K, L), 1.0 / L), update_cooccurrence(X0, c))
    Y0 = event_step(X0, ctx0, c, h)
    return X0, Y0, ctx0


def _record(it, X, Y, ctx, table, c, h, n_lab, n_ev, t0) -> IterationRecord:
    v, ep, pp = objective_terms(X, Y, ctx, table, c)
    J = v + h.alpha * ep + h.beta * pp
    return IterationRecord(it, J, v, ep, pp, n_lab, n_ev, time.perf_counter() - t0)


def run(
    c: Collection,
    S: np.ndarray,
    h: Hyperparams,
    seed: int = 0,
    mp_config: MaxProductConfig = MaxProductConfig(),
) -> SolveResult:
    """Alternate the three block updates until a fixed point or ``h.max_iterations``.

    The loop stops once an iteration leaves the labels unchanged and, when
    the event term is active (alpha > 0), also leaves the event assignment
    and the event parameters unchanged.
    """
    table = gallery_scores(S, c)
    X, Y, ctx = initialize(c, table, h, seed)
    trace = SolverTrace()
    t0 = time.perf_counter()
    trace.records.append(_record(0, X, Y, ctx, table, c, h, 0, 0, t0))
    log.info("iter=0 objective=%.12g", trace.records[-1].objective)

    for it in range(1, h.max_iterations + 1):
        try:
            X_new = identity_step(X, Y, ctx, table, c, h, mp_config)
            Y_new = event_step(X_new, ctx, c, h)
            ctx_new = context_step(X_new, Y_new, ctx, c, h)
        except CtxSolveError as err:
            err.args = (f"iteration {it}: {err}",) + err.args[1:]
            err.iteration = it
            raise
        n_lab = int(np.sum(X_new.labels != X.labels))
        n_ev = int(np.sum(Y_new.assignment != Y.assignment))
        same_events = (
            n_ev == 0
            and np.array_equal(ctx_new.scene_prototypes, ctx.scene_prototypes)
            and np.array_equal(ctx_new.identity_dists, ctx.identity_dists)
        )
        X, Y, ctx = X_new, Y_new, ctx_new
        rec = _record(it, X, Y, ctx, table, c, h, n_lab, n_ev, t0)
        trace.records.append(rec)
        log.info(
            "iter=%d objective=%.12g labels_changed=%d events_changed=%d", it, rec.objective, n_lab, n_ev
        )
        if n_lab == 0 and (h.alpha == 0 or same_events):
            trace.converged = True
            break
    return SolveResult(X, Y, ctx, trace, table)
