"""The three potential terms and the unified objective.

    J = visual + alpha * event + beta * cooccurrence

``visual`` sums, over query instances, the best gallery score of the
chosen identity (gallery rows are constant in X and are left out).
``event`` sums the affinity of every photo to its event, and
``cooccurrence`` sums Q over ordered pairs of distinct instances sharing a
photo. Everything else in the package must agree with these functions.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, StructuralError
from .model import Collection, ContextParams, EventState, Hyperparams, IdentityState


def gallery_scores(S: np.ndarray, c: Collection) -> np.ndarray:
    """(num_query, L) table: best score of each query against each identity's gallery."""
    S = np.asarray(S, dtype=np.float64)
    N = c.num_instances
    if S.shape != (N, N):
        raise StructuralError(f"score matrix shape {S.shape} does not match {N} instances")
    q = c.query_ids
    table = np.empty((len(q), c.num_identities))
    for l, members in enumerate(c.gallery_index):
        if len(members) == 0:
            raise StructuralError(f"identity {l} has no gallery instance")
        table[:, l] = S[np.ix_(q, members)].max(axis=1)
    return table


def label_counts(X: IdentityState, c: Collection) -> np.ndarray:
    """(M, L) number of instances of each identity in each photo."""
    counts = np.zeros((c.num_photos, c.num_identities))
    np.add.at(counts, (c.photo_of, X.labels), 1.0)
    return counts


def _log_dists(ctx: ContextParams) -> np.ndarray:
    P = ctx.identity_dists
    if np.any(P <= 0):
        raise NumericError("identity distribution has a zero entry; smoothing was not applied")
    return np.log(P)


def psi_v(X: IdentityState, table: np.ndarray, c: Collection) -> float:
    q = X.labels[c.query_ids]
    return float(table[np.arange(len(q)), q].sum())


def scene_sqdist(c: Collection, ctx: ContextParams) -> np.ndarray:
    """(M, K) squared distances between photo scenes and event prototypes."""
    diff = c.scenes[:, None, :] - ctx.scene_prototypes[None, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def affinity_matrix(X: IdentityState, ctx: ContextParams, c: Collection) -> np.ndarray:
    """(M, K) photo-event affinities: attendance log-likelihood minus
    squared scene distance."""
    return label_counts(X, c) @ _log_dists(ctx).T - scene_sqdist(c, ctx)


def event_affinity(photo_id: int, k: int, X: IdentityState, ctx: ContextParams, c: Collection) -> float:
    logp = _log_dists(ctx)[k]
    members = c.photos[photo_id].instance_ids
    attendance = sum(logp[X.labels[j]] for j in members)
    d = c.photos[photo_id].scene_feature - ctx.scene_prototypes[k]
    return float(attendance - np.dot(d, d))


def phi_ep(Y: EventState, X: IdentityState, ctx: ContextParams, c: Collection) -> float:
    on = np.flatnonzero(Y.assignment >= 0)
    if len(on) == 0:
        return 0.0
    A = affinity_matrix(X, ctx, c)
    return float(A[on, Y.assignment[on]].sum())


def phi_pp(X: IdentityState, c: Collection, Q: np.ndarray) -> float:
    # sum_i c_i^T Q c_i minus the j == j' diagonal terms
    C = label_counts(X, c)
    return float(np.einsum("ml,lk,mk->", C, Q, C) - C.sum(axis=0) @ np.diag(Q))


def objective_terms(X, Y, ctx, table, c) -> tuple[float, float, float]:
    return psi_v(X, table, c), phi_ep(Y, X, ctx, c), phi_pp(X, c, ctx.cooccurrence)


def objective(X, Y, ctx, table, c, h: Hyperparams) -> float:
    """Unified objective J. ``table`` comes from :func:`gallery_scores`."""
    v, ep, pp = objective_terms(X, Y, ctx, table, c)
    return v + h.alpha * ep + h.beta * pp
