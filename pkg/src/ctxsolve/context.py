"""Closed-form context updates given identities and event assignments."""

from __future__ import annotations

import numpy as np

from .model import Collection, ContextParams, EventState, Hyperparams, IdentityState
from .potentials import label_counts


def update_prototypes(Y: EventState, c: Collection, previous: np.ndarray) -> np.ndarray:
    """Mean scene feature of each event's photos; empty events keep ``previous``."""
    K = previous.shape[0]
    out = np.array(previous, dtype=np.float64)
    for k in range(K):
        members = np.flatnonzero(Y.assignment == k)
        if len(members):
            out[k] = c.scenes[members].mean(axis=0)
    return out


def attendance_counts(X: IdentityState, Y: EventState, c: Collection, num_events: int) -> np.ndarray:
    """(K, L) identity counts over the photos of each event."""
    per_photo = label_counts(X, c)
    return Y.indicator(num_events).T @ per_photo


def smooth_distributions(counts: np.ndarray, eps: float) -> np.ndarray:
    L = counts.shape[1]
    return (counts + eps) / (counts.sum(axis=1, keepdims=True) + eps * L)


def update_identity_dists(X: IdentityState, Y: EventState, c: Collection, num_events: int, eps: float) -> np.ndarray:
    """Additively smoothed maximum-likelihood attendance distributions.

    An empty event has zero counts and so comes out uniform.
    """
    return smooth_distributions(attendance_counts(X, Y, c, num_events), eps)


def update_cooccurrence(X: IdentityState, c: Collection) -> np.ndarray:
    """Frobenius-normalized sum of outer products over ordered same-photo
    instance pairs; the zero matrix when no photo holds two people."""
    C = label_counts(X, c)
    Qp = C.T @ C - np.diag(C.sum(axis=0))
    norm = np.linalg.norm(Qp)
    if norm == 0:
        return np.zeros_like(Qp)
    return Qp / norm


def context_step(X: IdentityState, Y: EventState, ctx: ContextParams, c: Collection, h: Hyperparams) -> ContextParams:
    """Refit prototypes, attendance distributions and Q.

    A fresh smoothed distribution is only adopted when it scores at least as
    well as the incumbent on the current counts. Smoothing makes the closed
    form slightly suboptimal, and this keeps the objective from dipping.
    """
    K = ctx.num_events
    protos = update_prototypes(Y, c, ctx.scene_prototypes)
    counts = attendance_counts(X, Y, c, K)
    fresh = smooth_distributions(counts, h.dist_smoothing_eps)
    dists = np.array(ctx.identity_dists)
    if dists.shape == fresh.shape and np.all(dists > 0):
        new_ll = np.sum(counts * np.log(fresh), axis=1)
        old_ll = np.sum(counts * np.log(dists), axis=1)
        take = new_ll >= old_ll
        dists[take] = fresh[take]
    else:
        dists = fresh
    return ContextParams(protos, dists, update_cooccurrence(X, c))
