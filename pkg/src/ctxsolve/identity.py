"""Identity coordinate step.

With events and context fixed, the objective splits into independent
per-photo problems. Each photo becomes a small fully connected pairwise
MRF over its query instances: unaries carry the gallery scores, the event
prior and the co-occurrence with gallery instances of the same photo; every
pair of query nodes shares the potential ``beta * (Q + Q^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericError, SizeError, StructuralError
from .model import Collection, ContextParams, EventState, Hyperparams, IdentityState

EXACT_NODE_CAP = 4
EXACT_STATE_CAP = 200_000


@dataclass(frozen=True, eq=False)
class PhotoMRF:
    nodes: np.ndarray  # instance ids of the query nodes
    unary: np.ndarray  # (n, L)
    pairwise: np.ndarray  # (L, L), beta * Q

    @property
    def edge(self) -> np.ndarray:
        """Potential of one unordered node pair (both orderings counted)."""
        return self.pairwise + self.pairwise.T

    def score(self, labels) -> float:
        """Photo sub-objective restricted to the terms that depend on the query labels."""
        labels = np.asarray(labels)
        n = len(labels)
        total = float(self.unary[np.arange(n), labels].sum())
        edge = self.edge
        for i in range(n):
            for j in range(i + 1, n):
                total += edge[labels[i], labels[j]]
        return total


@dataclass(frozen=True)
class MaxProductConfig:
    damping: float = 0.5
    max_sweeps: int = 50
    tol: float = 1e-6


def build_photo_mrf(photo_id, X: IdentityState, Y: EventState, ctx: ContextParams, table, c: Collection, h: Hyperparams):
    members = np.array(c.photos[photo_id].instance_ids, dtype=np.int64)
    is_gallery = c.gallery_mask[members]
    nodes = members[~is_gallery]
    rows = np.searchsorted(c.query_ids, nodes)
    unary = np.array(table[rows], dtype=np.float64)
    k = Y.assignment[photo_id]
    if k >= 0 and h.alpha > 0:
        P = ctx.identity_dists[k]
        if np.any(P <= 0):
            raise NumericError(f"identity distribution of event {k} has a zero entry")
        unary += h.alpha * np.log(P)
    Q = ctx.cooccurrence
    pairwise = h.beta * Q
    for g in members[is_gallery]:
        lg = X.labels[g]
        unary += pairwise[:, lg] + pairwise[lg, :]
    return PhotoMRF(nodes, unary, np.array(pairwise))


def solve_single(mrf: PhotoMRF) -> int:
    if mrf.unary.shape[0] != 1:
        raise StructuralError("solve_single needs exactly one query node")
    return int(np.argmax(mrf.unary[0]))


def solve_exact(mrf: PhotoMRF, node_cap: int = EXACT_NODE_CAP, state_cap: int = EXACT_STATE_CAP) -> np.ndarray:
    """Exhaustive maximization; ties go to the lexicographically smallest labeling."""
    n, L = mrf.unary.shape
    if n > node_cap or L**n > state_cap:
        raise SizeError(f"{n} nodes x {L} labels exceeds the exact caps; use max-product")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    energy = np.zeros((L,) * n)
    for i in range(n):
        shape = [1] * n
        shape[i] = L
        energy = energy + mrf.unary[i].reshape(shape)
    edge = mrf.edge
    for i in range(n):
        for j in range(i + 1, n):
            shape = [1] * n
            shape[i] = shape[j] = L
            energy = energy + edge.reshape(shape)
    best = int(np.argmax(energy))
    return np.array(np.unravel_index(best, energy.shape), dtype=np.int64)


def solve_max_product(mrf: PhotoMRF, config: MaxProductConfig = MaxProductConfig()):
    """Returns ``(labels, converged)``."""
    labels, converged, _ = kernels.max_product(mrf.unary, mrf.edge, config.damping, config.max_sweeps, config.tol)
    return labels, converged


def solve_photo(mrf: PhotoMRF, config: MaxProductConfig = MaxProductConfig()) -> np.ndarray:
    n, L = mrf.unary.shape
    if n == 1:
        return np.array([solve_single(mrf)], dtype=np.int64)
    if n <= EXACT_NODE_CAP and L**n <= EXACT_STATE_CAP:
        return solve_exact(mrf)
    return solve_max_product(mrf, config)[0]


def identity_step(X, Y, ctx, table, c: Collection, h: Hyperparams, config: MaxProductConfig = MaxProductConfig()):
    """Re-solve every photo; keep the incumbent labels unless the candidate
    strictly improves that photo's sub-objective. Returns the new state."""
    labels = np.array(X.labels)
    for photo in c.photos:
        mrf = build_photo_mrf(photo.photo_id, X, Y, ctx, table, c, h)
        if len(mrf.nodes) == 0:
            continue
        candidate = solve_photo(mrf, config)
        incumbent = X.labels[mrf.nodes]
        if np.array_equal(candidate, incumbent):
            continue
        if mrf.score(candidate) > mrf.score(incumbent):
            labels[mrf.nodes] = candidate
    return IdentityState(labels)
