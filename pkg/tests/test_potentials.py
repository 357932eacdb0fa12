import itertools

import numpy as np
import pytest

from ctxsolve.errors import NumericError, StructuralError
from ctxsolve.model import NUM_REGIONS, Collection, ContextParams, EventState, Hyperparams, IdentityState
from ctxsolve.potentials import (
    event_affinity,
    gallery_scores,
    objective,
    phi_ep,
    phi_pp,
    psi_v,
)
from conftest import random_context, random_state


def collection(labels, photo_of, L, Df=3, seed=0):
    rng = np.random.default_rng(seed)
    n = len(labels)
    feats = rng.standard_normal((n, NUM_REGIONS, 4))
    return Collection.from_arrays(
        feats, np.ones((n, NUM_REGIONS), bool), labels, photo_of, rng.standard_normal((max(photo_of) + 1, Df)), L
    )


def gallery_oracle(S, c):
    rows = []
    for j in c.query_ids:
        row = []
        for l in range(c.num_identities):
            row.append(max(S[j, g] for g in range(c.num_instances) if c.labels[g] == l))
        rows.append(row)
    return np.array(rows)


def test_gallery_scores_singleton_gallery():
    c = collection([0, 1, -1, -1], [0, 0, 1, 1], 2)
    S = np.arange(16.0).reshape(4, 4)
    S = S + S.T
    T = gallery_scores(S, c)
    assert T[0, 0] == S[2, 0] and T[1, 1] == S[3, 1]


def test_gallery_scores_matches_double_loop():
    rng = np.random.default_rng(1)
    labels = [0, 1, 2, 0, 1, 2, -1, -1, -1, -1, -1]
    c = collection(labels, [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 4], 3)
    S = rng.standard_normal((11, 11))
    S = S + S.T
    np.testing.assert_array_equal(gallery_scores(S, c), gallery_oracle(S, c))


def test_duplicate_gallery_instance_leaves_table_unchanged():
    rng = np.random.default_rng(2)
    c = collection([0, 1, -1], [0, 0, 1], 2)
    S = rng.standard_normal((3, 3))
    S = S + S.T
    c2 = collection([0, 1, -1, 0], [0, 0, 1, 1], 2)
    S2 = np.zeros((4, 4))
    S2[:3, :3] = S
    S2[3, :3] = S2[:3, 3] = S[0]
    S2[3, 3] = S[0, 0]
    np.testing.assert_array_equal(gallery_scores(S, c), gallery_scores(S2, c2))


def test_gallery_scores_errors():
    c = collection([0, -1], [0, 0], 2)
    with pytest.raises(StructuralError):
        gallery_scores(np.zeros((2, 2)), c)
    with pytest.raises(StructuralError):
        gallery_scores(np.zeros((3, 3)), c)


def test_same_photo_gallery_is_a_legal_match():
    c = collection([0, 1, -1], [0, 1, 1], 2)
    S = np.zeros((3, 3))
    S[2, 1] = S[1, 2] = 0.7
    assert gallery_scores(S, c)[0, 1] == 0.7


def test_psi_v_examples():
    c = collection([0, 1, -1], [0, 0, 1], 2)
    X = IdentityState(np.array([0, 1, 1]))
    assert psi_v(X, np.zeros((1, 2)), c) == 0.0
    assert psi_v(X, np.array([[0.2, 0.9]]), c) == 0.9


def test_psi_v_matches_loop():
    rng = np.random.default_rng(3)
    c = collection([0, 1, 2] + [-1] * 10, list(range(13)), 3)
    T = rng.standard_normal((10, 3))
    X = random_state(rng, c)
    expect = sum(T[r, X.labels[j]] for r, j in enumerate(c.query_ids))
    assert psi_v(X, T, c) == pytest.approx(expect, abs=1e-12)


def test_event_affinity_examples():
    L = 4
    c = collection([0, 1, 2, 3], [0, 1, 2, 3], L, Df=2)
    X = IdentityState(c.labels)
    protos = np.array([c.scenes[0], c.scenes[0] + np.array([2.0, 0.0])])
    ctx = ContextParams(protos, np.full((2, L), 1 / L), np.zeros((L, L)))
    assert event_affinity(0, 0, X, ctx, c) == pytest.approx(np.log(1 / L))
    assert event_affinity(0, 1, X, ctx, c) == pytest.approx(np.log(1 / L) - 4)


def test_event_affinity_three_instance_oracle():
    rng = np.random.default_rng(4)
    c = collection([0, 1, 2, -1, -1, -1], [0, 1, 2, 3, 3, 3], 3)
    ctx = random_context(rng, 2, 3, 3)
    X = IdentityState(np.array([0, 1, 2, 2, 0, 2]))
    for k in range(2):
        expect = sum(np.log(ctx.identity_dists[k, X.labels[j]]) for j in (3, 4, 5))
        expect -= sum((c.scenes[3][d] - ctx.scene_prototypes[k][d]) ** 2 for d in range(3))
        assert event_affinity(3, k, X, ctx, c) == pytest.approx(expect, abs=1e-12)


def test_event_affinity_rejects_zero_probability():
    c = collection([0, 1], [0, 1], 2)
    ctx = ContextParams(np.zeros((1, 3)), np.array([[1.0, 0.0]]), np.zeros((2, 2)))
    with pytest.raises(NumericError):
        event_affinity(0, 0, IdentityState(c.labels), ctx, c)


def test_phi_ep_examples_and_oracle():
    rng = np.random.default_rng(5)
    c = collection([0, 1, 2, -1, -1, -1, -1], [0, 1, 2, 3, 3, 4, 4], 3)
    ctx = random_context(rng, 3, 3, 3)
    X = random_state(rng, c)
    assert phi_ep(EventState.empty(5), X, ctx, c) == 0.0
    Y = EventState(np.array([0, -1, -1, -1, -1]))
    assert phi_ep(Y, X, ctx, c) == pytest.approx(event_affinity(0, 0, X, ctx, c))
    Y = EventState(rng.integers(0, 3, size=5))
    expect = sum(event_affinity(i, Y.assignment[i], X, ctx, c) for i in range(5))
    assert phi_ep(Y, X, ctx, c) == pytest.approx(expect, abs=1e-12)


def test_phi_pp_examples():
    rng = np.random.default_rng(6)
    L = 3
    Q = rng.random((L, L))
    c = collection([0, 1, 2], [0, 1, 2], L)
    assert phi_pp(IdentityState(c.labels), c, Q) == 0.0
    c = collection([0, 1, 2, -1], [0, 0, 1, 2], L)
    X = IdentityState(np.array([0, 2, 2, 1]))
    assert phi_pp(X, c, Q) == pytest.approx(Q[0, 2] + Q[2, 0])


def test_phi_pp_four_instance_photo_enumerates_twelve_pairs():
    rng = np.random.default_rng(7)
    L = 4
    Q = rng.standard_normal((L, L))
    c = collection([0, 1, 2, 3, -1, -1, -1, -1], [1, 2, 3, 4, 0, 0, 0, 0], L)
    X = random_state(rng, c)
    members = [4, 5, 6, 7]
    pairs = list(itertools.permutations(members, 2))
    assert len(pairs) == 12
    expect = sum(Q[X.labels[a], X.labels[b]] for a, b in pairs)
    assert phi_pp(X, c, Q) == pytest.approx(expect, abs=1e-12)


def test_phi_pp_swap_invariance():
    rng = np.random.default_rng(8)
    Q = rng.random((3, 3))
    Q = Q + Q.T
    c = collection([0, 1, 2, -1, -1], [0, 1, 2, 3, 3], 3)
    a = phi_pp(IdentityState(np.array([0, 1, 2, 0, 2])), c, Q)
    b = phi_pp(IdentityState(np.array([0, 1, 2, 2, 0])), c, Q)
    assert a == b


def _objective_fixture(seed):
    rng = np.random.default_rng(seed)
    c = collection([0, 1, 2, -1, -1, -1, -1, -1], [0, 1, 2, 3, 3, 4, 4, 4], 3)
    ctx = random_context(rng, 2, 3, 3)
    X = random_state(rng, c)
    Y = EventState(rng.integers(-1, 2, size=5))
    T = rng.standard_normal((5, 3))
    return c, ctx, X, Y, T


def test_objective_is_sum_of_terms():
    for seed in range(10):
        c, ctx, X, Y, T = _objective_fixture(seed)
        h = Hyperparams(alpha=0.05, beta=0.01)
        expect = psi_v(X, T, c) + 0.05 * phi_ep(Y, X, ctx, c) + 0.01 * phi_pp(X, c, ctx.cooccurrence)
        assert objective(X, Y, ctx, T, c, h) == pytest.approx(expect, abs=1e-12)
        h0 = Hyperparams(alpha=0, beta=0)
        assert objective(X, Y, ctx, T, c, h0) == psi_v(X, T, c)


def test_objective_invariant_to_photo_order():
    c, ctx, X, Y, T = _objective_fixture(11)
    h = Hyperparams()
    perm = np.array([4, 2, 0, 3, 1])
    inv = np.argsort(perm)
    photo_of = inv[c.photo_of]
    order = np.argsort(photo_of, kind="stable")
    c2 = Collection.from_arrays(
        c.features[order], c.visibility[order], c.labels[order], photo_of[order], c.scenes[perm], 3
    )
    X2 = IdentityState(X.labels[order])
    Y2 = EventState(Y.assignment[perm])
    # query rows follow the instance order
    q_old = {int(j): r for r, j in enumerate(c.query_ids)}
    T2 = np.array([T[q_old[int(order[j])]] for j in c2.query_ids])
    assert objective(X2, Y2, ctx, T2, c2, h) == pytest.approx(objective(X, Y, ctx, T, c, h), abs=1e-12)


def test_gallery_scores_monotone():
    rng = np.random.default_rng(9)
    c = collection([0, 1, 0, -1, -1], [0, 0, 1, 1, 2], 2)
    S = rng.standard_normal((5, 5))
    S = S + S.T
    before = gallery_scores(S, c)
    S[3, 2] += 0.5
    S[2, 3] += 0.5
    after = gallery_scores(S, c)
    assert after[0, 0] >= before[0, 0]
