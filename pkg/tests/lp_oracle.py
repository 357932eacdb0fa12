"""Exhaustive oracle for the event program."""

import itertools

import numpy as np


def enumerate_event_lp(A, nu_min, nu_max, assign_all):
    """Best 0/1 assignment by listing every photo -> event map (-1 abstains)."""
    M, K = A.shape
    choices = range(K) if assign_all else range(-1, K)
    Y = np.array(list(itertools.product(choices, repeat=M)), dtype=np.int64).reshape(-1, M)
    counts = np.stack([(Y == k).sum(axis=1) for k in range(K)], axis=1)
    ok = np.all((counts >= nu_min) & (counts <= nu_max), axis=1)
    padded = np.concatenate([A, np.zeros((M, 1))], axis=1)
    values = padded[np.arange(M), Y].sum(axis=1)
    values[~ok] = -np.inf
    best = int(np.argmax(values))
    return Y[best], float(values[best])
