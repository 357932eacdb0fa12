import numpy as np
import pytest

from ctxsolve.model import NUM_REGIONS, Collection, ContextParams, IdentityState
from ctxsolve.synthgen import GenConfig, generate


def tiny_collection(D=6, Df=3, seed=0):
    """Two photos, three instances, L=2; instance 2 is the only query."""
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((3, NUM_REGIONS, D))
    vis = np.ones((3, NUM_REGIONS), dtype=bool)
    return Collection.from_arrays(feats, vis, [0, 1, -1], [0, 0, 1], rng.standard_normal((2, Df)), 2)


def random_context(rng, K, L, Df, with_q=True):
    P = rng.random((K, L)) + 0.05
    P /= P.sum(axis=1, keepdims=True)
    Q = rng.random((L, L)) if with_q else np.zeros((L, L))
    Q = Q + Q.T
    if with_q:
        Q /= np.linalg.norm(Q)
    return ContextParams(rng.standard_normal((K, Df)), P, Q)


def random_state(rng, c):
    labels = np.array(c.labels)
    q = c.query_ids
    labels[q] = rng.integers(0, c.num_identities, size=len(q))
    return IdentityState(labels)


@pytest.fixture
def tiny():
    return tiny_collection()


@pytest.fixture(scope="session")
def small_synth():
    return generate(GenConfig(num_identities=8, num_events=3, photos_per_event=(4, 6), seed=5))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
