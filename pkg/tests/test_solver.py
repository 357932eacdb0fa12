import logging

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from ctxsolve import fusion, solver
from ctxsolve.errors import ConfigError, NumericError
from ctxsolve.model import Hyperparams
from ctxsolve.potentials import gallery_scores
from ctxsolve.synthgen import GenConfig, generate


@pytest.fixture(scope="module")
def occluded():
    cfg = GenConfig(num_identities=20, num_events=8, photos_per_event=(12, 13), visibility_rate=(0.2, 1, 1, 1), seed=7)
    c, gt = generate(cfg)
    S = fusion.uniform_score_matrix([0.25] * 4, c)
    return c, gt, S


def test_visual_only_converges_in_one_iteration(occluded):
    c, _, S = occluded
    res = solver.run(c, S, Hyperparams(alpha=0, beta=0, num_events=8))
    assert res.trace.num_iterations == 1 and res.trace.converged
    np.testing.assert_array_equal(res.identities.query_labels(c), gallery_scores(S, c).argmax(axis=1))


def test_trace_is_monotone_and_short(occluded):
    c, _, S = occluded
    res = solver.run(c, S, Hyperparams(num_events=8))
    obj = res.trace.objectives
    assert np.all(np.diff(obj) >= -1e-9)
    assert res.trace.converged and res.trace.num_iterations <= 7
    assert res.trace.records[0].iteration == 0
    rec = res.trace.records[-1]
    assert rec.objective == pytest.approx(rec.visual + 0.05 * rec.event + 0.01 * rec.cooccurrence)


def test_rerun_is_identical(occluded):
    c, _, S = occluded
    h = Hyperparams(alpha=0.1, beta=0.05, num_events=8)
    a = solver.run(c, S, h, seed=3)
    b = solver.run(c, S, h, seed=3)
    assert a.identities == b.identities and a.events == b.events
    assert [r.as_dict() for r in a.trace.records] == [r.as_dict() for r in b.trace.records]


def test_initialization_is_deterministic(occluded):
    c, _, S = occluded
    T = gallery_scores(S, c)
    h = Hyperparams(num_events=8)
    X1, Y1, ctx1 = solver.initialize(c, T, h, seed=1)
    X2, Y2, ctx2 = solver.initialize(c, T, h, seed=1)
    assert X1 == X2 and Y1 == Y2 and ctx1.same_as(ctx2)
    np.testing.assert_array_equal(ctx1.identity_dists, 1 / c.num_identities)


def test_too_many_events(occluded):
    c, _, S = occluded
    with pytest.raises(ConfigError):
        solver.run(c, S, Hyperparams(num_events=c.num_photos + 1))


def test_kmeans_recovers_planted_prototypes():
    c, gt = generate(GenConfig(num_events=8, scene_noise=0.1, seed=11))
    centers = solver.kmeans_pp(c.scenes, 8, np.random.default_rng(0))
    d = np.linalg.norm(centers[:, None] - gt.event_prototypes[None], axis=2)
    r, k = linear_sum_assignment(d)
    assert d[r, k].max() < 0.2


def test_step_errors_carry_iteration(occluded, monkeypatch):
    c, _, S = occluded
    calls = {"n": 0}
    real = solver.event_step

    def flaky(*args):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericError("boom")
        return real(*args)

    monkeypatch.setattr(solver, "event_step", flaky)
    with pytest.raises(NumericError) as err:
        solver.run(c, S, Hyperparams(alpha=0.5, beta=0.5, num_events=8, max_iterations=5))
    assert err.value.iteration == 2
    assert str(err.value).startswith("iteration 2:")


def test_progress_log_lines(occluded, caplog):
    c, _, S = occluded
    with caplog.at_level(logging.INFO, logger="ctxsolve.solver"):
        res = solver.run(c, S, Hyperparams(num_events=8))
    lines = [r.getMessage() for r in caplog.records if r.name == "ctxsolve.solver"]
    assert len(lines) == len(res.trace.records)
    assert lines[0].startswith("iter=0 objective=")


def test_max_iterations_bounds_loop(occluded):
    c, _, S = occluded
    res = solver.run(c, S, Hyperparams(alpha=2.0, beta=1.0, num_events=8, max_iterations=2))
    assert res.trace.num_iterations <= 2
