"""Evaluation harness: accuracy, the gallery/query swap protocol, grid
searches and the four-column ablation pipeline."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import fusion, solver
from .errors import ConfigError, StructuralError
from .model import NUM_REGIONS, UNASSIGNED, Collection, Hyperparams
from .potentials import gallery_scores

MODES = ("visual", "ranet", "ranet-p", "ranet-p-e")
DEFAULT_GRID = (0.01, 0.05, 0.1)


@dataclass
class EvalReport:
    accuracy_forward: float
    accuracy_backward: float
    accuracy_mean: float
    num_query: int
    methods: dict[str, float] = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)
    trace: str | None = None

    def as_dict(self) -> dict:
        return {
            "accuracy_forward": self.accuracy_forward,
            "accuracy_backward": self.accuracy_backward,
            "accuracy_mean": self.accuracy_mean,
            "num_query": self.num_query,
            "methods": dict(self.methods),
            "confusion": self.confusion,
            "trace": self.trace,
        }


def _query_predictions(c: Collection, predictions) -> np.ndarray:
    """Accept either a length-N label array or one aligned with the queries."""
    pred = np.asarray(predictions, dtype=np.int64)
    q = c.query_ids
    if pred.shape == (c.num_instances,) and len(q) != c.num_instances:
        pred = pred[q]
    if pred.shape != (len(q),):
        raise StructuralError(f"{pred.size} predictions for {len(q)} query instances")
    missing = np.flatnonzero(pred == UNASSIGNED)
    if missing.size:
        raise StructuralError(f"no prediction for query instance {int(q[missing[0]])}")
    return pred


def accuracy(c: Collection, predictions, truth_labels) -> float:
    """Fraction of query instances whose predicted label is correct."""
    pred = _query_predictions(c, predictions)
    if len(pred) == 0:
        return 1.0
    return float(np.mean(pred == np.asarray(truth_labels)[c.query_ids]))


def confusion_summary(c: Collection, predictions, truth_labels, top: int = 5) -> dict:
    pred = _query_predictions(c, predictions)
    true = np.asarray(truth_labels)[c.query_ids]
    wrong = Counter(zip(true[pred != true].tolist(), pred[pred != true].tolist()))
    return {
        "correct": int(np.sum(pred == true)),
        "wrong": int(np.sum(pred != true)),
        "top_confusions": [{"true": t, "predicted": p, "count": n} for (t, p), n in wrong.most_common(top)],
    }


def swap_roles(c: Collection, truth_labels) -> Collection:
    """Exchange gallery and query: former queries become labelled."""
    return c.with_labels(np.where(c.gallery_mask, UNASSIGNED, np.asarray(truth_labels)))


def evaluate(
    c: Collection,
    predictions,
    truth_labels,
    swap: bool = False,
    predict: Callable[[Collection], np.ndarray] | None = None,
    methods: dict[str, float] | None = None,
    trace: str | None = None,
) -> EvalReport:
    """Score ``predictions`` on ``c``; with ``swap`` rerun ``predict`` on the
    role-exchanged collection and average both directions."""
    fwd = accuracy(c, predictions, truth_labels)
    bwd = fwd
    if swap:
        if predict is None:
            raise ConfigError("swap evaluation needs a predict callable to rerun the pipeline")
        cs = swap_roles(c, truth_labels)
        bwd = accuracy(cs, predict(cs), truth_labels)
    return EvalReport(
        accuracy_forward=fwd,
        accuracy_backward=bwd,
        accuracy_mean=(fwd + bwd) / 2.0,
        num_query=len(c.query_ids),
        methods=dict(methods or {}),
        confusion=confusion_summary(c, predictions, truth_labels),
        trace=trace,
    )


def event_recovery(predicted, truth) -> float:
    """Fraction of photos whose event agrees after optimal one-to-one matching."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.size == 0:
        return 1.0
    pk = np.unique(predicted, return_inverse=True)[1]
    tk = np.unique(truth, return_inverse=True)[1]
    table = np.zeros((pk.max() + 1, tk.max() + 1))
    np.add.at(table, (pk, tk), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / predicted.size)


# -- grid searches -----------------------------------------------------------


def simplex_lattice(step: float = 0.1, dim: int = NUM_REGIONS) -> np.ndarray:
    """All nonnegative weight vectors on the step lattice that sum to one."""
    n = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(n + 1), repeat=dim - 1) if sum(c) <= n]
    return np.array([list(p) + [n - sum(p)] for p in pts], dtype=np.float64) / n


def visual_accuracy(c: Collection, S: np.ndarray, truth_labels) -> float:
    table = gallery_scores(S, c)
    return accuracy(c, table.argmax(axis=1), truth_labels)


def grid_search_uniform(c_val: Collection, truth_labels, step: float = 0.1):
    """Best fixed region weights by visual-only validation accuracy.

    Ties keep the first lattice point in enumeration order.
    """
    sims = fusion.region_similarity_matrices(c_val)
    best_w, best_acc = None, -1.0
    for w in simplex_lattice(step):
        acc = visual_accuracy(c_val, np.einsum("r,rij->ij", w, sims), truth_labels)
        if acc > best_acc:
            best_w, best_acc = w, acc
    return best_w, best_acc


def grid_search_hyperparams(
    c_val: Collection,
    S: np.ndarray,
    truth_labels,
    alphas=DEFAULT_GRID,
    betas=DEFAULT_GRID,
    base: Hyperparams | None = None,
    seed: int = 0,
):
    """Run the solver per (alpha, beta); return the best pair and the table.

    Ties go to the lexicographically smaller (alpha, beta).
    """
    base = base or Hyperparams()
    table = []
    best, best_acc = None, -1.0
    for a, b in sorted(itertools.product(alphas, betas)):
        res = solver.run(c_val, S, base.replace(alpha=float(a), beta=float(b)), seed=seed)
        acc = accuracy(c_val, res.identities.labels, truth_labels)
        table.append({"alpha": float(a), "beta": float(b), "accuracy": acc})
        if acc > best_acc:
            best, best_acc = (float(a), float(b)), acc
    return best, table


# -- ablation pipeline -------------------------------------------------------


@dataclass
class Scorers:
    """Region weights for the baseline and a trained attention model."""

    uniform_weights: np.ndarray
    model: fusion.FusionModel | None = None
    alpha: float = 0.05
    beta: float = 0.01
    beta_only: float = 0.01


def mode_settings(mode: str, scorers: Scorers) -> tuple[str, float, float]:
    """(scorer kind, alpha, beta) used by each ablation column."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if mode == "visual":
        return "uniform", 0.0, 0.0
    if mode == "ranet":
        return "ranet", 0.0, 0.0
    if mode == "ranet-p":
        return "ranet", 0.0, scorers.beta_only
    return "ranet", scorers.alpha, scorers.beta


def score_for(kind: str, scorers: Scorers, c: Collection) -> np.ndarray:
    if kind == "uniform":
        return fusion.uniform_score_matrix(scorers.uniform_weights, c)
    if scorers.model is None:
        raise ConfigError("this mode needs a trained fusion model")
    return fusion.score_matrix(scorers.model, c)


def run_mode(c: Collection, mode: str, scorers: Scorers, base: Hyperparams, seed: int = 0, S=None):
    kind, a, b = mode_settings(mode, scorers)
    if S is None:
        S = score_for(kind, scorers, c)
    return solver.run(c, S, base.replace(alpha=a, beta=b), seed=seed)


def fit_scorers(
    c_train: Collection,
    truth_labels,
    train_config: fusion.TrainConfig = fusion.TrainConfig(),
    base: Hyperparams | None = None,
    alphas=DEFAULT_GRID,
    betas=DEFAULT_GRID,
    seed: int = 0,
) -> Scorers:
    """Fit every learned piece of the ablation on a training collection.

    The uniform weights come from the simplex grid, the attention model
    from pair training on all labelled instances, and (alpha, beta) from
    a grid search that includes zero so a context term is only switched
    on when it helps on the training collection.
    """
    base = base or Hyperparams()
    truth_labels = np.asarray(truth_labels)
    weights, _ = grid_search_uniform(c_train, truth_labels)
    pairs = fusion.make_pairs(truth_labels, seed=seed)
    model = fusion.FusionModel.init(c_train.features.shape[2], seed=seed)
    model, _ = fusion.train_fusion(model, c_train.features, pairs, train_config)
    S = fusion.score_matrix(model, c_train)
    (_, beta_only), _ = grid_search_hyperparams(c_train, S, truth_labels, (0.0,), (0.0,) + tuple(betas), base, seed)
    (alpha, beta), _ = grid_search_hyperparams(
        c_train, S, truth_labels, (0.0,) + tuple(alphas), (0.0,) + tuple(betas), base, seed
    )
    return Scorers(weights, model, alpha, beta, beta_only)
