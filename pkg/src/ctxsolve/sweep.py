"""Occlusion sweep: the four ablation columns as face visibility drops."""

from __future__ import annotations

import logging

import numpy as np

from . import evaluation as ev
from .errors import ConfigError
from .model import Hyperparams
from .synthgen import GenConfig, generate

log = logging.getLogger(__name__)

# Harder than the generator defaults: weaker non-face signal, every region
# subject to dropout, and occluded regions filled with blank-crop features.
SWEEP_CONFIG = GenConfig(
    signal_strength=(0.9, 0.5, 0.4, 0.3),
    visibility_rate=(0.3, 0.6, 0.7, 0.8),
    occlusion_fill="blank",
)
TRAIN_SEED_OFFSET = 1000
COLUMNS = ("visual", "ranet", "ranet-p", "full")


def run_ablation(cfg: GenConfig, h: Hyperparams, seed: int = 0) -> dict[str, float]:
    """Fit scorers on a training collection drawn with a shifted seed, then
    report the accuracy of every mode on the collection drawn with ``seed``."""
    c_train, gt_train = generate(cfg.replace(seed=seed + TRAIN_SEED_OFFSET))
    c_test, gt_test = generate(cfg.replace(seed=seed))
    scorers = ev.fit_scorers(c_train, gt_train.labels, base=h, seed=seed)
    out = {}
    for mode, col in zip(ev.MODES, COLUMNS):
        res = ev.run_mode(c_test, mode, scorers, h, seed=seed)
        out[col] = ev.accuracy(c_test, res.identities.labels, gt_test.labels)
    return out


def occlusion_sweep(cfg: GenConfig = SWEEP_CONFIG, rates=(0.2, 0.3, 0.4), seeds=range(5), h: Hyperparams | None = None):
    """One row per rate: face visibility set to ``rate``, accuracies averaged
    over ``seeds``, plus the per-seed values."""
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("the sweep needs at least one seed")
    h = h or Hyperparams(num_events=cfg.num_events)
    table = []
    for rate in rates:
        if not 0.0 <= rate <= 1.0:
            raise ConfigError(f"rate {rate} outside [0, 1]")
        vis = (float(rate),) + tuple(cfg.visibility_rate[1:])
        runs = [run_ablation(cfg.replace(visibility_rate=vis), h, seed) for seed in seeds]
        row = {"rate": float(rate)}
        for col in COLUMNS:
            row[col] = float(np.mean([r[col] for r in runs]))
        row["per_seed"] = runs
        log.info("rate=%.2f %s", rate, " ".join(f"{k}={row[k]:.4f}" for k in COLUMNS))
        table.append(row)
    return table
