"""Region attention network and fused matching scores.

The attention network maps the stacked (R, D) region features of one
instance to R weights in (0, 1):

    conv (C filters of shape R x k, valid, stride 1) -> ReLU -> flatten
    -> affine -> sigmoid

Two instances are compared with ``sum_r w_a[r] * w_b[r] * cos_r(a, b)``,
where the cosine of an all-zero (invisible) region is defined as 0. The
uniform baseline replaces the instance weights by one shared vector.

Training attaches a pairwise verification loss to the fused score,
``BCE(sigmoid(scale * score + offset), same_identity)``, with the region
features frozen. Gradients are analytic; ``loss_and_grad`` is what the
finite-difference tests check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, StructuralError, TrainingError
from .model import NUM_REGIONS, Collection, Instance, RegionKind

log = logging.getLogger(__name__)

RegionWeights = np.ndarray


@dataclass(frozen=True, eq=False)
class FusionModel:
    conv_filters: np.ndarray  # (C, R, k)
    conv_bias: np.ndarray  # (C,)
    fc_weights: np.ndarray  # (R, T * C), T = D - k + 1
    fc_bias: np.ndarray  # (R,)
    scale: float = 5.0
    offset: float = 0.0

    @classmethod
    def init(cls, feature_dim: int, seed=0, num_filters: int = 8, kernel: int = 5, scale: float = 5.0):
        if feature_dim < kernel:
            raise StructuralError(f"feature_dim {feature_dim} is smaller than kernel width {kernel}")
        rng = np.random.default_rng(seed)
        T = feature_dim - kernel + 1
        fan_in = NUM_REGIONS * kernel
        return cls(
            conv_filters=rng.normal(0.0, np.sqrt(2.0 / fan_in), (num_filters, NUM_REGIONS, kernel)),
            conv_bias=np.zeros(num_filters),
            fc_weights=rng.normal(0.0, 0.01, (NUM_REGIONS, T * num_filters)),
            fc_bias=np.zeros(NUM_REGIONS),
            scale=scale,
        )

    @classmethod
    def zeros(cls, feature_dim: int, num_filters: int = 8, kernel: int = 5):
        T = feature_dim - kernel + 1
        return cls(
            np.zeros((num_filters, NUM_REGIONS, kernel)),
            np.zeros(num_filters),
            np.zeros((NUM_REGIONS, T * num_filters)),
            np.zeros(NUM_REGIONS),
        )

    @property
    def num_filters(self) -> int:
        return self.conv_filters.shape[0]

    @property
    def kernel(self) -> int:
        return self.conv_filters.shape[2]

    @property
    def feature_dim(self) -> int:
        return self.fc_weights.shape[1] // self.num_filters + self.kernel - 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.conv_filters.ravel(),
                self.conv_bias,
                self.fc_weights.ravel(),
                self.fc_bias,
                [self.scale, self.offset],
            ]
        )

    def from_vector(self, vec) -> "FusionModel":
        vec = np.asarray(vec, dtype=np.float64)
        shapes = [self.conv_filters.shape, self.conv_bias.shape, self.fc_weights.shape, self.fc_bias.shape]
        if vec.shape != (sum(int(np.prod(sh)) for sh in shapes) + 2,):
            raise StructuralError("parameter vector has the wrong length")
        parts, pos = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            parts.append(vec[pos : pos + size].reshape(shape).copy())
            pos += size
        return FusionModel(*parts, scale=float(vec[pos]), offset=float(vec[pos + 1]))


# -- similarities ---------------------------------------------------------


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def region_similarity(a: Instance, b: Instance, r: RegionKind) -> float:
    u, v = a.region_features[r], b.region_features[r]
    if u.shape != v.shape:
        raise StructuralError(f"region {RegionKind(r).name}: dimensions {u.shape} and {v.shape} differ")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def pair_similarities(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Per-region cosines for stacked pairs: (B, R, D) x (B, R, D) -> (B, R)."""
    if fa.shape != fb.shape:
        raise StructuralError(f"feature shapes {fa.shape} and {fb.shape} differ")
    return np.einsum("brd,brd->br", _normalize_rows(fa), _normalize_rows(fb))


def region_similarity_matrices(c: Collection) -> np.ndarray:
    """(R, N, N) cosine matrices; invisible regions give zero rows."""
    U = _normalize_rows(c.features)
    sims = np.einsum("ird,jrd->rij", U, U)
    return 0.5 * (sims + sims.transpose(0, 2, 1))


# -- attention network ------------------------------------------------------


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite value in fusion parameters or features")


def _forward(m: FusionModel, X: np.ndarray):
    """Batched forward pass on (B, R, D) features; returns weights and cache."""
    if X.ndim != 3 or X.shape[1] != NUM_REGIONS or X.shape[2] != m.feature_dim:
        raise StructuralError(f"expected features of shape (B, {NUM_REGIONS}, {m.feature_dim}), got {X.shape}")
    B = X.shape[0]
    C, R, k = m.conv_filters.shape
    patches = sliding_window_view(X, k, axis=2).transpose(0, 2, 1, 3).reshape(B, -1, R * k)
    pre = patches @ m.conv_filters.reshape(C, R * k).T + m.conv_bias
    flat = np.maximum(pre, 0.0).reshape(B, -1)
    logits = flat @ m.fc_weights.T + m.fc_bias
    w = 1.0 / (1.0 + np.exp(-logits))
    return w, (patches, pre, flat)


def _backward(m: FusionModel, cache, dlogits: np.ndarray):
    patches, pre, flat = cache
    B, T, C = pre.shape
    d_fc_w = dlogits.T @ flat
    d_fc_b = dlogits.sum(axis=0)
    dpre = (dlogits @ m.fc_weights).reshape(B, T, C) * (pre > 0)
    d_conv_w = (dpre.reshape(B * T, C).T @ patches.reshape(B * T, -1)).reshape(m.conv_filters.shape)
    d_conv_b = dpre.sum(axis=(0, 1))
    return d_conv_w, d_conv_b, d_fc_w, d_fc_b


def attention_weights_batch(m: FusionModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    _check_finite(m.to_vector(), features)
    return _forward(m, features)[0]


def attention_weights(m: FusionModel, inst: Instance) -> RegionWeights:
    return attention_weights_batch(m, inst.region_features[None])[0]


def fused_score(m: FusionModel, a: Instance, b: Instance) -> float:
    wa = attention_weights(m, a)
    wb = attention_weights(m, b)
    sims = np.array([region_similarity(a, b, r) for r in RegionKind])
    return float(np.sum(wa * wb * sims))


def uniform_score(weights, a: Instance, b: Instance) -> float:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (NUM_REGIONS,) or np.any(weights < 0):
        raise StructuralError("uniform weights must be R nonnegative reals")
    sims = np.array([region_similarity(a, b, r) for r in RegionKind])
    return float(np.dot(weights, sims))


def score_matrix(m: FusionModel, c: Collection) -> np.ndarray:
    """(N, N) fused scores between all instance pairs, exactly symmetric."""
    w = attention_weights_batch(m, c.features)
    sims = region_similarity_matrices(c)
    S = np.einsum("ir,jr,rij->ij", w, w, sims)
    return 0.5 * (S + S.T)


def uniform_score_matrix(weights, c: Collection) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (NUM_REGIONS,) or np.any(weights < 0):
        raise StructuralError("uniform weights must be R nonnegative reals")
    S = np.einsum("r,rij->ij", weights, region_similarity_matrices(c))
    return 0.5 * (S + S.T)


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 40
    temperature: float | None = None
    batch_size: int = 64
    seed: int = 0


@dataclass
class PairSet:
    """Instance pairs with binary same-identity targets."""

    first: np.ndarray
    second: np.ndarray
    same: np.ndarray

    def __len__(self):
        return len(self.same)


def make_pairs(labels, seed=0, max_positive: int = 4000, negative_ratio: float = 1.0) -> PairSet:
    """All same-label pairs (subsampled to ``max_positive``) plus random
    different-label pairs."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    idx = np.flatnonzero(labels >= 0)
    ii, jj = np.triu_indices(len(idx), k=1)
    same = labels[idx[ii]] == labels[idx[jj]]
    pos = np.stack([idx[ii[same]], idx[jj[same]]], axis=1)
    if len(pos) > max_positive:
        pos = pos[np.sort(rng.choice(len(pos), max_positive, replace=False))]
    n_neg = int(round(len(pos) * negative_ratio))
    neg = []
    while len(neg) < n_neg:
        a, b = rng.choice(idx, 2, replace=False)
        if labels[a] != labels[b]:
            neg.append((a, b))
    neg = np.array(neg, dtype=np.int64).reshape(-1, 2)
    both = np.concatenate([pos, neg])
    target = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return PairSet(both[:, 0], both[:, 1], target)


def loss_and_grad(m: FusionModel, fa: np.ndarray, fb: np.ndarray, same: np.ndarray, sims=None):
    """Mean pair BCE and its gradient as a flat vector (``to_vector`` order)."""
    if sims is None:
        sims = pair_similarities(fa, fb)
    wa, cache_a = _forward(m, fa)
    wb, cache_b = _forward(m, fb)
    score = np.sum(wa * wb * sims, axis=1)
    z = m.scale * score + m.offset
    # log(1 + e^z) - y z, written stably
    loss = np.mean(np.logaddexp(0.0, z) - same * z)

    g = (1.0 / (1.0 + np.exp(-z)) - same) / len(same)
    d_scale = np.dot(g, score)
    d_offset = g.sum()
    ds = (g * m.scale)[:, None] * sims
    dla = ds * wb * wa * (1.0 - wa)
    dlb = ds * wa * wb * (1.0 - wb)
    ga = _backward(m, cache_a, dla)
    gb = _backward(m, cache_b, dlb)
    grad = np.concatenate([(x + y).ravel() for x, y in zip(ga, gb)] + [[d_scale, d_offset]])
    return float(loss), grad


def pair_loss(m: FusionModel, fa, fb, same, sims=None) -> float:
    if sims is None:
        sims = pair_similarities(fa, fb)
    wa, _ = _forward(m, fa)
    wb, _ = _forward(m, fb)
    z = m.scale * np.sum(wa * wb * sims, axis=1) + m.offset
    return float(np.mean(np.logaddexp(0.0, z) - same * z))


def train_fusion(m: FusionModel, features: np.ndarray, pairs: PairSet, config: TrainConfig = TrainConfig()):
    """Mini-batch SGD on the pair loss. Returns the trained model and the
    full-data loss before training and after every epoch."""
    features = np.asarray(features, dtype=np.float64)
    fa, fb = features[pairs.first], features[pairs.second]
    same = np.asarray(pairs.same, dtype=np.float64)
    sims = pair_similarities(fa, fb)
    _check_finite(m.to_vector(), features)

    if config.temperature is not None:
        m = m.from_vector(np.concatenate([m.to_vector()[:-2], [config.temperature, m.offset]]))
    theta = m.to_vector()
    history = [pair_loss(m, fa, fb, same, sims)]
    rng = np.random.default_rng(config.seed)
    n = len(same)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grad = loss_and_grad(m, fa[batch], fb[batch], same[batch], sims[batch])
            theta = theta - config.learning_rate * grad
            m = m.from_vector(theta)
        loss = pair_loss(m, fa, fb, same, sims)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise TrainingError(f"training diverged at epoch {epoch}", epoch=epoch)
        history.append(loss)
        log.debug("epoch %d loss %.6f", epoch, loss)
    return m, history
