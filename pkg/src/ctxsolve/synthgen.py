"""Synthetic photo collections with planted identities, events and cliques.

Identities get one unit embedding per region. An instance's region feature
is the normalized mix ``s * identity + (1 - s) * noise`` with ``s`` the
region's signal strength. Identities are grouped into cliques, each event
draws its attendants from a few cliques and owns a scene prototype, and a
photo's scene feature is its event prototype plus Gaussian noise.

Occluded regions are either zeroed with the visibility flag cleared
(``occlusion_fill="zero"``) or filled with the features of a blank crop, a
vector shared by the whole corpus plus a little noise, while the flag stays
set because nothing upstream noticed the occlusion (``"blank"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .model import NUM_REGIONS, Collection

BLANK_SEED = 20_170_611


@dataclass(frozen=True)
class GenConfig:
    num_identities: int = 20
    num_events: int = 8
    photos_per_event: tuple[int, int] = (10, 15)
    instances_per_photo: tuple[int, int] = (1, 4)
    feature_dim: int = 32
    scene_dim: int = 16
    signal_strength: tuple[float, ...] = (0.9, 0.6, 0.5, 0.4)
    visibility_rate: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    scene_noise: float = 0.3
    scene_spread: float = 1.0
    cliques: tuple[tuple[int, ...], ...] | None = None
    clique_size: int = 4
    cliques_per_event: int = 1
    outsider_rate: float = 0.1
    gallery_per_identity: int = 1
    occlusion_fill: str = "zero"
    seed: int = 0

    def __post_init__(self):
        for name in ("signal_strength", "visibility_rate"):
            vals = getattr(self, name)
            if len(vals) != NUM_REGIONS or any(not 0.0 <= v <= 1.0 for v in vals):
                raise ConfigError(f"{name} needs {NUM_REGIONS} values in [0, 1]")
        if not 0.0 <= self.outsider_rate <= 1.0:
            raise ConfigError("outsider_rate must lie in [0, 1]")
        if self.scene_noise < 0:
            raise ConfigError("scene_noise must be nonnegative")
        if self.gallery_per_identity < 1:
            raise ConfigError("gallery_per_identity must be >= 1")
        if self.num_identities < 2 or self.num_events < 1:
            raise ConfigError("need at least two identities and one event")
        if self.occlusion_fill not in ("zero", "blank"):
            raise ConfigError("occlusion_fill must be 'zero' or 'blank'")
        lo, hi = self.instances_per_photo
        if not 1 <= lo <= hi:
            raise ConfigError("instances_per_photo must be a range with lower bound >= 1")
        lo, hi = self.photos_per_event
        if not 1 <= lo <= hi:
            raise ConfigError("photos_per_event must be a range with lower bound >= 1")
        if self.feature_dim < 1 or self.scene_dim < 1:
            raise ConfigError("feature and scene dimensions must be positive")

    def replace(self, **changes) -> "GenConfig":
        return replace(self, **changes)


@dataclass(eq=False)
class GroundTruth:
    labels: np.ndarray  # (N,) every instance's identity
    events: np.ndarray  # (M,) planted event of each photo
    cliques: list[list[int]]
    event_cliques: list[list[int]]
    event_prototypes: np.ndarray  # (E, D_f)
    visibility: np.ndarray  # (N, R) true visibility
    gallery_mask: np.ndarray  # (N,)
    identity_embeddings: np.ndarray = field(repr=False, default=None)  # (L, R, D)


def _unit(rng, *shape):
    v = rng.standard_normal(shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def blank_features(feature_dim: int) -> np.ndarray:
    """Per-region feature of a blank crop; fixed across collections."""
    return _unit(np.random.default_rng([BLANK_SEED, feature_dim]), NUM_REGIONS, feature_dim)


def _make_cliques(cfg: GenConfig, rng) -> list[list[int]]:
    if cfg.cliques is not None:
        cliques = [list(map(int, q)) for q in cfg.cliques]
        covered = sorted(i for q in cliques for i in q)
        if covered != list(range(cfg.num_identities)):
            raise ConfigError("cliques must partition the identities")
        return cliques
    perm = rng.permutation(cfg.num_identities)
    size = max(1, cfg.clique_size)
    return [sorted(perm[i : i + size].tolist()) for i in range(0, len(perm), size)]


def generate(cfg: GenConfig) -> tuple[Collection, GroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    L, E, R, D = cfg.num_identities, cfg.num_events, NUM_REGIONS, cfg.feature_dim
    embed = _unit(rng, L, R, D)
    cliques = _make_cliques(cfg, rng)

    # every clique attends at least one event
    order = rng.permutation(len(cliques)).tolist()
    event_cliques = [[] for _ in range(E)]
    for e in range(max(E, len(cliques))):
        event_cliques[e % E].append(order[e % len(cliques)])
    for e in range(E):
        while len(event_cliques[e]) < min(cfg.cliques_per_event, len(cliques)):
            q = int(rng.integers(len(cliques)))
            if q not in event_cliques[e]:
                event_cliques[e].append(q)
        event_cliques[e] = sorted(set(event_cliques[e]))
    prototypes = cfg.scene_spread * rng.standard_normal((E, cfg.scene_dim))

    photo_event: list[int] = []
    photo_people: list[list[int]] = []
    for e in range(E):
        pool = sorted(i for q in event_cliques[e] for i in cliques[q])
        for _ in range(int(rng.integers(cfg.photos_per_event[0], cfg.photos_per_event[1] + 1))):
            n = int(rng.integers(cfg.instances_per_photo[0], cfg.instances_per_photo[1] + 1))
            people = rng.choice(pool, size=min(n, len(pool)), replace=False).tolist()
            for slot in range(len(people)):
                if rng.random() < cfg.outsider_rate:
                    others = [i for i in range(L) if i not in people]
                    if others:
                        people[slot] = int(rng.choice(others))
            photo_event.append(e)
            photo_people.append([int(p) for p in people])

    # top up rare identities so each has a gallery and a query appearance
    need = cfg.gallery_per_identity + 1
    counts = np.bincount([p for ps in photo_people for p in ps], minlength=L)
    for ident in range(L):
        home = [e for e in range(E) if any(ident in cliques[q] for q in event_cliques[e])]
        while counts[ident] < need:
            choices = [m for m, e in enumerate(photo_event) if e in home and ident not in photo_people[m]]
            if not choices:
                choices = [m for m in range(len(photo_people)) if ident not in photo_people[m]]
            m = int(rng.choice(choices))
            photo_people[m].append(ident)
            counts[ident] += 1

    M = len(photo_event)
    events = np.array(photo_event, dtype=np.int64)
    scenes = prototypes[events] + cfg.scene_noise * rng.standard_normal((M, cfg.scene_dim))

    labels = np.array([p for ps in photo_people for p in ps], dtype=np.int64)
    photo_of = np.array([m for m, ps in enumerate(photo_people) for _ in ps], dtype=np.int64)
    N = len(labels)
    strength = np.asarray(cfg.signal_strength)[None, :, None]
    noise = _unit(rng, N, R, D)
    feats = strength * embed[labels] + (1.0 - strength) * noise
    norms = np.linalg.norm(feats, axis=-1, keepdims=True)
    feats = np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)
    visible = rng.random((N, R)) < np.asarray(cfg.visibility_rate)[None, :]
    flags = visible.copy()
    if cfg.occlusion_fill == "zero":
        feats[~visible] = 0.0
    else:
        blank = blank_features(D)[None] + 0.1 * _unit(rng, N, R, D)
        blank /= np.linalg.norm(blank, axis=-1, keepdims=True)
        feats = np.where(visible[..., None], feats, blank)
        flags[:] = True

    gallery = np.zeros(N, dtype=bool)
    for ident in range(L):
        idx = np.flatnonzero(labels == ident)
        gallery[rng.choice(idx, size=cfg.gallery_per_identity, replace=False)] = True

    coll = Collection.from_arrays(feats, flags, np.where(gallery, labels, -1), photo_of, scenes, L)
    truth = GroundTruth(
        labels=labels,
        events=events,
        cliques=cliques,
        event_cliques=event_cliques,
        event_prototypes=prototypes,
        visibility=visible,
        gallery_mask=gallery,
        identity_embeddings=embed,
    )
    return coll, truth
