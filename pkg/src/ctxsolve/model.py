"""Domain types shared by every stage of the solver.

Identities, instances and photos are all addressed by dense integer
indices. Instance ``i`` lives at ``collection.instances[i]`` and photo
``m`` at ``collection.photos[m]``; external names are presentation only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError, StructuralError


class RegionKind(enum.IntEnum):
    FACE = 0
    HEAD = 1
    UPPER_BODY = 2
    BODY = 3


NUM_REGIONS = len(RegionKind)
UNASSIGNED = -1


def _readonly(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """One detected person: R region embeddings plus visibility flags.

    An invisible region is stored as the all-zero vector. ``label`` is set
    for gallery instances and ``None`` for queries.
    """

    instance_id: int
    photo_id: int
    region_features: np.ndarray
    visibility: np.ndarray
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "region_features", _readonly(self.region_features, np.float64))
        object.__setattr__(self, "visibility", _readonly(self.visibility, bool))

    @property
    def is_gallery(self) -> bool:
        return self.label is not None


@dataclass(frozen=True, eq=False)
class Photo:
    photo_id: int
    scene_feature: np.ndarray
    instance_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "scene_feature", _readonly(self.scene_feature, np.float64))
        object.__setattr__(self, "instance_ids", tuple(int(i) for i in self.instance_ids))


@dataclass(frozen=True, eq=False)
class Collection:
    """Photos, their person instances and the gallery/query split.

    Dense array views (``features``, ``labels``, ...) are built lazily and
    are what the numerical code consumes.
    """

    photos: tuple[Photo, ...]
    instances: tuple[Instance, ...]
    num_identities: int
    identity_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "photos", tuple(self.photos))
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.identity_names is not None:
            object.__setattr__(self, "identity_names", tuple(self.identity_names))

    @classmethod
    def from_arrays(
        cls,
        features,
        visibility,
        labels,
        photo_of,
        scenes,
        num_identities: int,
        identity_names: Sequence[str] | None = None,
    ) -> "Collection":
        """Build a collection from stacked arrays.

        ``labels`` uses -1 (or None) for query instances. Photo instance
        lists follow instance order.
        """
        features = np.asarray(features, dtype=np.float64)
        visibility = np.asarray(visibility, dtype=bool)
        photo_of = np.asarray(photo_of, dtype=np.int64)
        scenes = np.asarray(scenes, dtype=np.float64)
        members: list[list[int]] = [[] for _ in range(len(scenes))]
        instances = []
        for i in range(len(features)):
            lab = labels[i]
            lab = None if lab is None or int(lab) < 0 else int(lab)
            instances.append(Instance(i, int(photo_of[i]), features[i], visibility[i], lab))
            if 0 <= photo_of[i] < len(members):
                members[photo_of[i]].append(i)
        photos = [Photo(m, scenes[m], members[m]) for m in range(len(scenes))]
        return cls(tuple(photos), tuple(instances), int(num_identities), identity_names)

    # -- dense views -----------------------------------------------------

    @property
    def num_photos(self) -> int:
        return len(self.photos)

    @property
    def num_instances(self) -> int:
        return len(self.instances)

    @cached_property
    def features(self) -> np.ndarray:
        """(N, R, D) region features."""
        if not self.instances:
            return np.zeros((0, NUM_REGIONS, 0))
        return _readonly(np.stack([inst.region_features for inst in self.instances]), np.float64)

    @cached_property
    def visibility(self) -> np.ndarray:
        if not self.instances:
            return np.zeros((0, NUM_REGIONS), dtype=bool)
        return _readonly(np.stack([inst.visibility for inst in self.instances]), bool)

    @cached_property
    def labels(self) -> np.ndarray:
        """(N,) gallery labels, -1 for query instances."""
        return _readonly([UNASSIGNED if inst.label is None else inst.label for inst in self.instances], np.int64)

    @cached_property
    def photo_of(self) -> np.ndarray:
        return _readonly([inst.photo_id for inst in self.instances], np.int64)

    @cached_property
    def scenes(self) -> np.ndarray:
        """(M, D_f) scene features."""
        if not self.photos:
            return np.zeros((0, 0))
        return _readonly(np.stack([p.scene_feature for p in self.photos]), np.float64)

    @cached_property
    def gallery_mask(self) -> np.ndarray:
        return _readonly(self.labels >= 0, bool)

    @cached_property
    def query_ids(self) -> np.ndarray:
        return _readonly(np.flatnonzero(~self.gallery_mask), np.int64)

    @cached_property
    def gallery_index(self) -> tuple[np.ndarray, ...]:
        """Per identity, the ids of its gallery instances."""
        labels = self.labels
        return tuple(_readonly(np.flatnonzero(labels == l), np.int64) for l in range(self.num_identities))

    def with_labels(self, labels) -> "Collection":
        """Copy with a different gallery/query split (-1 marks a query)."""
        labels = np.asarray(labels)
        instances = tuple(
            Instance(
                inst.instance_id,
                inst.photo_id,
                inst.region_features,
                inst.visibility,
                None if labels[i] < 0 else int(labels[i]),
            )
            for i, inst in enumerate(self.instances)
        )
        return Collection(self.photos, instances, self.num_identities, self.identity_names)


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str

    def __str__(self):
        return f"{self.entity}: {self.rule}"


def validate_collection(c: Collection) -> list[Violation]:
    """Check every collection invariant; returns an empty list when all hold."""
    out: list[Violation] = []
    L = c.num_identities
    if L < 1:
        out.append(Violation("collection", "num_identities must be >= 1"))
    dims = {inst.region_features.shape[1:] for inst in c.instances if inst.region_features.ndim == 2}
    feat_dim = next(iter(dims))[0] if len(dims) == 1 else None

    for idx, inst in enumerate(c.instances):
        name = f"instance {inst.instance_id}"
        if inst.instance_id != idx:
            out.append(Violation(name, f"instance_id does not match position {idx}"))
        feats = inst.region_features
        if feats.ndim != 2 or feats.shape[0] != NUM_REGIONS:
            out.append(Violation(name, f"expected {NUM_REGIONS} region vectors, got shape {feats.shape}"))
            continue
        if feat_dim is not None and feats.shape[1] != feat_dim:
            out.append(Violation(name, "region feature dimension differs from other instances"))
        if not np.all(np.isfinite(feats)):
            out.append(Violation(name, "non-finite region feature"))
        if inst.visibility.shape != (NUM_REGIONS,):
            out.append(Violation(name, f"expected {NUM_REGIONS} visibility flags"))
        else:
            for r in RegionKind:
                if not inst.visibility[r] and np.any(feats[r] != 0):
                    out.append(Violation(name, f"{r.name} invisible but feature is nonzero"))
        if inst.label is not None and not 0 <= inst.label < L:
            out.append(Violation(name, f"label {inst.label} outside [0, {L})"))
        if not 0 <= inst.photo_id < c.num_photos:
            out.append(Violation(name, f"photo_id {inst.photo_id} does not exist"))
        elif idx not in c.photos[inst.photo_id].instance_ids:
            out.append(Violation(name, f"not listed by photo {inst.photo_id}"))

    scene_dims = {p.scene_feature.shape for p in c.photos}
    if len(scene_dims) > 1:
        out.append(Violation("collection", "scene features have differing dimensions"))
    for idx, photo in enumerate(c.photos):
        name = f"photo {photo.photo_id}"
        if photo.photo_id != idx:
            out.append(Violation(name, f"photo_id does not match position {idx}"))
        if not photo.instance_ids:
            out.append(Violation(name, "has no instances"))
        if not np.all(np.isfinite(photo.scene_feature)):
            out.append(Violation(name, "non-finite scene feature"))
        for j in photo.instance_ids:
            if not 0 <= j < c.num_instances:
                out.append(Violation(name, f"lists unknown instance {j}"))
            elif c.instances[j].photo_id != idx:
                out.append(Violation(name, f"lists instance {j} which belongs to photo {c.instances[j].photo_id}"))
        if len(set(photo.instance_ids)) != len(photo.instance_ids):
            out.append(Violation(name, "lists an instance twice"))

    counts = np.zeros(max(L, 0), dtype=int)
    for inst in c.instances:
        if inst.label is not None and 0 <= inst.label < L:
            counts[inst.label] += 1
    for l in np.flatnonzero(counts == 0):
        out.append(Violation(f"identity {l}", "has no gallery instance"))
    return out


@dataclass(frozen=True, eq=False)
class IdentityState:
    """Identity of every instance; gallery entries equal their fixed labels."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", _readonly(self.labels, np.int64))

    @classmethod
    def from_query(cls, c: Collection, query_labels) -> "IdentityState":
        labels = np.array(c.labels)
        labels[c.query_ids] = query_labels
        return cls(labels)

    def query_labels(self, c: Collection) -> np.ndarray:
        return self.labels[c.query_ids]

    def indicator(self, num_identities: int) -> np.ndarray:
        """X as an (L, N) 0/1 matrix, one column per instance."""
        X = np.zeros((num_identities, len(self.labels)))
        X[self.labels, np.arange(len(self.labels))] = 1.0
        return X

    def check(self, c: Collection) -> None:
        if self.labels.shape != (c.num_instances,):
            raise StructuralError("identity state length does not match the collection")
        if np.any((self.labels < 0) | (self.labels >= c.num_identities)):
            raise StructuralError("identity index out of range")
        g = c.gallery_mask
        if np.any(self.labels[g] != c.labels[g]):
            raise StructuralError("gallery instances must keep their labels")

    def __eq__(self, other):
        return isinstance(other, IdentityState) and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EventState:
    """Event index per photo, ``UNASSIGNED`` (-1) when the photo abstains."""

    assignment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "assignment", _readonly(self.assignment, np.int64))

    @classmethod
    def empty(cls, num_photos: int) -> "EventState":
        return cls(np.full(num_photos, UNASSIGNED))

    def indicator(self, num_events: int) -> np.ndarray:
        """Y as an (M, K) 0/1 matrix."""
        Y = np.zeros((len(self.assignment), num_events))
        on = self.assignment >= 0
        Y[np.flatnonzero(on), self.assignment[on]] = 1.0
        return Y

    def counts(self, num_events: int) -> np.ndarray:
        on = self.assignment[self.assignment >= 0]
        return np.bincount(on, minlength=num_events)

    def is_feasible(self, num_events: int, nu_min: int, nu_max: int, assign_all: bool = False) -> bool:
        a = self.assignment
        if np.any((a < UNASSIGNED) | (a >= num_events)):
            return False
        if assign_all and np.any(a == UNASSIGNED):
            return False
        n = self.counts(num_events)
        return bool(np.all((n >= nu_min) & (n <= nu_max)))

    def __eq__(self, other):
        return isinstance(other, EventState) and np.array_equal(self.assignment, other.assignment)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ContextParams:
    """Event scene prototypes (K, D_f), event identity distributions (K, L)
    and the identity co-occurrence matrix (L, L)."""

    scene_prototypes: np.ndarray
    identity_dists: np.ndarray
    cooccurrence: np.ndarray

    def __post_init__(self):
        for name in ("scene_prototypes", "identity_dists", "cooccurrence"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.float64))

    @property
    def num_events(self) -> int:
        return self.scene_prototypes.shape[0]

    def replace(self, **changes) -> "ContextParams":
        fields = dict(
            scene_prototypes=self.scene_prototypes,
            identity_dists=self.identity_dists,
            cooccurrence=self.cooccurrence,
        )
        fields.update(changes)
        return ContextParams(**fields)

    def same_as(self, other: "ContextParams") -> bool:
        return (
            np.array_equal(self.scene_prototypes, other.scene_prototypes)
            and np.array_equal(self.identity_dists, other.identity_dists)
            and np.array_equal(self.cooccurrence, other.cooccurrence)
        )


@dataclass(frozen=True)
class Hyperparams:
    """Objective weights and event-granularity bounds.

    ``nu_max=None`` resolves to ceil(2M/K) at solve time. With
    ``assign_all_photos`` every photo must join an event; otherwise photos
    may abstain.
    """

    alpha: float = 0.05
    beta: float = 0.01
    num_events: int = 300
    nu_min: int = 1
    nu_max: int | None = None
    max_iterations: int = 10
    dist_smoothing_eps: float = 0.01
    assign_all_photos: bool = True

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise ConfigError("alpha and beta must be nonnegative")
        if self.num_events < 1:
            raise ConfigError("num_events must be >= 1")
        if self.nu_min < 0 or (self.nu_max is not None and self.nu_max < self.nu_min):
            raise ConfigError("need 0 <= nu_min <= nu_max")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.dist_smoothing_eps > 0:
            raise ConfigError("dist_smoothing_eps must be positive")

    def resolve_nu_max(self, num_photos: int) -> int:
        if self.nu_max is not None:
            return self.nu_max
        return max(self.nu_min, math.ceil(2 * num_photos / self.num_events))

    def replace(self, **changes) -> "Hyperparams":
        from dataclasses import replace

        return replace(self, **changes)
