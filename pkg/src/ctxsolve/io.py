"""File formats.

Collection files are JSON lines: one header record, then ``M`` photo
records, then ``N`` instance records::

    {"type": "header", "version": "ctxsolve/1", "L": 3, "D": 32, "D_f": 16, "R": 4, "M": 2, "N": 3}
    {"type": "photo", "id": 0, "scene": [...]}
    {"type": "instance", "id": 0, "photo": 0, "features": [[...] x R], "visible": [...], "label": 2}

Floats are written with ``repr`` precision, so a save/load round trip is
lossless. Score matrices use a small binary format: the 8 magic bytes
``CTXSCORE``, ``N`` as little-endian uint64, then N*N little-endian float64
values in row-major order. Every writer goes through a temp file and
``os.replace``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .errors import ParseError, StructuralError, ValidationError
from .fusion import FusionModel
from .model import NUM_REGIONS, Collection, Instance, Photo, Violation, validate_collection
from .synthgen import GroundTruth

VERSION = "ctxsolve/1"
SCORE_MAGIC = b"CTXSCORE"


@contextmanager
def atomic_write(path, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


# -- collections -------------------------------------------------------------


def save_collection(c: Collection, path) -> None:
    D = c.features.shape[2] if c.num_instances else 0
    Df = c.scenes.shape[1] if c.num_photos else 0
    header = {
        "type": "header",
        "version": VERSION,
        "L": c.num_identities,
        "D": D,
        "D_f": Df,
        "R": NUM_REGIONS,
        "M": c.num_photos,
        "N": c.num_instances,
    }
    if c.identity_names is not None:
        header["names"] = list(c.identity_names)
    with atomic_write(path) as fh:
        fh.write(_dumps(header) + "\n")
        for p in c.photos:
            fh.write(_dumps({"type": "photo", "id": p.photo_id, "scene": p.scene_feature.tolist()}) + "\n")
        for inst in c.instances:
            rec = {
                "type": "instance",
                "id": inst.instance_id,
                "photo": inst.photo_id,
                "features": inst.region_features.tolist(),
                "visible": inst.visibility.tolist(),
                "label": inst.label,
            }
            fh.write(_dumps(rec) + "\n")


def load_collection(path) -> Collection:
    """Parse and validate a collection file; fails closed."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    last_complete = "header"

    def parse(lineno, text):
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as err:
            raise ParseError(f"malformed record ({err.msg}); last complete record: {last_complete}", line=lineno)
        if not isinstance(rec, dict) or "type" not in rec:
            raise ParseError(f"record without a type; last complete record: {last_complete}", line=lineno)
        return rec

    header = parse(1, lines[0])
    if header.get("type") != "header":
        raise ParseError("first record must be the header", line=1)
    if header.get("version") != VERSION:
        raise ParseError(f"unsupported version {header.get('version')!r}", line=1)
    try:
        L, D, Df, R, M, N = (int(header[k]) for k in ("L", "D", "D_f", "R", "M", "N"))
    except (KeyError, TypeError, ValueError):
        raise ParseError("header needs integer fields L, D, D_f, R, M, N", line=1)
    if R != NUM_REGIONS:
        raise ParseError(f"header declares R={R}, expected {NUM_REGIONS}", line=1)

    photos_raw, inst_raw = [], []
    violations: list[Violation] = []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        rec = parse(lineno, text)
        kind = rec["type"]
        try:
            if kind == "photo":
                if inst_raw:
                    raise ParseError("photo record after instance records", line=lineno)
                scene = np.asarray(rec["scene"], dtype=np.float64)
                if scene.shape != (Df,):
                    violations.append(Violation(f"photo {rec['id']}", f"scene length {scene.size} != header D_f {Df}"))
                photos_raw.append((int(rec["id"]), scene))
                last_complete = f"photo {rec['id']}"
            elif kind == "instance":
                rows = rec["features"]
                lengths = [len(row) for row in rows]
                if len(rows) != R or any(n != D for n in lengths):
                    violations.append(
                        Violation(f"instance {rec['id']}", f"feature row lengths {lengths} != header R={R}, D={D}")
                    )
                    feats = np.zeros((R, D))
                else:
                    feats = np.asarray(rows, dtype=np.float64)
                vis = np.asarray(rec["visible"], dtype=bool)
                label = rec.get("label")
                inst_raw.append((int(rec["id"]), int(rec["photo"]), feats, vis, None if label is None else int(label)))
                last_complete = f"instance {rec['id']}"
            else:
                raise ParseError(f"unknown record type {kind!r}", line=lineno)
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f"bad {kind} record ({err}); last complete record: {last_complete}", line=lineno)

    if len(photos_raw) != M or len(inst_raw) != N:
        raise ParseError(
            f"expected {M} photos and {N} instances, found {len(photos_raw)} and {len(inst_raw)}; "
            f"last complete record: {last_complete}",
            line=len(lines),
        )
    if violations:
        raise ValidationError(violations)

    members: dict[int, list[int]] = {pid: [] for pid, _ in photos_raw}
    for iid, pid, *_ in inst_raw:
        members.setdefault(pid, []).append(iid)
    photos = tuple(Photo(pid, scene, members[pid]) for pid, scene in photos_raw)
    instances = tuple(Instance(*raw) for raw in inst_raw)
    c = Collection(photos, instances, L, header.get("names"))
    violations = validate_collection(c)
    if violations:
        raise ValidationError(violations)
    return c


# -- ground truth ------------------------------------------------------------


def save_truth(truth: GroundTruth, path) -> None:
    obj = {
        "version": VERSION,
        "labels": truth.labels.tolist(),
        "events": truth.events.tolist(),
        "cliques": truth.cliques,
        "event_cliques": truth.event_cliques,
        "event_prototypes": truth.event_prototypes.tolist(),
        "visibility": truth.visibility.tolist(),
        "gallery": truth.gallery_mask.tolist(),
    }
    with atomic_write(path) as fh:
        fh.write(_dumps(obj) + "\n")


def load_truth(path) -> GroundTruth:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ParseError(f"ground truth is not valid JSON ({err.msg})", line=err.lineno)
    if obj.get("version") != VERSION:
        raise ParseError(f"unsupported version {obj.get('version')!r}")
    return GroundTruth(
        labels=np.asarray(obj["labels"], dtype=np.int64),
        events=np.asarray(obj["events"], dtype=np.int64),
        cliques=obj["cliques"],
        event_cliques=obj["event_cliques"],
        event_prototypes=np.asarray(obj["event_prototypes"], dtype=np.float64),
        visibility=np.asarray(obj["visibility"], dtype=bool),
        gallery_mask=np.asarray(obj["gallery"], dtype=bool),
    )


# -- score matrices ----------------------------------------------------------


def save_scores(S: np.ndarray, path) -> None:
    S = np.ascontiguousarray(S, dtype="<f8")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise StructuralError("score matrix must be square")
    with atomic_write(path, "wb") as fh:
        fh.write(SCORE_MAGIC)
        fh.write(struct.pack("<Q", S.shape[0]))
        fh.write(S.tobytes())


def load_scores(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != SCORE_MAGIC:
        raise ParseError("not a score matrix file (bad magic bytes)")
    if len(data) < 16:
        raise ParseError("score matrix header is truncated")
    (n,) = struct.unpack("<Q", data[8:16])
    if len(data) != 16 + 8 * n * n:
        raise ParseError(f"score matrix body has {len(data) - 16} bytes, expected {8 * n * n}")
    return np.frombuffer(data, dtype="<f8", offset=16).reshape(n, n).astype(np.float64)


# -- models ------------------------------------------------------------------


def save_model(model, path) -> None:
    """Write a RANet model or a uniform weight vector."""
    if isinstance(model, FusionModel):
        obj = {
            "version": VERSION,
            "kind": "ranet",
            "conv_filters": model.conv_filters.tolist(),
            "conv_bias": model.conv_bias.tolist(),
            "fc_weights": model.fc_weights.tolist(),
            "fc_bias": model.fc_bias.tolist(),
            "scale": model.scale,
            "offset": model.offset,
        }
    else:
        obj = {"version": VERSION, "kind": "uniform", "weights": np.asarray(model, dtype=float).tolist()}
    with atomic_write(path) as fh:
        fh.write(_dumps(obj) + "\n")


def load_model(path):
    obj = json.loads(Path(path).read_text())
    if obj.get("version") != VERSION:
        raise ParseError(f"unsupported version {obj.get('version')!r}")
    if obj.get("kind") == "uniform":
        return np.asarray(obj["weights"], dtype=np.float64)
    if obj.get("kind") != "ranet":
        raise ParseError(f"unknown model kind {obj.get('kind')!r}")
    return FusionModel(
        np.asarray(obj["conv_filters"], dtype=np.float64),
        np.asarray(obj["conv_bias"], dtype=np.float64),
        np.asarray(obj["fc_weights"], dtype=np.float64),
        np.asarray(obj["fc_bias"], dtype=np.float64),
        float(obj["scale"]),
        float(obj["offset"]),
    )


# -- predictions and traces --------------------------------------------------


def save_predictions(path, labels, events, query_ids, settings: dict) -> None:
    obj = {
        "version": VERSION,
        "settings": settings,
        "query": [int(q) for q in query_ids],
        "labels": [int(x) for x in labels],
        "events": [int(e) for e in events],
    }
    with atomic_write(path) as fh:
        fh.write(json.dumps(obj, sort_keys=True, allow_nan=False) + "\n")


def load_predictions(path) -> dict:
    obj = json.loads(Path(path).read_text())
    if obj.get("version") != VERSION:
        raise ParseError(f"unsupported version {obj.get('version')!r}")
    return obj


def save_trace(path, records, timings: bool = False) -> None:
    with atomic_write(path) as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict(timings), sort_keys=True, allow_nan=False) + "\n")


def save_json(path, obj) -> None:
    with atomic_write(path) as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
