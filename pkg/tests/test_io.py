import json

import numpy as np
import pytest

from ctxsolve import fusion, io
from ctxsolve.errors import ParseError, ValidationError
from ctxsolve.model import NUM_REGIONS, Collection, validate_collection
from ctxsolve.synthgen import GenConfig, generate


@pytest.fixture
def synth():
    return generate(GenConfig(num_identities=5, num_events=2, photos_per_event=(3, 4), visibility_rate=(0.5, 1, 1, 1), seed=1))


def _same(a: Collection, b: Collection):
    assert a.num_identities == b.num_identities and a.identity_names == b.identity_names
    for x, y in zip(a.instances, b.instances):
        assert (x.instance_id, x.photo_id, x.label) == (y.instance_id, y.photo_id, y.label)
        assert np.array_equal(x.region_features, y.region_features)
        assert np.array_equal(x.visibility, y.visibility)
    for x, y in zip(a.photos, b.photos):
        assert x.photo_id == y.photo_id and x.instance_ids == y.instance_ids
        assert np.array_equal(x.scene_feature, y.scene_feature)


def test_collection_round_trip_is_exact(tmp_path, synth):
    c, _ = synth
    c = Collection(c.photos, c.instances, c.num_identities, [f"p{i}" for i in range(5)])
    io.save_collection(c, tmp_path / "c.jsonl")
    back = io.load_collection(tmp_path / "c.jsonl")
    _same(c, back)
    assert validate_collection(back) == validate_collection(c) == []
    header = json.loads((tmp_path / "c.jsonl").read_text().splitlines()[0])
    assert header["version"] == "ctxsolve/1" and header["R"] == NUM_REGIONS


def test_truncated_file_names_last_record(tmp_path, synth):
    c, _ = synth
    path = tmp_path / "c.jsonl"
    io.save_collection(c, path)
    lines = path.read_text().splitlines()
    cut = len(lines) - 2
    path.write_text("\n".join(lines[:cut]) + "\n" + lines[cut][:25])
    with pytest.raises(ParseError) as err:
        io.load_collection(path)
    msg = str(err.value)
    last = json.loads(lines[cut - 1])
    assert f"line {cut + 1}" in msg and f"instance {last['id']}" in msg


def test_missing_records_is_a_parse_error(tmp_path, synth):
    c, _ = synth
    path = tmp_path / "c.jsonl"
    io.save_collection(c, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError, match="last complete record: instance"):
        io.load_collection(path)


def test_dimension_mismatch_names_instance(tmp_path, synth):
    c, _ = synth
    path = tmp_path / "c.jsonl"
    io.save_collection(c, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[-1])
    rec["features"][2] = rec["features"][2][:-1]
    lines[-1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError) as err:
        io.load_collection(path)
    assert any(v.entity == f"instance {rec['id']}" for v in err.value.violations)


def test_invariant_breach_fails_closed(tmp_path, synth):
    c, _ = synth
    path = tmp_path / "c.jsonl"
    io.save_collection(c, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[-1])
    rec["visible"][1] = False
    lines[-1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError):
        io.load_collection(path)


def test_bad_header(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"type": "header", "version": "other/9"}\n')
    with pytest.raises(ParseError, match="line 1"):
        io.load_collection(path)
    path.write_text("")
    with pytest.raises(ParseError):
        io.load_collection(path)


def test_score_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    S = rng.standard_normal((7, 7))
    io.save_scores(S, tmp_path / "s.bin")
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:8] == b"CTXSCORE" and int.from_bytes(raw[8:16], "little") == 7 and len(raw) == 16 + 49 * 8
    np.testing.assert_array_equal(io.load_scores(tmp_path / "s.bin"), S)
    (tmp_path / "bad.bin").write_bytes(b"NOTSCORE" + raw[8:])
    with pytest.raises(ParseError):
        io.load_scores(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        io.load_scores(tmp_path / "short.bin")


def test_model_round_trip(tmp_path):
    m = fusion.FusionModel.init(12, seed=4)
    io.save_model(m, tmp_path / "m.json")
    np.testing.assert_array_equal(io.load_model(tmp_path / "m.json").to_vector(), m.to_vector())
    io.save_model(np.array([0.1, 0.2, 0.3, 0.4]), tmp_path / "u.json")
    np.testing.assert_array_equal(io.load_model(tmp_path / "u.json"), [0.1, 0.2, 0.3, 0.4])


def test_truth_round_trip(tmp_path, synth):
    _, gt = synth
    io.save_truth(gt, tmp_path / "t.json")
    back = io.load_truth(tmp_path / "t.json")
    np.testing.assert_array_equal(back.labels, gt.labels)
    np.testing.assert_array_equal(back.events, gt.events)
    np.testing.assert_array_equal(back.event_prototypes, gt.event_prototypes)
    assert back.cliques == gt.cliques


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.json"
    target.write_text("old")
    with pytest.raises(RuntimeError):
        with io.atomic_write(target) as fh:
            fh.write("new")
            raise RuntimeError
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]
