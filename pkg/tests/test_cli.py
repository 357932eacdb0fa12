import json
import subprocess
import sys

import pytest

from ctxsolve.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    args = ["--identities", "6", "--events", "3"]
    assert main(["gen", "--collection", str(d / "c.jsonl"), "--truth", str(d / "t.json"), "--seed", "1", *args]) == 0
    assert main(["gen", "--collection", str(d / "tr.jsonl"), "--truth", str(d / "trt.json"), "--seed", "2", *args]) == 0
    assert main(["train-fusion", "--collection", str(d / "tr.jsonl"), "--truth", str(d / "trt.json"),
                 "--out", str(d / "m.json"), "--epochs", "3"]) == 0
    assert main(["train-fusion", "--collection", str(d / "tr.jsonl"), "--truth", str(d / "trt.json"),
                 "--out", str(d / "u.json"), "--kind", "uniform", "--step", "0.25"]) == 0
    assert main(["score", "--collection", str(d / "c.jsonl"), "--model", str(d / "m.json"), "--out", str(d / "s.bin")]) == 0
    assert main(["score", "--collection", str(d / "c.jsonl"), "--model", str(d / "u.json"), "--out", str(d / "su.bin")]) == 0
    return d


def solve(d, out, scores="s.bin", *extra):
    return main(["solve", "--collection", str(d / "c.jsonl"), "--scores", str(d / scores), "--events", "3",
                 "--out", str(d / out), "--trace", str(d / (out + ".trace")), *extra])


def test_solve_is_byte_deterministic(workdir):
    assert solve(workdir, "p1.json") == 0
    assert solve(workdir, "p2.json") == 0
    assert (workdir / "p1.json").read_bytes() == (workdir / "p2.json").read_bytes()
    assert (workdir / "p1.json.trace").read_bytes() == (workdir / "p2.json.trace").read_bytes()
    pred = json.loads((workdir / "p1.json").read_text())
    assert pred["settings"]["hyperparams"]["alpha"] == 0.05
    first = json.loads((workdir / "p1.json.trace").read_text().splitlines()[0])
    assert first["iteration"] == 0 and "wall_time" not in first


def test_visual_mode_equals_full_mode_without_context(workdir):
    assert solve(workdir, "pv.json", "su.bin", "--mode", "visual") == 0
    assert solve(workdir, "pz.json", "su.bin", "--mode", "ranet-p-e", "--alpha", "0", "--beta", "0") == 0
    a = json.loads((workdir / "pv.json").read_text())
    b = json.loads((workdir / "pz.json").read_text())
    assert a["labels"] == b["labels"]


def test_eval_with_swap(workdir, capsys):
    solve(workdir, "pe.json")
    out = workdir / "report.json"
    assert main(["eval", "--predictions", str(workdir / "pe.json"), "--truth", str(workdir / "t.json"),
                 "--collection", str(workdir / "c.jsonl"), "--scores", str(workdir / "s.bin"), "--swap",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["accuracy_mean"] == (rep["accuracy_forward"] + rep["accuracy_backward"]) / 2
    assert 0 <= rep["event_recovery"] <= 1
    assert main(["eval", "--predictions", str(workdir / "pe.json"), "--truth", str(workdir / "t.json"),
                 "--collection", str(workdir / "c.jsonl"), "--swap"]) == 2


def test_exit_codes(workdir, tmp_path, capsys):
    assert solve(workdir, "bad.json", "s.bin", "--events", "100000") == 2
    lines = (workdir / "c.jsonl").read_text().splitlines()
    (tmp_path / "broken.jsonl").write_text("\n".join(lines[:-1]) + "\n" + lines[-1][:40] + "\n")
    rc = main(["solve", "--collection", str(tmp_path / "broken.jsonl"), "--scores", str(workdir / "s.bin"),
               "--out", str(tmp_path / "x.json")])
    assert rc == 1
    assert "line" in capsys.readouterr().err
    with pytest.raises(SystemExit) as err:
        main(["solve", "--alpha"])
    assert err.value.code == 2


def test_sweep_empty_table(capsys):
    assert main(["sweep", "--rates"]) == 0
    assert json.loads(capsys.readouterr().out)["rows"] == []


def test_console_entry_point(workdir):
    out = subprocess.run([sys.executable, "-m", "ctxsolve.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "train-fusion" in out.stdout
