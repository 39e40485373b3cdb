import json
import os
import subprocess
import sys

import pytest

from eqstream.cli import main
from eqstream.events import EventStream, SensorGeometry, read_events, write_events
from conftest import FIXTURES

BAR = os.path.join(FIXTURES, "moving_bar")
GOLDEN_V2E_EVENTS = 24832
GOLDEN_EQS_ESIM_V2E = 0.9999519192294479     # weights seed 0, default metric flags


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def sims(tmp_path_factory):
    d = tmp_path_factory.mktemp("sims")
    paths = {}
    for m in ("esim", "v2e", "pix2nvs"):
        paths[m] = d / f"{m}.evs"
        assert main(["simulate", "--frames", BAR, "--method", m, "--seed", "0", "--out", str(paths[m])]) == 0
    return paths


def test_simulate_golden(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--frames", BAR, "--method", "v2e", "--seed", "0", "--out", tmp_path / "a.evs")
    assert code == 0
    doc = json.loads(out)
    assert doc["events"] == GOLDEN_V2E_EVENTS == len(read_events(tmp_path / "a.evs"))
    assert doc["on"] + doc["off"] == doc["events"] and doc["geometry"] == [64, 64]


def test_simulate_config_file_and_text(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method": "esim", "esim": {"contrast_threshold": 0.3}}))
    code, out, _ = run(capsys, "simulate", "--frames", BAR, "--config", cfg, "--format", "text", "--out", tmp_path / "e.csv")
    assert code == 0 and json.loads(out)["method"] == "esim"
    assert (tmp_path / "e.csv").read_text().startswith("t_us,x,y,p\n")


def test_simulate_errors(capsys, tmp_path):
    assert run(capsys, "simulate", "--frames", BAR, "--method", "dvs", "--out", tmp_path / "x")[0] == 3
    assert run(capsys, "simulate", "--frames", tmp_path, "--method", "v2e", "--out", tmp_path / "x")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"method": "v2e", "v2e": {"bogus": 1}}))
    assert run(capsys, "simulate", "--frames", BAR, "--config", bad, "--out", tmp_path / "x")[0] == 3


def test_eqs_golden(capsys, sims, tmp_path):
    code, out, _ = run(capsys, "eqs", sims["esim"], sims["v2e"], "--weights-seed", "0", "--out", tmp_path / "r.json")
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["eqs"] - GOLDEN_EQS_ESIM_V2E) < 1e-6
    assert doc["distance"] == pytest.approx(1 - GOLDEN_EQS_ESIM_V2E, rel=1e-6)
    assert (tmp_path / "r.json").read_text() == out
    assert [s["scale"] for s in doc["per_scale"]] == ["o1", "o2", "o3"]
    assert doc["weights"] == {"source": "seeded", "seed": 0}


def test_eqs_self_is_one(capsys, sims):
    code, out, _ = run(capsys, "eqs", sims["esim"], sims["esim"])
    assert code == 0 and json.loads(out)["eqs"] == 1.0


def test_eqs_weight_file(capsys, sims, tmp_path):
    w = tmp_path / "w.eqw"
    assert run(capsys, "weights", "init", "--seed", "0", "--out", w)[0] == 0
    by_file = json.loads(run(capsys, "eqs", sims["esim"], sims["v2e"], "--weights", w)[1])
    by_seed = json.loads(run(capsys, "eqs", sims["esim"], sims["v2e"], "--weights-seed", "0")[1])
    assert by_file["eqs"] == by_seed["eqs"]
    # bins=5 network does not match a bins=10 weight file
    assert run(capsys, "eqs", sims["esim"], sims["v2e"], "--weights", w, "--bins", "5")[0] == 4
    w.write_bytes(w.read_bytes()[:100])
    assert run(capsys, "eqs", sims["esim"], sims["v2e"], "--weights", w)[0] == 4


def test_eqs_config_file(capsys, sims, tmp_path):
    cfg = tmp_path / "m.json"
    cfg.write_text(json.dumps({"bins": 5, "window_us": 20000, "patch": 2}))
    code, out, _ = run(capsys, "eqs", sims["esim"], sims["v2e"], "--config", cfg)
    assert code == 0
    doc = json.loads(out)
    assert doc["settings"]["num_bins"] == 5 and doc["settings"]["patch_sizes"] == [2, 2, 2]
    assert doc["settings"]["num_steps"] == 5          # 100 ms clip / 20 ms windows
    cfg.write_text(json.dumps({"bins": 5, "colour": "red"}))
    assert run(capsys, "eqs", sims["esim"], sims["v2e"], "--config", cfg)[0] == 3


def test_eqs_text_inputs(capsys, tmp_path):
    g = SensorGeometry(32, 32)
    s = EventStream.from_events(g, [(0, 1, 1, 1), (10, 2, 2, -1)])
    write_events(s, tmp_path / "a.csv", "text")
    code, out, _ = run(capsys, "eqs", tmp_path / "a.csv", tmp_path / "a.csv", "--width", 32, "--height", 32)
    assert code == 0 and json.loads(out)["eqs"] == 1.0
    (tmp_path / "b.csv").write_text("t_us,x,y,p\n0,1,1,0\n")
    assert run(capsys, "eqs", tmp_path / "b.csv", tmp_path / "a.csv")[0] == 2
    assert run(capsys, "eqs", tmp_path / "missing.evs", tmp_path / "a.csv")[0] == 2


def test_bad_flags_exit_3(capsys, sims):
    assert run(capsys, "eqs", sims["esim"], sims["v2e"], "--bins", "zero")[0] == 3
    assert run(capsys, "eqs", sims["esim"], sims["v2e"], "--threads", "0")[0] == 3
    assert run(capsys, "eqs", sims["esim"], sims["v2e"], "--weights-seed", "1", "--weights", "x")[0] == 3
    assert run(capsys, "nonsense")[0] == 3


def test_perturb(capsys, sims, tmp_path):
    code, out, _ = run(capsys, "perturb", sims["esim"], "--out-dir", tmp_path, "--seed", "0")
    assert code == 0
    rows = json.loads(out)["outputs"]
    counts = [r["events"] for r in rows]
    assert len(rows) == 5 and all(a < b for a, b in zip(counts, counts[1:]))
    assert read_events(tmp_path / "perturbed_00.evs") == read_events(sims["esim"])
    code, out, _ = run(capsys, "perturb", sims["esim"], "--out-dir", tmp_path, "--levels", "1,-2")
    assert code == 3


def test_sweep(capsys, sims, tmp_path):
    code, out, err = run(capsys, "sweep", sims["esim"], "--seed", "0", "--weights-seed", "0")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "level,events,eqs" and len(lines) == 6
    scores = [float(l.split(",")[2]) for l in lines[1:]]
    assert scores[0] == 1.0 and all(a >= b for a, b in zip(scores, scores[1:]))
    rho = float(err.strip().splitlines()[-1].split("=")[1])
    assert rho <= -0.9


def test_sweep_single_level_and_bad_base(capsys, sims, tmp_path):
    code, out, err = run(capsys, "sweep", sims["esim"], "--levels", "0")
    assert code == 0 and out.strip().splitlines()[1].endswith(",1.0")
    assert "nan" in err
    bad = tmp_path / "bad.evs"
    bad.write_bytes(b"EVS1garbage")
    assert run(capsys, "sweep", bad)[0] == 2


def test_weights_inspect(capsys, tmp_path):
    w = tmp_path / "w.eqw"
    code, out, _ = run(capsys, "weights", "init", "--bins", "10", "--seed", "3", "--out", w)
    assert code == 0 and json.loads(out)["tensors"] == 48
    code, out, _ = run(capsys, "weights", "inspect", w, "--bins", "10")
    doc = json.loads(out)
    assert code == 0 and doc["matches_config"] is True and doc["values"] == 645696
    assert doc["config_hash"] == "bf67b99009a6b5f6"
    assert json.loads(run(capsys, "weights", "inspect", w, "--bins", "4")[1])["matches_config"] is False
    (tmp_path / "junk").write_bytes(b"\0" * 10)
    assert run(capsys, "weights", "inspect", tmp_path / "junk")[0] == 4
    assert run(capsys, "weights", "init")[0] == 3


def _outputs(tmp, argv, capsys):
    code, out, err = run(capsys, *argv)
    assert code == 0
    files = {p: open(os.path.join(tmp, p), "rb").read() for p in sorted(os.listdir(tmp))}
    return out, files


@pytest.mark.parametrize("cmd", ["simulate", "eqs", "perturb", "sweep", "weights"])
def test_determinism_across_threads(capsys, sims, tmp_path, cmd):
    def argv(threads):
        common = ["--threads", threads]
        if cmd == "simulate":
            return ["simulate", "--frames", BAR, "--method", "v2e", "--out", tmp_path / "o.evs"] + common
        if cmd == "eqs":
            return ["eqs", sims["esim"], sims["pix2nvs"], "--steps", "2", "--out", tmp_path / "r.json"] + common
        if cmd == "perturb":
            return ["perturb", sims["v2e"], "--out-dir", tmp_path, "--levels", "0,3"] + common
        if cmd == "sweep":
            return ["sweep", sims["v2e"], "--levels", "0,3", "--out", tmp_path / "s.csv"] + common
        return ["weights", "init", "--seed", "5", "--out", tmp_path / "w.eqw"] + common

    first = _outputs(tmp_path, argv("1"), capsys)
    second = _outputs(tmp_path, argv("8"), capsys)
    third = _outputs(tmp_path, argv("1"), capsys)
    assert first == second == third


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "eqstream.cli", "simulate", "--frames", str(tmp_path),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2 and "error" in proc.stderr
