import csv
import json
import subprocess
import sys

import pytest

from cams.cli import main

FAST = ["--fit-epochs", "20", "--contact-epochs-per-step", "5"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps({"frames_per_stage": 5}))
    cfg = ["--config", str(d / "cfg.json")]
    assert main(cfg + ["scene", "gen", "--kind", "hinged_laptop", "--out", str(d / "laptop.json"),
                       "--motion-out", str(d / "laptop_motion.json")]) == 0
    assert main(cfg + ["scene", "gen", "--kind", "box_on_ground", "--param", "slide=0,0,0",
                       "--out", str(d / "box.json"), "--motion-out", str(d / "box_motion.json")]) == 0
    return d, cfg


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_config_dump(capsys):
    assert main(["config", "dump"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["metrics"]["mu"] == 0.35
    assert d["contact"]["smooth_schedule"] == [1, 1, 10, 10, 500, 500]


def test_bad_config_is_input_error(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"nonsense": 1}))
    assert main(["--config", str(p), "config", "dump"]) == 2
    assert _err(capsys)["exit_code"] == 2
    p.write_text(json.dumps({"adam": {"beta1": 0.5}}))
    assert main(["--config", str(p), "config", "dump"]) == 2


def test_extract_is_deterministic(work):
    d, cfg = work
    args = ["extract", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
            "--stages", "2"]
    assert main(args + ["--out", str(d / "a.json")]) == 0
    assert main(args + ["--out", str(d / "b.json")]) == 0
    assert (d / "a.json").read_bytes() == (d / "b.json").read_bytes()
    cams = json.loads((d / "a.json").read_text())
    assert cams["stages"] == 2 and len(cams["boundaries"]) == 3
    h = cams["header"]
    assert h["tool"] == "cams" and h["seed"] == 0 and set(h["inputs"]) == {"scene", "motion"}
    assert all(len(v) == 64 for v in h["inputs"].values())


def test_extract_input_errors(work, tmp_path, capsys):
    d, _ = work
    motion = json.loads((d / "laptop_motion.json").read_text())
    motion["hand"] = motion["hand"][:-1]
    bad = tmp_path / "bad_motion.json"
    bad.write_text(json.dumps(motion))
    assert main(["extract", "--scene", str(d / "laptop.json"), "--motion", str(bad), "--stages", "2",
                 "--out", str(tmp_path / "x.json")]) == 2
    assert _err(capsys)["exit_code"] == 2
    assert main(["extract", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--stages", "3", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["extract", "--scene", str(tmp_path / "missing.json"), "--motion",
                 str(d / "laptop_motion.json"), "--stages", "2", "--out", str(tmp_path / "x.json")]) == 2


def test_synthesize_and_labels(work, capsys):
    d, cfg = work
    assert main(["extract", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--stages", "2", "--absolute-embedding", "--out", str(d / "abs.json")]) == 0
    out = d / "abs_motion.json"
    assert main(cfg + ["synthesize", "--scene", str(d / "laptop.json"), "--cams", str(d / "abs.json"),
                       "--absolute-embedding", "--h0", str(d / "laptop_motion.json"), "--out", str(out)]
                + FAST) == 0
    m = json.loads(out.read_text())
    assert m["header"]["ablations"] == ["absolute-embedding"]
    assert len(m["hand"]) == 11
    rep = json.loads((d / "abs_motion.report.json").read_text())
    assert len(rep["contact_steps"]) == 6
    # mismatched ablation flags and missing inputs are input errors
    assert main(cfg + ["synthesize", "--scene", str(d / "laptop.json"), "--cams", str(d / "abs.json"),
                       "--out", str(d / "x.json")] + FAST) == 2
    assert main(cfg + ["synthesize", "--scene", str(d / "laptop.json"), "--cams", str(d / "nope.json"),
                       "--out", str(d / "x.json")]) == 2
    capsys.readouterr()


def test_numerical_failure_exit_code(work, capsys):
    d, cfg = work
    assert main(["extract", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--stages", "2", "--out", str(d / "c.json")]) == 0
    code = main(cfg + ["synthesize", "--scene", str(d / "laptop.json"), "--cams", str(d / "c.json"),
                       "--h0", str(d / "laptop_motion.json"), "--out", str(d / "boom.json"),
                       "--fit-learning-rate", "1e300", "--fit-epochs", "5"])
    assert code == 3
    assert _err(capsys)["error"] == "NumericalError"


def test_evaluate_outputs(work, tmp_path, capsys):
    d, _ = work
    out = tmp_path / "m.json"
    assert main(["evaluate", "--scene", str(d / "box.json"), "--motion", str(d / "box_motion.json"),
                 "--out", str(out), "--per-frame", str(tmp_path / "pf.csv")]) == 0
    rep = json.loads(out.read_text())
    assert rep["cm_consistency"] == 1.0
    assert "articulation_consistency" not in rep
    rows = list(csv.reader(open(tmp_path / "pf.csv")))
    assert rows[0][:3] == ["frame", "cm_consistent", "penetration"] and len(rows) == 7
    assert main(["evaluate", "--scene", str(d / "box.json"), "--motion", str(d / "box_motion.json"),
                 "--out", str(out), "--articulation"]) == 2
    assert "revolute" in _err(capsys)["message"]
    assert main(["evaluate", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--out", str(out), "--articulation"]) == 0
    assert "articulation_consistency" in json.loads(out.read_text())


def test_library_and_plan(work):
    d, _ = work
    assert main(["extract", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--stages", "2", "--out", str(d / "lib_cams.json")]) == 0
    lib = d / "library.json"
    assert main(["library", "add", "--library", str(lib), "--scene", str(d / "laptop.json"),
                 "--cams", str(d / "lib_cams.json")]) == 0
    for seed in ("1", "1"):
        assert main(["--seed", seed, "plan", "--library", str(lib), "--scene", str(d / "laptop.json"),
                     "--jitter", "0.005", "--out", str(d / f"plan{seed}.json")]) == 0
    p = json.loads((d / "plan1.json").read_text())
    assert p["header"]["library_entry"] == 0 and p["header"]["seed"] == 1


def test_roundtrip_writes_artifacts(work):
    d, cfg = work
    out = d / "rt"
    assert main(["roundtrip", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--stages", "2", "--out-dir", str(out)] + FAST) == 0
    for name in ("cams", "motion", "synthesis_report", "metrics_source", "metrics_synthesized", "summary"):
        assert (out / f"{name}.json").is_file()
    s = json.loads((out / "summary.json").read_text())
    dev = s["fingertip_deviation"]
    assert dev["mean"] >= 0 and dev["max"] >= dev["mean"] and dev["pairs"] > 0
    assert "articulation_consistency" in s


def test_roundtrip_unequal_stages_reports_stage(work, capsys):
    d, _ = work
    assert main(["roundtrip", "--scene", str(d / "laptop.json"), "--motion", str(d / "laptop_motion.json"),
                 "--stages", "0,3,10", "--out-dir", str(d / "rt_bad")] + FAST) == 2
    assert _err(capsys)["stage"] == "extract"


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "cams.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("cams ")
