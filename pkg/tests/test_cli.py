import json
import os

import numpy as np

from horizonlab.cli import main
from horizonlab.runio import read_csv


def test_pipeline_on_periodic(tmp_path):
    run_dir = tmp_path / "run"
    rc = main(["jang", "continue", "--data", "periodic:c=0.1",
               "--schedule", "geo:0.5:0.5:0.004", "--out", str(run_dir)])
    assert rc == 0
    assert (run_dir / "run.json").exists()
    assert (run_dir / "manifest.json").exists()

    blow_dir = tmp_path / "blow"
    assert main(["blowdown", "--run", str(run_dir), "--out", str(blow_dir)]) == 0
    cols = read_csv(blow_dir / "blowdown.csv")
    assert set(cols) == {"r", "u", "label", "eta", "levelset_residual",
                         "companion_residual"}
    assert np.allclose(cols["u"], -0.3, atol=1e-9)

    struct_dir = tmp_path / "struct"
    assert main(["structure", "--run", str(run_dir), "--out", str(struct_dir)]) == 0
    doc = json.loads((struct_dir / "structure.json").read_text())
    assert doc["tiles_support"]


def test_surface_and_stability_outputs(tmp_path):
    out = tmp_path / "theta"
    assert main(["surface", "theta", "--data", "pg:M=1", "--radius", "2.0",
                 "--lmax", "11", "--out", str(out)]) == 0
    cols = read_csv(out / "theta.csv")
    assert list(cols) == ["lat", "lon", "H", "trk", "theta"]
    assert np.max(np.abs(cols["theta"])) < 1e-9

    eig_out = tmp_path / "eig"
    assert main(["stability", "eig", "--data", "pg:M=1", "--radius", "2.0",
                 "--lmax", "11", "--out", str(eig_out)]) == 0
    doc = json.loads((eig_out / "eig.json").read_text())
    assert abs(doc["lambda1"] - 0.25) < 1e-9
    assert doc["class"] == "strictly_stable"


def test_foliate_artifacts(tmp_path):
    out = tmp_path / "fol"
    assert main(["foliate", "--data", "pg:M=1", "--seed-radius", "2.0",
                 "--direction", "+", "--cap", "0.1", "--lmax", "11",
                 "--out", str(out)]) == 0
    cols = read_csv(out / "branch.csv")
    assert list(cols) == ["tau", "r_mean", "lambda1", "psi_min", "psi_max", "sup_h2"]
    assert cols["tau"].size >= 2


def test_gluing_check_cli(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "product", "interval": [0, 3],
                                "n_s": 24, "n_lat": 8}))
    out = tmp_path / "glue"
    assert main(["gluing-check", "--spec", str(spec), "--out", str(out)]) == 0
    doc = json.loads((out / "gluing.json").read_text())
    assert abs(doc["lambda1"] - 0.25) < 1e-6


def test_malformed_schedule_exit_code(tmp_path):
    rc = main(["jang", "continue", "--data", "pg:M=1", "--schedule", "geo:nope",
               "--out", str(tmp_path / "x")])
    assert rc == 2


def test_unknown_data_exit_code(tmp_path):
    rc = main(["jang", "solve", "--data", "mystery", "--s", "0.5",
               "--out", str(tmp_path / "x")])
    assert rc == 2


def test_determinism_identical_checksums(tmp_path):
    hashes = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["jang", "continue", "--data", "periodic:c=0.1",
                     "--schedule", "geo:0.5:0.5:0.03", "--out", str(out)]) == 0
        doc = json.loads((out / "manifest.json").read_text())
        hashes.append({a["path"]: a["sha256"] for a in doc["artifacts"]})
    assert hashes[0] == hashes[1]


def test_verify_all_trivial_suite(tmp_path):
    rc = main(["verify-all", "--data", "flat_vacuum", "--out", str(tmp_path / "v")])
    assert rc == 0
    doc = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert all(entry["passed"] for entry in doc)
    names = {entry["name"] for entry in doc}
    assert "mms_convergence" in names and "foliation_oracle" in names
    assert "universal_bound_monotonicity" not in names  # PG-tagged check filtered


def test_run_artifact_count_matches_schedule(tmp_path):
    from horizonlab.jang import parse_schedule
    run_dir = tmp_path / "run"
    schedule = "geo:0.5:0.5:0.05"
    assert main(["jang", "continue", "--data", "periodic:c=0.1",
                 "--schedule", schedule, "--out", str(run_dir)]) == 0
    csvs = sorted(run_dir.glob("step_*.csv"))
    assert len(csvs) == parse_schedule(schedule).size


def test_run_roundtrip_with_json_config(tmp_path):
    cfg = {"data": {"name": "periodic_constant_k", "params": {"c": 0.1}},
           "chart": {"kind": "periodic_box", "side_length": 1.0, "n_points": 32}}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    run_dir = tmp_path / "run"
    assert main(["jang", "continue", "--data", str(cfg_path),
                 "--schedule", "geo:0.5:0.5:0.05", "--out", str(run_dir)]) == 0
    from horizonlab.runio import load_run
    run = load_run(str(run_dir))
    assert run.data.chart.n_points == 32
    assert np.allclose(run.final.u, -0.3, atol=1e-9)
