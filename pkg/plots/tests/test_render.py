"""Secondary-component tests: every documented figure kind renders from a real
run directory produced by the primary CLI, with exit 0 and untouched inputs.

Run with `pytest plots/tests` (kept out of the primary suite on purpose).
"""

import hashlib
import json
import os
import subprocess
import sys

import pytest

RENDER = os.path.join(os.path.dirname(__file__), "..", "render.py")


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def run_cli(args):
    return subprocess.run([sys.executable, "-m", "horizonlab.cli"] + args,
                          capture_output=True, text=True)


def run_render(spec_path):
    return subprocess.run([sys.executable, RENDER, "--spec", str(spec_path)],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def pg_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("pgrun")
    run_dir = root / "run"
    steps = run_cli(["jang", "continue", "--data", "pg:M=1",
                     "--schedule", "geo:1:0.6:0.01", "--out", str(run_dir)])
    assert steps.returncode == 0, steps.stderr
    blow = run_cli(["blowdown", "--run", str(run_dir), "--out", str(root / "blow")])
    assert blow.returncode == 0, blow.stderr
    eig = run_cli(["stability", "eig", "--data", "pg:M=1", "--radius", "2.0",
                   "--lmax", "11", "--out", str(root / "eig")])
    assert eig.returncode == 0, eig.stderr
    fol = run_cli(["foliate", "--data", "pg:M=1", "--seed-radius", "2.0",
                   "--direction", "+", "--cap", "3.0", "--lmax", "11",
                   "--out", str(root / "fol")])
    assert fol.returncode == 0, fol.stderr
    spec = root / "glue_spec.json"
    spec.write_text(json.dumps({"kind": "product", "interval": [0, 3],
                                "n_s": 24, "n_lat": 8}))
    glue = run_cli(["gluing-check", "--spec", str(spec), "--out", str(root / "glue")])
    assert glue.returncode == 0, glue.stderr
    return root


FIGURES = [
    ("blowdown_profile", {"blowdown": "blow/blowdown.csv"}),
    ("theta_profile", {"branch": "fol/branch.csv"}),
    ("foliation_curve", {"branch": "fol/branch.csv"}),
    ("eigenfunction_heatmap", {"eigenfunction": "eig/eigenfunction.csv"}),
    ("gluing_summary", {"gluing": "glue/gluing.json"}),
]


@pytest.mark.parametrize("kind,inputs", FIGURES)
def test_figure_kind_renders(pg_artifacts, tmp_path, kind, inputs):
    resolved = {k: str(pg_artifacts / v) for k, v in inputs.items()}
    before = {p: sha(p) for p in resolved.values()}
    out = tmp_path / f"{kind}.png"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": kind, "inputs": resolved,
                                "out": str(out), "title": kind}))
    proc = run_render(spec)
    assert proc.returncode == 0, proc.stderr
    assert out.exists() and out.stat().st_size > 0
    # rendering must not touch the artifacts
    assert {p: sha(p) for p in resolved.values()} == before


def test_spec_list_renders_all(pg_artifacts, tmp_path):
    specs = []
    for kind, inputs in FIGURES[:2]:
        specs.append({"kind": kind,
                      "inputs": {k: str(pg_artifacts / v) for k, v in inputs.items()},
                      "out": str(tmp_path / f"{kind}.png")})
    spec = tmp_path / "multi.json"
    spec.write_text(json.dumps(specs))
    proc = run_render(spec)
    assert proc.returncode == 0, proc.stderr
    for s in specs:
        assert os.path.exists(s["out"])


def test_missing_file_fails_with_path(tmp_path):
    spec = tmp_path / "spec.json"
    missing = str(tmp_path / "nope.csv")
    spec.write_text(json.dumps({"kind": "blowdown_profile",
                                "inputs": {"blowdown": missing},
                                "out": str(tmp_path / "x.png")}))
    proc = run_render(spec)
    assert proc.returncode != 0
    assert "nope.csv" in proc.stderr


def test_missing_column_fails(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("r,wrong\n1.0,2.0\n")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "blowdown_profile",
                                "inputs": {"blowdown": str(bad)},
                                "out": str(tmp_path / "x.png")}))
    proc = run_render(spec)
    assert proc.returncode != 0
    assert "u" in proc.stderr


def test_empty_data_warns_but_succeeds(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("r,u,label\n")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "blowdown_profile",
                                "inputs": {"blowdown": str(empty)},
                                "out": str(tmp_path / "x.png")}))
    proc = run_render(spec)
    assert proc.returncode == 0
    assert "warning" in proc.stderr
    assert (tmp_path / "x.png").exists()


def test_plotted_extrema_match_csv(pg_artifacts, tmp_path):
    # spot-check that rendering does not reinterpret values: the drawn curve's
    # extrema equal the CSV extrema (probed through the matplotlib API)
    sys.path.insert(0, os.path.dirname(RENDER))
    try:
        import render as render_mod
    finally:
        sys.path.pop(0)
    import matplotlib.pyplot as plt
    cols = render_mod.read_csv(str(pg_artifacts / "blow" / "blowdown.csv"))
    fig, ax = plt.subplots()
    render_mod.render_blowdown_profile(
        {"inputs": {"blowdown": str(pg_artifacts / "blow" / "blowdown.csv")}}, ax)
    line = ax.get_lines()[0]
    assert float(line.get_ydata().min()) == float(cols["u"].min())
    assert float(line.get_ydata().max()) == float(cols["u"].max())
    plt.close(fig)
