"""Run-directory plumbing: deterministic CSV/JSON artifacts, checksums, and
round-tripping of continuation runs for the post-processing subcommands.

CSV cells render with 17 significant digits so that re-running a config
reproduces byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, columns):
    cols = [np.asarray(c) for c in columns]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in zip(*cols):
            f.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    return cols


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON-serializable: {type(x)}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, default=_json_default).encode()).hexdigest()


@dataclass
class Manifest:
    """Checksummed record of one CLI invocation."""

    config: dict
    out_dir: str
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def add(self, path):
        self.artifacts.append(path)
        return path

    def write(self):
        import horizonlab
        import scipy
        doc = {
            "config": self.config,
            "config_hash": config_hash(self.config),
            "versions": {"horizonlab": horizonlab.__version__,
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "artifacts": [{"path": os.path.relpath(p, self.out_dir),
                           "sha256": sha256_file(p)}
                          for p in sorted(self.artifacts)],
            "timings": self.timings,
            "checks": self.checks,
        }
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True, default=_json_default)
            f.write("\n")
        return path


# ---------------------------------------------------------------------------
# Continuation run directories
# ---------------------------------------------------------------------------

def save_run(run, out_dir, data_spec: str, manifest: Optional[Manifest] = None):
    """Per-step CSVs (r, f, u_s, |grad f|) plus a JSON run summary."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, st in enumerate(run.steps):
        p = os.path.join(out_dir, f"step_{i:03d}.csv")
        write_csv(p, ["r", "f", "u_s", "grad_abs"],
                  [st.r, st.f, st.u, np.abs(st.monitors["grad_f"])])
        paths.append(p)
    summary = {
        "data_spec": data_spec,
        "chart": _chart_doc(run.data.chart),
        "schedule": run.schedule.tolist(),
        "steps": [{"s": st.s, "converged": st.converged,
                   "newton_iters": st.newton_iters, "residual": st.residual,
                   "monitors": {k: v for k, v in st.monitors.items()
                                if not isinstance(v, np.ndarray)}}
                  for st in run.steps],
        "monotonicity": {k: v for k, v in run.monotonicity.items()},
        "gap_reports": run.gap_reports,
    }
    p = write_json(os.path.join(out_dir, "run.json"), summary)
    paths.append(p)
    if manifest is not None:
        for q in paths:
            manifest.add(q)
    return paths


def _chart_doc(chart):
    if chart.kind == "radial":
        return {"kind": "radial", "r_min": chart.r_min, "r_max": chart.r_max,
                "n_points": chart.n_points, "spacing": chart.spacing}
    return {"kind": "periodic_box", "side_length": chart.side_length,
            "n_points": chart.n_points}


def load_run(run_dir):
    """Rebuild a ContinuationRun from a saved run directory (monitors are
    recomputed from the stored solution fields)."""
    from .catalog import catalog_load, load_config, _SHORTHAND
    from .geometry import periodic_chart, radial_chart
    from .jang import ContinuationRun, JangProblem, JangSolveResult, _Discretization, _monitors
    from .jang import gap_check, monotonicity_check

    with open(os.path.join(run_dir, "run.json")) as f:
        summary = json.load(f)
    cdoc = summary["chart"]
    if cdoc["kind"] == "radial":
        chart = radial_chart(cdoc["r_min"], cdoc["r_max"], cdoc["n_points"],
                             cdoc.get("spacing", "uniform"))
    else:
        chart = periodic_chart(cdoc["side_length"], cdoc["n_points"])
    spec = summary["data_spec"]
    if spec.endswith(".json"):
        base = load_config(spec)
        data = catalog_load(base.name, base.params, chart)
    else:
        head = spec.partition(":")[0]
        params = {}
        if ":" in spec:
            for item in spec.partition(":")[2].split(","):
                key, _, val = item.partition("=")
                params[key] = float(val)
        data = catalog_load(_SHORTHAND[head], params, chart)

    steps = []
    for i, meta in enumerate(summary["steps"]):
        cols = read_csv(os.path.join(run_dir, f"step_{i:03d}.csv"))
        problem = JangProblem(data=data, s=meta["s"])
        disc = _Discretization(problem)
        steps.append(JangSolveResult(
            f=cols["f"], r=cols["r"], s=meta["s"], residual=meta["residual"],
            newton_iters=meta["newton_iters"], converged=meta["converged"],
            monitors=_monitors(disc, cols["f"], meta["s"])))
    run = ContinuationRun(data=data, schedule=np.array(summary["schedule"]),
                          steps=steps, gap_reports=[], monotonicity={})
    run.gap_reports = [gap_check(run, i, i + 1) for i in range(len(steps) - 1)]
    run.monotonicity = monotonicity_check(run)
    run.data_spec = spec
    return run
