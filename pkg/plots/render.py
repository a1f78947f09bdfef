#!/usr/bin/env python3
"""Render figures from horizonlab run artifacts.

Reads only the documented CSV/JSON outputs of the primary CLI and never
recomputes or mutates anything: display only.

Usage: render.py --spec figure.json
The spec is one object or a list of objects:
    {"kind": "...", "inputs": {...}, "out": "figure.png",
     "title": "...", "xlim": [a, b], "ylim": [a, b]}

Figure kinds and their inputs:
    blowdown_profile      inputs.blowdown  -> blowdown.csv
    theta_profile         inputs.branch    -> branch.csv (tau vs r, MOTS roots)
    foliation_curve       inputs.branch    -> branch.csv (lambda1-colored)
    eigenfunction_heatmap inputs.eigenfunction -> eigenfunction.csv
    gluing_summary        inputs.gluing    -> gluing.json
"""

import argparse
import json
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class RenderError(Exception):
    pass


def read_csv(path):
    try:
        with open(path) as f:
            header = f.readline().strip().split(",")
            rows = [line.strip().split(",") for line in f if line.strip()]
    except FileNotFoundError:
        raise RenderError(f"input file not found: {path}")
    return {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}


def need(cols, names, path):
    missing = [n for n in names if n not in cols]
    if missing:
        raise RenderError(f"{path} is missing column(s) {missing}")


def empty_plot(ax, message):
    ax.text(0.5, 0.5, f"empty data set\n{message}", ha="center", va="center",
            transform=ax.transAxes)
    ax.set_xticks([])
    ax.set_yticks([])
    print(f"warning: {message}", file=sys.stderr)


def render_blowdown_profile(spec, ax):
    path = spec["inputs"]["blowdown"]
    cols = read_csv(path)
    need(cols, ["r", "u", "label"], path)
    if cols["r"].size == 0:
        return empty_plot(ax, f"no rows in {path}")
    r, u, label = cols["r"], cols["u"], cols["label"]
    ax.plot(r, u, color="tab:blue", lw=1.5, label="u(r)")
    blow = label != 0
    if blow.any():
        ax.fill_between(r, np.min(u), np.max(u), where=blow, alpha=0.15,
                        color="tab:red", label="blowup region")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("r")
    ax.set_ylabel("u")
    ax.legend(loc="best")


def render_theta_profile(spec, ax):
    path = spec["inputs"]["branch"]
    cols = read_csv(path)
    need(cols, ["tau", "r_mean"], path)
    if cols["tau"].size == 0:
        return empty_plot(ax, f"no rows in {path}")
    r, tau = cols["r_mean"], cols["tau"]
    order = np.argsort(r)
    r, tau = r[order], tau[order]
    ax.plot(r, tau, color="tab:blue", lw=1.5)
    ax.axhline(0.0, color="k", lw=0.5)
    # annotate sign changes of the plotted curve (apparent-horizon radii)
    sign = np.sign(tau)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        r0 = r[i] - tau[i] * (r[i + 1] - r[i]) / (tau[i + 1] - tau[i])
        ax.axvline(r0, color="tab:red", ls="--", lw=1.0)
        ax.annotate(f"MOTS r={r0:.4g}", (r0, 0.0),
                    textcoords="offset points", xytext=(4, 6), fontsize=8)
    ax.set_xlabel("r")
    ax.set_ylabel("theta")


def render_foliation_curve(spec, ax):
    path = spec["inputs"]["branch"]
    cols = read_csv(path)
    need(cols, ["tau", "r_mean", "lambda1"], path)
    if cols["tau"].size == 0:
        return empty_plot(ax, f"no rows in {path}")
    sc = ax.scatter(cols["tau"], cols["r_mean"], c=cols["lambda1"],
                    cmap="viridis", s=18)
    ax.plot(cols["tau"], cols["r_mean"], color="0.6", lw=0.8, zorder=0)
    plt.colorbar(sc, ax=ax, label="lambda1")
    ax.set_xlabel("tau")
    ax.set_ylabel("r_mean")


def render_eigenfunction_heatmap(spec, ax):
    path = spec["inputs"]["eigenfunction"]
    cols = read_csv(path)
    need(cols, ["lat", "lon", "beta"], path)
    if cols["lat"].size == 0:
        return empty_plot(ax, f"no rows in {path}")
    lats = np.unique(cols["lat"])
    lons = np.unique(cols["lon"])
    if lons.size == 1:
        order = np.argsort(cols["lat"])
        ax.plot(cols["lat"][order], cols["beta"][order], lw=1.5)
        ax.set_xlabel("lat")
        ax.set_ylabel("beta")
        return
    grid = np.full((lats.size, lons.size), np.nan)
    li = np.searchsorted(lats, cols["lat"])
    lj = np.searchsorted(lons, cols["lon"])
    grid[li, lj] = cols["beta"]
    im = ax.pcolormesh(lons, lats, grid, shading="nearest", cmap="magma")
    plt.colorbar(im, ax=ax, label="beta")
    ax.set_xlabel("lon")
    ax.set_ylabel("lat")


def render_gluing_summary(spec, ax):
    path = spec["inputs"]["gluing"]
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise RenderError(f"input file not found: {path}")
    for key in ("lambda_star",):
        if key not in doc:
            raise RenderError(f"{path} is missing key {key!r}")
    names, values = ["lambda*"], [doc["lambda_star"]]
    if "lambda1" in doc:
        names += ["lambda1", "bound"]
        values += [doc["lambda1"], doc.get("bound", doc["lambda_star"] / 4.0)]
    ax.bar(names, values, color=["tab:blue", "tab:green", "tab:orange"][:len(names)])
    met = doc.get("bound_met")
    if met is not None:
        ax.set_title(f"bound met: {met}")
    ax.set_ylabel("eigenvalue")


KINDS = {
    "blowdown_profile": render_blowdown_profile,
    "theta_profile": render_theta_profile,
    "foliation_curve": render_foliation_curve,
    "eigenfunction_heatmap": render_eigenfunction_heatmap,
    "gluing_summary": render_gluing_summary,
}


def render(spec):
    kind = spec.get("kind")
    if kind not in KINDS:
        raise RenderError(f"unknown figure kind {kind!r} (have {sorted(KINDS)})")
    if "out" not in spec or "inputs" not in spec:
        raise RenderError("figure spec needs 'inputs' and 'out'")
    fig, ax = plt.subplots(figsize=spec.get("figsize", (6, 4)))
    KINDS[kind](spec, ax)
    if "title" in spec:
        ax.set_title(spec["title"])
    if "xlim" in spec:
        ax.set_xlim(spec["xlim"])
    if "ylim" in spec:
        ax.set_ylim(spec["ylim"])
    fig.tight_layout()
    fig.savefig(spec["out"], dpi=spec.get("dpi", 120), metadata={"Software": ""})
    plt.close(fig)
    print(f"wrote {spec['out']}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--spec", required=True, help="figure spec JSON path")
    args = parser.parse_args(argv)
    try:
        with open(args.spec) as f:
            specs = json.load(f)
    except FileNotFoundError:
        print(f"error: spec file not found: {args.spec}", file=sys.stderr)
        return 1
    if isinstance(specs, dict):
        specs = [specs]
    try:
        for spec in specs:
            render(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
