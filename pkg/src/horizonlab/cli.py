"""Command-line entry point: one orchestrator over all modules with JSON
configuration, run directories, deterministic CSV/JSON artifacts, and the
acceptance suite behind `verify-all`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import runio
from .catalog import UnknownDataError, load_config, validate_decay
from .geometry import NotApplicableError
from .jang import ScheduleParseError, JangProblem, continuation, solve
from .spheregrid import SphereGrid


def _out_dir(args):
    out = args.out or "horizonlab-out"
    os.makedirs(out, exist_ok=True)
    return out


def _grid_args(args):
    return SphereGrid(args.lmax + 1, 1, lmax=args.lmax)


def _lat(grid):
    return np.pi / 2 - grid.theta


def cmd_data_validate(args):
    data = load_config(args.data, args.grid)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "data validate", "data": args.data}, out_dir=out)
    t0 = time.perf_counter()
    report = validate_decay(data)
    doc = {"name": data.name, "params": data.params,
           "asymptotically_flat": data.asymptotically_flat,
           "test_mode": data.test_mode,
           "exponents": report.exponents, "targets": report.targets,
           "passes": report.passes, "overall": report.overall,
           "n_outer_nodes": report.n_nodes}
    manifest.add(runio.write_json(os.path.join(out, "decay_report.json"), doc))
    manifest.timings["seconds"] = time.perf_counter() - t0
    manifest.checks["decay_overall"] = report.overall
    manifest.write()
    shown = {k: (round(float(v), 3) if np.isfinite(v) else "inf")
             for k, v in report.exponents.items()}
    print(f"decay validation: overall={'pass' if report.overall else 'fail'} exponents={shown}")
    return 0


def cmd_surface_theta(args):
    from .surfaces import Surface, surface_geometry
    data = load_config(args.data, args.grid)
    grid = _grid_args(args)
    geom = surface_geometry(data, Surface.round_sphere(args.radius, grid))
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "surface theta", "data": args.data,
                                      "radius": args.radius, "lmax": args.lmax},
                              out_dir=out)
    lat = np.repeat(_lat(grid), grid.n_lon)
    lon = np.tile(grid.phi, grid.n_lat)
    manifest.add(runio.write_csv(
        os.path.join(out, "theta.csv"),
        ["lat", "lon", "H", "trk", "theta"],
        [lat, lon, geom.H.reshape(-1), geom.tr_sigma_k.reshape(-1),
         geom.theta.reshape(-1)]))
    manifest.write()
    print(f"theta on r={args.radius}: mean={np.mean(geom.theta):.12g} "
          f"oscillation={np.max(geom.theta) - np.min(geom.theta):.3e}")
    return 0


def cmd_stability_eig(args):
    from .stability import assemble, principal_eig
    from .surfaces import Surface
    data = load_config(args.data, args.grid)
    grid = _grid_args(args)
    op = assemble(data, Surface.round_sphere(args.radius, grid))
    res = principal_eig(op)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "stability eig", "data": args.data,
                                      "radius": args.radius, "lmax": args.lmax},
                              out_dir=out)
    manifest.add(runio.write_json(os.path.join(out, "eig.json"), {
        "lambda1": res.lambda1, "class": res.stability_class,
        "residual": res.residual, "tol_marginal": res.tol_marginal,
        "Theta": op.Theta}))
    lat = np.repeat(_lat(grid), grid.n_lon)
    lon = np.tile(grid.phi, grid.n_lat)
    manifest.add(runio.write_csv(os.path.join(out, "eigenfunction.csv"),
                                 ["lat", "lon", "beta"],
                                 [lat, lon, res.beta.reshape(-1)]))
    manifest.write()
    print(f"lambda1 = {res.lambda1:.12g} ({res.stability_class}), "
          f"residual {res.residual:.2e}")
    return 0


def cmd_jang_solve(args):
    data = load_config(args.data, args.grid)
    problem = JangProblem(data=data, s=args.s)
    result = solve(problem)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "jang solve", "data": args.data, "s": args.s},
                              out_dir=out)
    manifest.add(runio.write_csv(
        os.path.join(out, "solution.csv"), ["r", "f", "u_s", "grad_abs"],
        [result.r, result.f, result.u, np.abs(result.monitors["grad_f"])]))
    manifest.add(runio.write_json(os.path.join(out, "solve.json"), {
        "s": result.s, "converged": result.converged,
        "newton_iters": result.newton_iters, "residual": result.residual,
        "monitors": {k: v for k, v in result.monitors.items()
                     if not isinstance(v, np.ndarray)}}))
    manifest.checks["converged"] = result.converged
    manifest.write()
    print(f"s={args.s}: converged={result.converged} iters={result.newton_iters} "
          f"max|sf|={result.monitors['max_sf']:.6g} (mu1={result.monitors['mu1']:.6g})")
    return 0


def cmd_jang_continue(args):
    data = load_config(args.data, args.grid)
    run = continuation(data, args.schedule)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "jang continue", "data": args.data,
                                      "schedule": args.schedule}, out_dir=out)
    runio.save_run(run, out, args.data, manifest)
    manifest.checks["all_converged"] = all(st.converged for st in run.steps)
    manifest.checks["monotonicity"] = run.monotonicity["holds"]
    manifest.write()
    print(f"{len(run.steps)} steps converged={manifest.checks['all_converged']}; "
          f"sup|u| {run.monotonicity['sup_u'][0]:.6g} -> {run.monotonicity['sup_u'][-1]:.6g} "
          f"monotone={run.monotonicity['holds']}")
    return 0


def cmd_blowdown(args):
    from .blowdown import classify, companion_residual, extract, levelset_residual_field
    run = runio.load_run(args.run)
    data = run.data
    limit = extract(run)
    cmap = classify(run, limit)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "blowdown", "run": args.run}, out_dir=out)
    if data.chart.periodic:
        ls_res = np.full(limit.r.size, np.nan)
    else:
        ls_res, _ = levelset_residual_field(data, limit)
    comp, interior = companion_residual(data, limit, cmap.eta, cmap)
    manifest.add(runio.write_csv(
        os.path.join(out, "blowdown.csv"),
        ["r", "u", "label", "eta", "levelset_residual", "companion_residual"],
        [limit.r, limit.u,
         np.array([{"no_blowup": 0, "graphical": 1, "cylindrical": 2,
                    "unresolved": -1}[l] for l in cmap.labels]),
         cmap.eta, ls_res, comp]))
    manifest.add(runio.write_json(os.path.join(out, "blowdown.json"), {
        "s_used": limit.s_used, "max_abs_u": float(np.max(np.abs(limit.u))),
        "support_nodes": int(np.sum(limit.support)),
        "fallback_nodes": limit.fallback_nodes,
        "lipschitz": limit.lipschitz,
        "threshold_sensitivity": {str(k): v for k, v in limit.threshold_sensitivity.items()},
        "unresolved_fraction": cmap.unresolved_fraction,
        "levelset_monitor": cmap.levelset_monitor}))
    manifest.write()
    print(f"blowdown: support {int(np.sum(limit.support))} nodes, "
          f"max|u|={np.max(np.abs(limit.u)):.6g}, unresolved {cmap.unresolved_fraction:.2%}")
    return 0


def cmd_classify(args):
    from .blowdown import classify, extract
    run = runio.load_run(args.run)
    limit = extract(run)
    cmap = classify(run, limit)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "classify", "run": args.run}, out_dir=out)
    manifest.add(runio.write_csv(
        os.path.join(out, "classification.csv"),
        ["r", "label", "domain_id", "eta", "growth_exponent"],
        [limit.r,
         np.array([{"no_blowup": 0, "graphical": 1, "cylindrical": 2,
                    "unresolved": -1}[l] for l in cmap.labels]),
         cmap.domain_id, cmap.eta, cmap.growth_exponent]))
    manifest.add(runio.write_json(os.path.join(out, "classify.json"), {
        "unresolved_fraction": cmap.unresolved_fraction,
        "levelset_monitor": cmap.levelset_monitor}))
    manifest.write()
    counts = {l: int(np.sum(cmap.labels == l)) for l in set(cmap.labels)}
    print(f"classification: {counts}, unresolved {cmap.unresolved_fraction:.2%}")
    return 0


def cmd_foliate(args):
    from .foliation import trace, velocity_consistency
    from .surfaces import Surface
    data = load_config(args.data, args.grid)
    grid = _grid_args(args)
    direction = 1 if args.direction == "+" else -1
    branch = trace(data, Surface.round_sphere(args.seed_radius, grid),
                   direction=direction, cap_T=args.cap)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "foliate", "data": args.data,
                                      "seed_radius": args.seed_radius,
                                      "direction": args.direction, "cap": args.cap},
                              out_dir=out)
    manifest.add(runio.write_csv(
        os.path.join(out, "branch.csv"),
        ["tau", "r_mean", "lambda1", "psi_min", "psi_max", "sup_h2"],
        [branch.taus, branch.sheet_radii(), branch.lambda1s,
         np.array([s.psi_min for s in branch.sheets]),
         np.array([s.psi_max for s in branch.sheets]),
         np.array([s.sup_h2 for s in branch.sheets])]))
    for i, sheet in enumerate(branch.sheets):
        coeffs = grid.analyze(sheet.surface.rho_field())
        manifest.add(runio.write_csv(
            os.path.join(out, f"sheet_{i:03d}.csv"), ["l", "coeff_real"],
            [np.arange(coeffs[0].size), coeffs[0].real]))
    vc = velocity_consistency(branch)
    manifest.add(runio.write_json(os.path.join(out, "foliate.json"), {
        "termination": branch.termination, "n_sheets": len(branch.sheets),
        "velocity_consistency": vc}))
    manifest.write()
    print(f"branch: {len(branch.sheets)} sheets, tau {branch.taus[0]:.6g} -> "
          f"{branch.taus[-1]:.6g}, termination {branch.termination}")
    return 0


def cmd_structure(args):
    from .blowdown import classify, extract
    from .structure import balance_check, partition, region_measures
    run = runio.load_run(args.run)
    data = run.data
    limit = extract(run)
    cmap = classify(run, limit)
    report = partition(limit, cmap, data)
    bal = balance_check(limit, cmap.eta, data)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "structure", "run": args.run}, out_dir=out)
    seg_rows = {
        "kind": np.array([{"maximal_domain": 1, "foliation_band": 2,
                           "unresolved": -1}[s.kind] for s in report.segments]),
        "first": np.array([s.first for s in report.segments]),
        "last": np.array([s.last for s in report.segments]),
        "r_lo": np.array([s.r_lo for s in report.segments]),
        "r_hi": np.array([s.r_hi for s in report.segments]),
        "Theta": np.array([s.Theta if s.Theta is not None else np.nan
                           for s in report.segments]),
        "u_osc": np.array([s.u_oscillation for s in report.segments]),
        "thickness": np.array([s.thickness if s.thickness is not None else np.nan
                               for s in report.segments]),
    }
    if report.segments:
        manifest.add(runio.write_csv(os.path.join(out, "segments.csv"),
                                     list(seg_rows), list(seg_rows.values())))
    manifest.add(runio.write_json(os.path.join(out, "structure.json"), {
        "support_nodes": report.support_nodes,
        "tiles_support": report.tiles_support,
        "unresolved_fraction": report.unresolved_fraction,
        "confidence": report.confidence,
        "finiteness_assumption": report.finiteness_assumption,
        "interfaces": [{"r": i.r, "u": i.u_value, "theta": i.theta_value,
                        "mismatch": i.mismatch, "C": i.grid_error_constant}
                       for i in report.interfaces],
        "balance": bal,
        "measures": region_measures(limit, data)}))
    manifest.checks["tiles"] = report.tiles_support
    manifest.write()
    print(f"structure: {len(report.segments)} segments "
          f"({len(report.maximal_domains())} maximal domains), "
          f"tiles={report.tiles_support}, confidence={report.confidence}")
    return 0


def cmd_gluing_check(args):
    from .gluing import assemble_cylinder, cap_profile, eigen_bound_check
    with open(args.spec) as f:
        spec = json.load(f)
    kind = spec.get("kind", "product")
    interval = tuple(spec.get("interval", (0.0, 3.0)))
    n_s = int(spec.get("n_s", 48))
    grid = SphereGrid(int(spec.get("n_lat", 8)), 1)
    if kind == "product":
        w_fn = lambda th, ph, s: 0.0 * th * ph + 0.0 * np.asarray(s)
        cyl = assemble_cylinder(w_fn, interval, grid, n_s=n_s)
    elif kind == "cap":
        w_fn, ws_fn, wss_fn = cap_profile(float(spec.get("w_uniformization", 0.0)))
        cyl = assemble_cylinder(w_fn, interval, grid, n_s=n_s,
                                w_s_fn=ws_fn, w_ss_fn=wss_fn)
    else:
        raise UnknownDataError(f"unknown gluing spec kind {kind!r}")
    rec = eigen_bound_check(cyl)
    out = _out_dir(args)
    manifest = runio.Manifest(config={"cmd": "gluing-check", "spec": spec}, out_dir=out)
    doc = {"lambda_star": cyl.lambda_star, "end_flux": list(cyl.end_flux)}
    doc.update({k: v for k, v in rec.items()})
    manifest.add(runio.write_json(os.path.join(out, "gluing.json"), doc))
    manifest.checks["bound_met"] = rec.get("bound_met", False)
    manifest.write()
    if rec.get("applicable"):
        print(f"lambda*={cyl.lambda_star:.8g} lambda1={rec['lambda1']:.8g} "
              f"bound_met={rec['bound_met']}")
    else:
        print(f"gluing check not applicable: {rec.get('note')}")
    return 0 if rec.get("bound_met", False) or not rec.get("applicable") else 1


def cmd_verify_all(args):
    from .verify import run_checks
    results = run_checks(data_filter=args.data, printer=print)
    if args.out:
        out = _out_dir(args)
        manifest = runio.Manifest(config={"cmd": "verify-all", "data": args.data},
                                  out_dir=out)
        manifest.add(runio.write_json(os.path.join(out, "verify.json"), [
            {"name": r.name, "passed": r.passed, "detail": r.detail}
            for r in results]))
        for r in results:
            manifest.checks[r.name] = r.passed
            manifest.timings[r.name] = round(r.seconds, 3)
        manifest.write()
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="horizonlab",
                                description="Numerical laboratory for regularized "
                                            "Jang blowup and CES geometry")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, grid=True, lmax=False, out=True):
        if data:
            sp.add_argument("--data", required=True,
                            help="catalog shorthand (e.g. pg:M=1) or JSON config path")
        if grid:
            sp.add_argument("--grid", type=int, default=None,
                            help="override radial/periodic node count")
        if lmax:
            sp.add_argument("--lmax", type=int, default=15,
                            help="spherical-harmonic band limit")
        if out:
            sp.add_argument("--out", default=None, help="output directory")

    data_p = sub.add_parser("data", help="initial-data operations")
    data_sub = data_p.add_subparsers(dest="subcommand", required=True)
    v = data_sub.add_parser("validate", help="asymptotic decay validation")
    common(v)
    v.set_defaults(func=cmd_data_validate)

    surf_p = sub.add_parser("surface", help="surface geometry")
    surf_sub = surf_p.add_subparsers(dest="subcommand", required=True)
    th = surf_sub.add_parser("theta", help="expansion of a round sphere")
    common(th, lmax=True)
    th.add_argument("--radius", type=float, required=True)
    th.set_defaults(func=cmd_surface_theta)

    stab_p = sub.add_parser("stability", help="stability operator")
    stab_sub = stab_p.add_subparsers(dest="subcommand", required=True)
    eig = stab_sub.add_parser("eig", help="principal eigenpair on a round CES")
    common(eig, lmax=True)
    eig.add_argument("--radius", type=float, required=True)
    eig.set_defaults(func=cmd_stability_eig)

    jang_p = sub.add_parser("jang", help="regularized Jang solves")
    jang_sub = jang_p.add_subparsers(dest="subcommand", required=True)
    js = jang_sub.add_parser("solve", help="single solve at fixed s")
    common(js)
    js.add_argument("--s", type=float, required=True)
    js.set_defaults(func=cmd_jang_solve)
    jc = jang_sub.add_parser("continue", help="continuation down a schedule")
    common(jc)
    jc.add_argument("--schedule", required=True,
                    help="geo:s0:ratio:smin or explicit comma list")
    jc.set_defaults(func=cmd_jang_continue)

    for name, fn, needs_run in (("blowdown", cmd_blowdown, True),
                                ("classify", cmd_classify, True),
                                ("structure", cmd_structure, True)):
        sp = sub.add_parser(name)
        sp.add_argument("--run", required=True, help="jang continue run directory")
        sp.add_argument("--out", default=None)
        sp.set_defaults(func=fn)

    fol = sub.add_parser("foliate", help="trace a CES foliation branch")
    common(fol, lmax=True)
    fol.add_argument("--seed-radius", type=float, required=True)
    fol.add_argument("--direction", choices=["+", "-"], default="+")
    fol.add_argument("--cap", type=float, default=3.0,
                     help="|tau| cap for the branch")
    fol.set_defaults(func=cmd_foliate)

    gl = sub.add_parser("gluing-check", help="warped-product gluing bound")
    gl.add_argument("--spec", required=True, help="JSON cylinder spec")
    gl.add_argument("--out", default=None)
    gl.set_defaults(func=cmd_gluing_check)

    va = sub.add_parser("verify-all", help="run the acceptance suite")
    va.add_argument("--data", default=None,
                    help="restrict to criteria touching this catalog entry")
    va.add_argument("--out", default=None)
    va.set_defaults(func=cmd_verify_all)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScheduleParseError, UnknownDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NotApplicableError as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
