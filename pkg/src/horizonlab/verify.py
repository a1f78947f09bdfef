"""Acceptance suite: every top-level criterion as a callable check with its
stated tolerance pinned.  The pytest acceptance module and the `verify-all`
CLI subcommand both run these.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .blowdown import classify, companion_residual, extract
from .catalog import catalog_load
from .foliation import compare, local_solution, trace, velocity_consistency
from .geometry import radial_chart
from .gluing import assemble_cylinder, eigen_bound_check
from .jang import JangProblem, continuation, solve
from .spheregrid import SphereGrid
from .stability import (assemble, barrier_profile, conjugated_operator,
                        gradient_drift, operator_from_parts, principal_eig)
from .structure import partition
from .surfaces import Surface, expansion, fermi_expansion, surface_geometry


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


class _Shared:
    """Lazily built expensive fixtures shared across checks."""

    def __init__(self):
        self._cache = {}

    def pg_run(self):
        if "pg_run" not in self._cache:
            data = catalog_load("painleve_gullstrand", {"M": 1.0})
            self._cache["pg_run"] = (data, continuation(data, "geo:1:0.6:1e-3"))
        return self._cache["pg_run"]

    def pg_refinement(self):
        if "pg_ref" not in self._cache:
            levels = []
            for n, smin in ((200, 4e-3), (400, 2e-3), (800, 1e-3)):
                chart = radial_chart(0.2, 12.0, n, spacing="logarithmic")
                data = catalog_load("painleve_gullstrand", {"M": 1.0}, chart)
                levels.append((data, continuation(data, f"geo:1:0.6:{smin}")))
            self._cache["pg_ref"] = levels
        return self._cache["pg_ref"]

    def periodic_run(self):
        if "periodic" not in self._cache:
            data = catalog_load("periodic_constant_k", {"c": 0.1})
            self._cache["periodic"] = (data, continuation(data, "geo:0.5:0.5:0.004"))
        return self._cache["periodic"]


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def check_barrier_constants(shared) -> tuple:
    root = brentq(lambda t: barrier_profile(t)[1], 0.2, 1.5, xtol=1e-12)
    peak = barrier_profile(0.5)[1]
    ok = abs(root - 0.6456) <= 1e-3 and abs(peak - (-0.0866)) <= 1e-3
    return ok, f"root={root:.6f} (target 0.6456), peak={peak:.6f} (target -0.0866)"


def check_mms_convergence(shared) -> tuple:
    a0, s = 0.2, 0.3
    fstar = lambda r: np.exp(-(r - a0) ** 2)
    dfstar = lambda r: -2 * (r - a0) * np.exp(-(r - a0) ** 2)
    d2fstar = lambda r: (4 * (r - a0) ** 2 - 2) * np.exp(-(r - a0) ** 2)

    def source(r):
        fp, fpp = dfstar(r), d2fstar(r)
        W = np.sqrt(1 + fp ** 2)
        return fpp / W ** 3 + 2 * fp / (r * W) - s * fstar(r)

    errs = []
    for n in (101, 201, 401):
        chart = radial_chart(a0, 8.0, n)
        data = catalog_load("flat_vacuum", chart=chart)
        prob = JangProblem(data=data, s=s, source=source,
                           outer_bc="dirichlet_zero", inner_bc="regular_center")
        sol = solve(prob)
        errs.append(np.max(np.abs(sol.f - fstar(chart.nodes()))))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(3.2 <= rho <= 4.8 for rho in ratios)
    return ok, f"error ratios per halving: {ratios[0]:.3f}, {ratios[1]:.3f} (need [3.2, 4.8])"


def check_exact_fixtures(shared) -> tuple:
    flat = catalog_load("flat_vacuum")
    run_f = continuation(flat, "geo:0.5:0.5:0.004")
    worst_flat = max(float(np.max(np.abs(st.f))) for st in run_f.steps)
    u_flat = float(np.max(np.abs(extract(run_f).u)))

    per, run_p = shared.periodic_run()
    c = per.params["c"]
    worst_per = max(float(np.max(np.abs(st.f + 3 * c / st.s))) for st in run_p.steps)
    u_per = float(np.max(np.abs(extract(run_p).u + 3 * c)))
    ok = worst_flat <= 1e-10 and u_flat <= 1e-10 and worst_per <= 1e-10 and u_per <= 1e-10
    return ok, (f"flat: max|f|={worst_flat:.2e}, max|u|={u_flat:.2e}; "
                f"periodic: max|f+3c/s|={worst_per:.2e}, max|u+3c|={u_per:.2e} (tol 1e-10)")


def check_universal_bound_monotonicity(shared) -> tuple:
    data, run = shared.pg_run()
    mu1 = data.mu1()
    worst = max(st.monitors["max_sf"] - mu1 for st in run.steps)
    mono = run.monotonicity
    ok = worst <= 1e-6 and mono["max_increase"] <= 1e-8
    return ok, (f"max(|sf| - mu1) = {worst:.3e} (tol 1e-6); "
                f"sup|u| max increase = {mono['max_increase']:.3e} (tol 1e-8)")


def check_gap_estimate(shared) -> tuple:
    _, run = shared.pg_run()
    applicable = [g for g in run.gap_reports
                  if g.get("applicable_case1") or g.get("applicable_case2")]
    holds = all(g.get("case1_holds", True) and g.get("case2_holds", True)
                for g in applicable)
    per, run_p = shared.periodic_run()
    g0 = run_p.gap_reports[0]
    eq_slack = abs(g0["case2_gap"] - g0["case2_bound"])
    ok = holds and len(applicable) == len(run.gap_reports) and eq_slack <= 1e-12
    return ok, (f"PG: {len(applicable)}/{len(run.gap_reports)} pairs applicable, all hold={holds}; "
                f"periodic equality slack = {eq_slack:.2e} (tol 1e-12)")


def check_mots_location(shared) -> tuple:
    data = catalog_load("painleve_gullstrand", {"M": 1.0})
    grid = SphereGrid(12, 1)

    def theta_mean(r):
        return float(np.mean(expansion(data, Surface.round_sphere(r, grid))))

    root = brentq(theta_mean, 1.5, 3.0, xtol=1e-10)
    ok = abs(root - 2.0) <= 1e-6
    return ok, f"theta root at r = {root:.9f} (target 2, tol 1e-6)"


def check_eigen_oracle(shared) -> tuple:
    grid = SphereGrid(16, 1)
    flat = catalog_load("flat_vacuum")
    geom = surface_geometry(flat, Surface.round_sphere(1.0, grid))
    worst_const = 0.0
    for c in (-2.0, 0.7):
        op = operator_from_parts(geom, 2.0, np.full(grid.shape, c), np.zeros(grid.shape + (2,)))
        res = principal_eig(op)
        worst_const = max(worst_const, abs(res.lambda1 - c))

    rng = np.random.default_rng(7)
    worst_conj = 0.0
    for _ in range(5):
        eta = sum(rng.uniform(-0.3, 0.3) * grid.ylm(l, 0) for l in range(1, 5))
        V = 1.0 + sum(rng.uniform(-0.5, 0.5) * grid.ylm(l, 0) for l in range(0, 4))
        op = operator_from_parts(geom, 2.0, V, gradient_drift(geom, eta))
        lam = principal_eig(op).lambda1
        import scipy.linalg
        oracle = float(np.min(scipy.linalg.eigvals(conjugated_operator(op, eta)).real))
        worst_conj = max(worst_conj, abs(lam - oracle))
    ok = worst_const <= 1e-8 and worst_conj <= 1e-8
    return ok, (f"constant-potential error {worst_const:.2e}, "
                f"conjugation mismatch {worst_conj:.2e} (tol 1e-8)")


def check_foliation_oracle(shared) -> tuple:
    grid = SphereGrid(12, 1)
    flat = catalog_load("flat_vacuum")
    br = trace(flat, Surface.round_sphere(1.0, grid), direction=-1, cap_T=3.0)
    taus, radii = br.taus, br.sheet_radii()
    keep = taus >= 1.0 - 1e-9
    r_err = float(np.max(np.abs(radii[keep] - 2.0 / taus[keep])))

    brf = trace(flat, Surface.round_sphere(1.0, grid), direction=-1,
                fixed_dtau=0.01, max_steps=101)
    i = int(np.argmin(np.abs(brf.taus - 1.0)))
    psi_err = abs(abs(np.mean(brf.sheets[i].psi)) - brf.sheet_radii()[i] ** 2 / 2.0)

    vc = velocity_consistency(br)
    ok = r_err <= 1e-4 and psi_err <= 1e-3 and vc["max_L1_vs_dtheta"] <= 1e-5
    return ok, (f"max|r - 2/tau| = {r_err:.2e} (tol 1e-4); |psi - r^2/2| at r=2: "
                f"{psi_err:.2e} (tol 1e-3); L(1) vs dtheta/dsigma: "
                f"{vc['max_L1_vs_dtheta']:.2e} (tol 1e-5)")


def check_linearization_remainder(shared) -> tuple:
    grid = SphereGrid(16, 1)
    flat = catalog_load("flat_vacuum")
    base = Surface.round_sphere(1.0, grid)
    geom = surface_geometry(flat, base)
    op = assemble(flat, base, geometry=geom)
    w = grid.ylm(1, 0)
    theta0 = geom.theta
    Lw = op.apply(w)
    q = {}
    for t in (1e-2, 1e-3):
        rem = fermi_expansion(flat, base, t * w) - theta0 - t * Lw
        q[t] = float(np.max(np.abs(rem))) / t ** 2
    ratio = q[1e-2] / q[1e-3]
    ok = 0.5 <= ratio <= 2.0
    return ok, f"remainder/t^2 at t=1e-2: {q[1e-2]:.4f}, t=1e-3: {q[1e-3]:.4f}, ratio {ratio:.3f} (need [0.5, 2])"


def check_companion_identity(shared) -> tuple:
    norms = []
    for data, run in shared.pg_refinement():
        bl = extract(run)
        cm = classify(run, bl)
        res, interior = companion_residual(data, bl, cm.eta, cm)
        norms.append(float(np.max(np.abs(res[interior & bl.support]))))
    ratios = [norms[i] / norms[i + 1] for i in range(len(norms) - 1)]
    ok = all(rho >= 1.5 for rho in ratios)
    return ok, f"interior residual norms {['%.4f' % v for v in norms]}, ratios {['%.2f' % r for r in ratios]} (need >= 1.5)"


def check_comparison_theorem(shared) -> tuple:
    data, run = shared.pg_run()
    bl = extract(run)
    grid = SphereGrid(12, 1)
    br = trace(data, Surface.round_sphere(2.0, grid), direction=1, mode="stable")
    stable = [s for s in br.sheets if s.lambda1 > br.tol_marginal]
    sol = local_solution(
        type(br)(data=br.data, direction=br.direction, mode=br.mode,
                 sheets=stable, termination=br.termination,
                 tol_marginal=br.tol_marginal))
    rep = compare(bl, sol, data)
    ok = rep["holds"] and len(rep["violations"]) == 0
    return ok, (f"{rep['nodes_checked']} annulus nodes, budget {rep['budget']:.2e}, "
                f"max excess {rep['max_excess']:.3e}, violations {len(rep['violations'])}")


def check_gluing_lemma(shared) -> tuple:
    grid = SphereGrid(8, 1)
    zero = lambda th, ph, s: 0.0 * th * ph + 0.0 * np.asarray(s)
    cyl = assemble_cylinder(zero, (0.0, 3.0), grid, n_s=24)
    rec = eigen_bound_check(cyl)
    prod_ok = abs(cyl.lambda_star - 1.0) <= 1e-6 and abs(rec["lambda1"] - 0.25) <= 1e-6

    ball = assemble_cylinder(
        lambda th, ph, s: 0.0 * th * ph + np.log(s), (0.0, 3.0), grid, n_s=32,
        w_s_fn=lambda th, ph, s: 0.0 * th * ph + 1.0 / np.asarray(s),
        w_ss_fn=lambda th, ph, s: 0.0 * th * ph - 1.0 / np.asarray(s) ** 2,
        enforce_end_condition=False)
    ball_ok = float(np.max(np.abs(ball.R_g))) <= 1e-8

    cross = _gluing_curvature_cross_check()
    ok = prod_ok and ball_ok and cross <= 1e-6
    return ok, (f"product: lambda*={cyl.lambda_star:.8f}, lambda1={rec['lambda1']:.8f} "
                f"(targets 1, 0.25, tol 1e-6); ball R_g={np.max(np.abs(ball.R_g)):.2e} "
                f"(tol 1e-8); FD cross-check {cross:.2e} (tol 1e-6)")


def _gluing_curvature_cross_check():
    from .geometry import MetricField, scalar_curvature
    grid = SphereGrid(12, 1)
    rng = np.random.default_rng(11)
    amp, freq = rng.uniform(0.05, 0.15), rng.integers(1, 3)

    def wval(th, s):
        Y10 = np.sqrt(3 / (4 * np.pi)) * np.cos(th)
        return amp * np.sin(np.pi * freq * np.asarray(s) / 3.0) ** 2 * Y10

    cyl = assemble_cylinder(lambda th, ph, s: wval(th, s) + 0.0 * ph,
                            (0.0, 3.0), grid, n_s=48)

    def g_fn(pts):
        pts = np.asarray(pts, dtype=float)
        th, s = pts[..., 0], pts[..., 2]
        q = np.exp(2 * wval(th, s))
        g = np.zeros(pts.shape[:-1] + (3, 3))
        g[..., 0, 0] = q
        g[..., 1, 1] = q * np.sin(th) ** 2
        g[..., 2, 2] = 1.0
        return g

    mf = MetricField.from_components(g_fn, h=0.005)
    worst = 0.0
    for i_s in (10, 24, 40):
        for i_t in (3, 6, 9):
            pt = np.array([grid.theta[i_t], 0.0, cyl.s[i_s]])
            worst = max(worst, abs(float(scalar_curvature(mf, pt)) - cyl.R_g[i_s, i_t, 0]))
    return worst


def check_structure_report(shared) -> tuple:
    per, run_p = shared.periodic_run()
    bl_p = extract(run_p)
    cm_p = classify(run_p, bl_p)
    rep_p = partition(bl_p, cm_p, per)
    c = per.params["c"]
    doms = rep_p.maximal_domains()
    per_ok = (len(rep_p.segments) == 1 and len(doms) == 1
              and abs(doms[0].Theta + 3 * c) <= 1e-8)

    data, run = shared.pg_run()
    bl = extract(run)
    cm = classify(run, bl)
    rep = partition(bl, cm, data)
    idx_max = int(np.argmax(np.abs(bl.u)))
    on_dom = any(s.first <= idx_max <= s.last for s in rep.maximal_domains())
    pg_ok = on_dom and rep.tiles_support and rep.unresolved_fraction <= 0.20
    ok = per_ok and pg_ok
    return ok, (f"periodic: {len(doms)} maximal domain(s), Theta={doms[0].Theta:.10f} "
                f"(target {-3*c}); PG: max|u| on maximal domain={on_dom}, "
                f"tiles={rep.tiles_support}, unresolved={rep.unresolved_fraction:.3f} (cap 0.20)")


#: criterion registry: name -> (callable, fixture tags, runtime budget [s])
CHECKS = {
    "barrier_constants": (check_barrier_constants, set(), 1.0),
    "mms_convergence": (check_mms_convergence, {"flat_vacuum"}, 10.0),
    "exact_fixtures": (check_exact_fixtures, {"flat_vacuum", "periodic_constant_k"}, 10.0),
    "universal_bound_monotonicity": (check_universal_bound_monotonicity,
                                     {"painleve_gullstrand"}, 120.0),
    "gap_estimate": (check_gap_estimate,
                     {"painleve_gullstrand", "periodic_constant_k"}, 120.0),
    "mots_location": (check_mots_location, {"painleve_gullstrand"}, 1.0),
    "eigen_oracle": (check_eigen_oracle, {"flat_vacuum"}, 30.0),
    "foliation_oracle": (check_foliation_oracle, {"flat_vacuum"}, 60.0),
    "linearization_remainder": (check_linearization_remainder, {"flat_vacuum"}, 30.0),
    "companion_identity": (check_companion_identity, {"painleve_gullstrand"}, 300.0),
    "comparison_theorem": (check_comparison_theorem, {"painleve_gullstrand"}, 120.0),
    "gluing_lemma": (check_gluing_lemma, set(), 60.0),
    "structure_report": (check_structure_report,
                         {"painleve_gullstrand", "periodic_constant_k"}, 300.0),
}


def run_checks(names=None, data_filter: Optional[str] = None, printer=None):
    import os

    shared = _Shared()
    selected = []
    for name, (fn, tags, budget) in CHECKS.items():
        if names is not None and name not in names:
            continue
        if data_filter is not None and tags and data_filter not in tags:
            continue
        selected.append((name, fn, budget))

    def run_one(item):
        name, fn, budget = item
        t0 = time.perf_counter()
        try:
            passed, detail = fn(shared)
        except Exception as exc:  # a crashed criterion is a failed criterion
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        if passed and dt > budget:
            passed = False
            detail += f"; exceeded the {budget:.0f}s runtime budget ({dt:.1f}s)"
        return CheckResult(name=name, passed=passed, detail=detail, seconds=dt)

    workers = int(os.environ.get("HORIZONLAB_THREADS", "1"))
    if workers > 1 and len(selected) > 1:
        # build the shared fixtures up front; checks then run independently
        shared.pg_run()
        shared.pg_refinement()
        shared.periodic_run()
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, selected))
    else:
        results = [run_one(item) for item in selected]

    if printer is not None:
        for r in results:
            printer(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail} ({r.seconds:.1f}s)")
    return results
