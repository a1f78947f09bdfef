import numpy as np
import pytest
from numpy.testing import assert_allclose

from horizonlab.catalog import catalog_load
from horizonlab.geometry import radial_chart
from horizonlab.jang import (JangProblem, ScheduleParseError, _Discretization,
                             continuation, gap_check, parse_schedule,
                             radial_residual_analytic, residual, solve,
                             tensor_residual_analytic)

A0 = 0.2
S_MMS = 0.3


def mms_pieces():
    fstar = lambda r: np.exp(-(r - A0) ** 2)
    dfstar = lambda r: -2 * (r - A0) * np.exp(-(r - A0) ** 2)
    d2fstar = lambda r: (4 * (r - A0) ** 2 - 2) * np.exp(-(r - A0) ** 2)

    def source(r):
        fp, fpp = dfstar(r), d2fstar(r)
        W = np.sqrt(1 + fp ** 2)
        return fpp / W ** 3 + 2 * fp / (r * W) - S_MMS * fstar(r)

    return fstar, dfstar, d2fstar, source


def test_trivial_flat_solution(flat_data):
    result = solve(JangProblem(data=flat_data, s=0.5))
    assert result.converged
    assert result.newton_iters <= 1
    assert np.max(np.abs(result.f)) == 0.0


def test_periodic_constant_solution(periodic_data):
    prob = JangProblem(data=periodic_data, s=0.5)
    exact = np.full(64, -0.6)
    assert np.max(np.abs(residual(prob, exact))) < 1e-12
    result = solve(prob)
    assert result.converged
    assert_allclose(result.f, -0.6, atol=1e-12)
    assert_allclose(result.u, -0.3, atol=1e-12)


def test_periodic_continuation_constant(periodic_run):
    for st in periodic_run.steps:
        assert_allclose(st.u, -0.3, atol=1e-10)


def test_mms_analytic_residual_vanishes(flat_data):
    fstar, dfstar, d2fstar, source = mms_pieces()
    r = np.linspace(0.3, 7.0, 40)
    res = radial_residual_analytic(flat_data, S_MMS, fstar, dfstar, d2fstar, r,
                                   F=source)
    assert np.max(np.abs(res)) < 1e-10


def test_mms_second_order_convergence():
    fstar, _, _, source = mms_pieces()
    errs = []
    for n in (101, 201, 401):
        chart = radial_chart(A0, 8.0, n)
        data = catalog_load("flat_vacuum", chart=chart)
        prob = JangProblem(data=data, s=S_MMS, source=source,
                           outer_bc="dirichlet_zero", inner_bc="regular_center")
        sol = solve(prob)
        assert sol.converged
        errs.append(np.max(np.abs(sol.f - fstar(chart.nodes()))))
    for ratio in (errs[0] / errs[1], errs[1] / errs[2]):
        assert 3.2 <= ratio <= 4.8


@pytest.mark.parametrize("kwargs", [
    {},
    {"outer_bc": "dirichlet_zero", "inner_bc": "one_sided_extrapolation"},
])
def test_analytic_jacobian_matches_fd(pg_data, kwargs):
    chart = radial_chart(0.3, 8.0, 24)
    data = catalog_load("painleve_gullstrand", {"M": 1.0}, chart)
    disc = _Discretization(JangProblem(data=data, s=0.3, **kwargs))
    rng = np.random.default_rng(3)
    f = 0.5 * rng.standard_normal(disc.n)
    bands = disc.jacobian(f)
    n, bw = disc.n, disc.BANDWIDTH
    dense = np.zeros((n, n))
    for j in range(n):
        for i in range(max(0, j - bw), min(n, j + bw + 1)):
            dense[i, j] = bands[bw + i - j, j]
    eps = 1e-7
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        col = (disc.residual(f + e) - disc.residual(f - e)) / (2 * eps)
        assert np.max(np.abs(dense[:, j] - col)) < 1e-6


def test_two_residual_paths_agree():
    rng = np.random.default_rng(1)
    for name in ("flat_vacuum", "painleve_gullstrand", "isotropic_schwarzschild"):
        data = catalog_load(name, {"M": 1.0} if name != "flat_vacuum" else None)
        r = np.linspace(0.5, 8.0, 40)
        x = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
        for _ in range(10):
            c1, c2, c3 = rng.uniform(-0.5, 0.5, 3)
            f = lambda r: c1 * np.exp(-(r - 2) ** 2) + c2 / (r + 1) + c3 * np.sin(r) / 5
            df = lambda r: (-2 * c1 * (r - 2) * np.exp(-(r - 2) ** 2)
                            - c2 / (r + 1) ** 2 + c3 * np.cos(r) / 5)
            d2f = lambda r: (c1 * (4 * (r - 2) ** 2 - 2) * np.exp(-(r - 2) ** 2)
                             + 2 * c2 / (r + 1) ** 3 - c3 * np.sin(r) / 5)
            ra = radial_residual_analytic(data, 0.4, f, df, d2f, r)
            ta = tensor_residual_analytic(data, 0.4, f, df, d2f, x)
            assert np.max(np.abs(ra - ta)) < 1e-8


def test_residual_rejects_nan(flat_data):
    prob = JangProblem(data=flat_data, s=0.5)
    bad = np.zeros(flat_data.chart.n_points)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        residual(prob, bad)


def test_problem_validation(flat_data, periodic_data):
    with pytest.raises(ValueError):
        JangProblem(data=flat_data, s=0.0)
    with pytest.raises(ValueError):
        JangProblem(data=flat_data, s=0.5, outer_bc="absorbing")


def test_schedule_parsing():
    vals = parse_schedule("geo:1:0.6:1e-3")
    assert vals[0] == 1.0 and vals[-1] <= 1.5e-3
    assert np.all(np.diff(vals) < 0)
    assert_allclose(parse_schedule("0.5,0.25,0.125"), [0.5, 0.25, 0.125])
    for bad in ("geo:bad", "geo:1:1.5:0.1", "0.1,0.5", "geo:1:0.6"):
        with pytest.raises(ScheduleParseError):
            parse_schedule(bad)


def test_gap_trivial_and_equality(flat_data, periodic_run):
    run_flat = continuation(flat_data, "0.5,0.25")
    rep = gap_check(run_flat, 0, 1)
    assert not rep["applicable_case1"] and not rep["applicable_case2"]
    rep_p = periodic_run.gap_reports[0]
    assert rep_p["applicable_case2"] and rep_p["case2_holds"]
    assert abs(rep_p["case2_gap"] - rep_p["case2_bound"]) < 1e-12
    assert not rep_p["hypothesis_decay"]  # periodic fixture violates decay


def test_pg_gap_and_monotonicity(pg_run):
    for rep in pg_run.gap_reports:
        assert rep["applicable_case2"]
        assert rep["case2_holds"]
    mono = pg_run.monotonicity
    assert mono["holds"]
    assert not mono["trivial_blowdown"]
    assert np.all(np.diff(mono["sup_u"]) <= 1e-8)


def test_pg_universal_bound_and_monitors(pg_data, pg_run):
    mu1 = pg_data.mu1()
    for st in pg_run.steps:
        assert st.converged
        assert st.monitors["max_sf"] <= mu1 + 1e-6
        assert not st.monitors["bound_violated"]
    # gradient bound stabilizes along the schedule tail
    tail = [st.monitors["max_s_gradf"] for st in pg_run.steps[-6:]]
    for a, b in zip(tail[:-1], tail[1:]):
        assert b <= 1.05 * a


def test_harnack_monitor_grid_stable():
    vals = []
    for n in (300, 600):
        chart = radial_chart(0.2, 12.0, n, spacing="logarithmic")
        data = catalog_load("painleve_gullstrand", {"M": 1.0}, chart)
        run = continuation(data, "geo:1:0.6:0.1")
        vals.append(run.final.monitors["harnack_sup"])
    assert vals[1] <= 1.1 * vals[0]


def test_gradient_bound_under_refinement():
    sups = []
    for n in (300, 600):
        chart = radial_chart(0.2, 12.0, n, spacing="logarithmic")
        data = catalog_load("painleve_gullstrand", {"M": 1.0}, chart)
        run = continuation(data, "geo:1:0.6:0.05")
        sups.append(max(st.monitors["max_s_gradf"] for st in run.steps))
    assert sups[1] <= 1.05 * sups[0]


def test_inner_bc_uncertainty_band():
    from horizonlab.jang import inner_bc_band
    chart = radial_chart(0.2, 12.0, 300, spacing="logarithmic")
    data = catalog_load("painleve_gullstrand", {"M": 1.0}, chart)
    band = inner_bc_band(data, "geo:1:0.6:0.05")
    assert len(band["f_band"]) == len(band["s"])
    assert all(np.isfinite(v) for v in band["f_band"])
    # the closures genuinely differ at the excision, and the band is reported
    assert max(band["u_band"]) > 0


def test_time_symmetric_data_solve_exactly_zero():
    # k = 0 on a curved metric: f = 0 is the exact solution and the
    # divergence-form discretization must produce no spurious source
    for name, params in (("isotropic_schwarzschild", {"M": 1.0}),
                         ("conformal_perturbed", {"M": 1.0, "eps": 0.05})):
        data = catalog_load(name, params)
        sol = solve(JangProblem(data=data, s=0.5))
        assert sol.converged
        assert np.max(np.abs(sol.f)) == 0.0
