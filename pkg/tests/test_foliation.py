import numpy as np
import pytest
from numpy.testing import assert_allclose

from horizonlab.blowdown import extract
from horizonlab.foliation import (FoliationBranch, SeedNotCESError, compare,
                                  local_solution, trace, velocity_consistency)
from horizonlab.geometry import NotApplicableError
from horizonlab.surfaces import Surface


@pytest.fixture(scope="module")
def flat_branch(flat_data, grid12):
    return trace(flat_data, Surface.round_sphere(1.0, grid12), direction=-1,
                 cap_T=3.0)


@pytest.fixture(scope="module")
def pg_branch(pg_data, grid12):
    return trace(pg_data, Surface.round_sphere(2.0, grid12), direction=1,
                 mode="stable", cap_T=3.0)


def test_flat_branch_radius_oracle(flat_branch):
    taus, radii = flat_branch.taus, flat_branch.sheet_radii()
    keep = taus >= 1.0 - 1e-9
    assert np.max(np.abs(radii[keep] - 2.0 / taus[keep])) < 1e-4
    # unstable branch traced in invertible mode: lambda1 = -2/r^2
    assert_allclose(flat_branch.lambda1s, -2.0 / radii ** 2, atol=1e-6)


def test_sheet_expansion_constancy(flat_branch, pg_branch):
    for branch in (flat_branch, pg_branch):
        for sheet in branch.sheets:
            assert sheet.theta_osc <= 1e-6 * (1.0 + abs(sheet.tau))


def test_constant_k_branch_oracle(fck_data, grid12):
    branch = trace(fck_data, Surface.round_sphere(10.0, grid12), direction=1,
                   cap_T=0.4, max_steps=120)
    taus, radii = branch.taus, branch.sheet_radii()
    assert np.max(np.abs(taus - (2.0 / radii - 0.2))) < 1e-6
    assert abs(taus[0]) < 1e-9  # the seed is the MOTS


def test_velocity_consistency(flat_branch):
    vc = velocity_consistency(flat_branch)
    assert vc["applicable"]
    assert vc["max_L1_vs_dtheta"] < 1e-5


def test_velocity_refinement(flat_data, grid12):
    devs = []
    for dt in (0.02, 0.01):
        br = trace(flat_data, Surface.round_sphere(1.0, grid12), direction=-1,
                   fixed_dtau=dt, max_steps=int(1.0 / dt) + 1)
        devs.append(velocity_consistency(br)["max_velocity_deviation"])
    assert devs[0] / devs[1] >= 1.8


def test_fixed_step_psi_value(flat_data, grid12):
    # at tau = 1 the sheet sits at r = 2 with |psi| = r^2/2 = 2
    br = trace(flat_data, Surface.round_sphere(1.0, grid12), direction=-1,
               fixed_dtau=0.01, max_steps=101)
    i = int(np.argmin(np.abs(br.taus - 1.0)))
    assert abs(br.taus[i] - 1.0) < 1e-6   # corrector drift accumulates
    assert abs(abs(np.mean(br.sheets[i].psi)) - 2.0) < 1e-3


def test_pg_branch_terminates_marginally(pg_branch, pg_data):
    assert pg_branch.termination == "marginal_endpoint"
    # the marginal sphere of this slice: d theta / dr = 0 at r = (3 sqrt2 / 2)^2
    r_marginal = (3.0 * np.sqrt(2.0) / 2.0) ** 2
    assert abs(pg_branch.sheet_radii()[-1] - r_marginal) < 0.1
    prof = pg_data.radial
    for j in (1, len(pg_branch.sheets) // 2, -2):
        sheet = pg_branch.sheets[j]
        oracle = prof.d_expansion_dr(sheet.r_mean) / prof.a(sheet.r_mean)
        assert abs(sheet.lambda1 - oracle) < 1e-8


def test_pg_branch_stable_mode_velocity_positive(pg_branch):
    for sheet in pg_branch.sheets:
        assert sheet.psi_min > 0.0


def test_pg_branch_curvature_monitor(pg_branch):
    sup = np.array([s.sup_h2 for s in pg_branch.sheets])
    assert np.max(sup) <= 10.0 * sup[0]


def test_seed_validation(pg_data, fck_data, grid12):
    from horizonlab.spheregrid import SphereGrid
    grid = SphereGrid(12, 1)
    rho = 2.5 + 0.1 * grid.ylm(2, 0)
    with pytest.raises(SeedNotCESError):
        trace(pg_data, Surface.radial_graph(rho, grid))
    # the marginal sphere cannot seed a branch
    r_marginal = (3.0 * np.sqrt(2.0) / 2.0) ** 2
    with pytest.raises(SeedNotCESError):
        trace(pg_data, Surface.round_sphere(r_marginal, grid12))
    # stable mode rejects unstable seeds
    with pytest.raises(SeedNotCESError):
        trace(fck_data, Surface.round_sphere(10.0, grid12), mode="stable")


def test_local_solution_requires_stability(flat_branch, pg_branch):
    with pytest.raises(NotApplicableError):
        local_solution(flat_branch)
    stable = [s for s in pg_branch.sheets if s.lambda1 > pg_branch.tol_marginal]
    sol = local_solution(FoliationBranch(
        data=pg_branch.data, direction=pg_branch.direction, mode=pg_branch.mode,
        sheets=stable, termination=pg_branch.termination,
        tol_marginal=pg_branch.tol_marginal))
    assert np.all(np.isfinite(sol.harnack_C))
    assert np.max(sol.harnack_C) < 10.0
    assert sol.correlation > 0.9
    # |grad v| shrinks with lambda1 toward the marginal endpoint
    assert sol.grad_v_min[-1] < 0.1 * sol.grad_v_min[0]


def test_compare_pg_annulus(pg_data, pg_run, pg_branch):
    limit = extract(pg_run)
    stable = [s for s in pg_branch.sheets if s.lambda1 > pg_branch.tol_marginal]
    sol = local_solution(FoliationBranch(
        data=pg_branch.data, direction=pg_branch.direction, mode=pg_branch.mode,
        sheets=stable, termination=pg_branch.termination,
        tol_marginal=pg_branch.tol_marginal))
    rep = compare(limit, sol, pg_data)
    assert rep["applicable"] and rep["holds"]
    assert rep["nodes_checked"] > 50
    assert rep["max_excess"] <= 0.0


def test_compare_requires_mots_seed(fck_data, grid12, pg_run):
    limit = extract(pg_run)
    branch = trace(fck_data, Surface.round_sphere(8.0, grid12), direction=-1,
                   cap_T=0.1, max_steps=20)
    with pytest.raises(NotApplicableError):
        # seed expansion is far from zero, and the branch is unstable anyway
        sol = local_solution(branch)
        compare(limit, sol, fck_data)


def test_step_remainder_quadratic(pg_data, grid12):
    # theta(w + delta) - theta(w) - L delta = O(|delta|^2) with stable constant
    from horizonlab.stability import assemble
    from horizonlab.surfaces import fermi_expansion
    base = Surface.round_sphere(3.0, grid12)
    op = assemble(pg_data, base)
    delta = grid12.ylm(2, 0)
    A = []
    for t in (1e-2, 1e-3):
        rem = (fermi_expansion(pg_data, base, t * delta) - op.geometry.theta
               - t * op.apply(delta))
        A.append(np.max(np.abs(rem)) / t ** 2)
    assert 0.5 <= A[0] / A[1] <= 2.0
