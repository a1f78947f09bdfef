import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from horizonlab.spheregrid import SphereGrid
from horizonlab.stability import assemble
from horizonlab.surfaces import (ChartBoundsError, FocalDistanceError, Surface,
                                 expansion, fermi_expansion, revolution_expansion,
                                 surface_geometry)


def test_flat_round_sphere_closed_forms(flat_data, grid16):
    geom = surface_geometry(flat_data, Surface.round_sphere(2.0, grid16))
    assert_allclose(geom.H, 1.0, atol=1e-12)
    assert_allclose(geom.R_sigma, 0.5, atol=1e-12)
    assert_allclose(geom.theta, 1.0, atol=1e-12)
    assert abs(geom.area - 16 * np.pi) < 1e-10
    # round-sphere fields are constant over the grid
    assert np.ptp(geom.H) < 1e-10
    assert np.ptp(geom.tr_sigma_k) < 1e-10


def test_orientation_flip(flat_data, fck_data, grid16):
    out = surface_geometry(fck_data, Surface.round_sphere(2.0, grid16))
    inn = surface_geometry(fck_data, Surface.round_sphere(2.0, grid16, "inward"))
    assert_allclose(out.H, -inn.H, atol=1e-10)
    # expansion with the inward normal equals -H_out - tr_Sigma k
    assert_allclose(inn.theta, -out.H - out.tr_sigma_k, atol=1e-10)


def test_constant_k_surface_quantities(fck_data, grid16):
    geom = surface_geometry(fck_data, Surface.round_sphere(2.0, grid16))
    assert_allclose(geom.tr_sigma_k, 0.2, atol=1e-12)
    assert_allclose(geom.xi_low, 0.0, atol=1e-13)
    root = brentq(lambda r: float(np.mean(expansion(
        fck_data, Surface.round_sphere(r, grid16)))), 5.0, 15.0)
    assert abs(root - 10.0) < 1e-9


def test_pg_deviation_tensor_closed_form(pg_data, grid16):
    # |h - k|^2 on round spheres: 2 (1/r - sqrt(2M/r^3))^2
    for r in (2.0, 3.0):
        geom = surface_geometry(pg_data, Surface.round_sphere(r, grid16))
        lam = np.sqrt(2.0 / r ** 3)
        assert_allclose(geom.h_minus_k2, 2.0 * (1.0 / r - lam) ** 2, atol=1e-8)


def test_pg_mots_at_two(pg_data, grid12):
    th = expansion(pg_data, Surface.round_sphere(2.0, grid12))
    assert np.max(np.abs(th)) < 1e-10
    root = brentq(lambda r: float(np.mean(expansion(
        pg_data, Surface.round_sphere(r, grid12)))), 1.5, 3.0)
    assert abs(root - 2.0) < 1e-6


@pytest.mark.parametrize("name,radii", [
    ("painleve_gullstrand", (0.5, 2.0, 5.0)),
    ("isotropic_schwarzschild", (1.0, 3.0, 20.0)),
])
def test_two_path_expansion_agreement(name, radii, grid12):
    from horizonlab.catalog import catalog_load
    data = catalog_load(name, {"M": 1.0})
    for r in radii:
        general = expansion(data, Surface.round_sphere(r, grid12))
        radial = data.radial.expansion(r)
        assert np.max(np.abs(general - radial)) < 1e-8


def test_fermi_identity_and_offset(flat_data, grid12):
    base = Surface.round_sphere(1.0, grid12)
    th0 = fermi_expansion(flat_data, base, np.zeros(grid12.shape))
    assert_allclose(th0, expansion(flat_data, base), atol=1e-11)
    th = fermi_expansion(flat_data, base, np.full(grid12.shape, 0.5))
    assert_allclose(th, 4.0 / 3.0, atol=1e-11)


def test_fermi_curved_offset_matches_radial(iso_data, grid12):
    prof = iso_data.radial
    r1 = brentq(lambda r: prof.geodesic_width(2.0, r) - 0.1, 2.0, 2.5)
    th = fermi_expansion(iso_data, Surface.round_sphere(2.0, grid12),
                         np.full(grid12.shape, 0.1))
    assert np.max(np.abs(th - prof.expansion(r1))) < 1e-8


def test_fermi_linearization(flat_data, grid16):
    # theta(w) - theta(0) matches the operator action to O(|w|^2);
    # the bound is calibrated against the L2 norm of the harmonic perturbation
    base = Surface.round_sphere(1.0, grid16)
    op = assemble(flat_data, base)
    w = 0.01 * grid16.ylm(1, 0)
    w_l2 = np.sqrt(grid16.integrate(w ** 2))
    diff = fermi_expansion(flat_data, base, w) - op.geometry.theta
    assert np.max(np.abs(diff - op.apply(w))) <= 5e-3 * w_l2


def test_quadratic_remainder_bounded(flat_data, grid16):
    base = Surface.round_sphere(1.0, grid16)
    op = assemble(flat_data, base)
    w = grid16.ylm(2, 0)
    theta0 = op.geometry.theta
    Lw = op.apply(w)
    ratios = []
    for t in (1e-2, 1e-3):
        rem = fermi_expansion(flat_data, base, t * w) - theta0 - t * Lw
        ratios.append(np.max(np.abs(rem)) / t ** 2)
    assert 0.5 <= ratios[0] / ratios[1] <= 2.0


def test_surface_validation(flat_data, grid12):
    with pytest.raises(ValueError):
        Surface.radial_graph(-np.ones(grid12.shape), grid12)
    with pytest.raises(ChartBoundsError):
        surface_geometry(flat_data, Surface.round_sphere(50.0, grid12))
    base = Surface.round_sphere(1.0, grid12)
    with pytest.raises(FocalDistanceError):
        fermi_expansion(flat_data, base, np.full(grid12.shape, 0.9))


def test_drift_tangency(pg_data):
    grid = SphereGrid(16, 16)
    rho = 2.5 + 0.05 * grid.ylm(3, 2)
    geom = surface_geometry(pg_data, Surface.radial_graph(rho, grid))
    assert np.max(np.abs(geom.xi_tangency)) < 1e-12


def test_revolution_expansion(flat_data):
    t = np.linspace(-1.0, 1.0, 7)
    cyl = revolution_expansion(flat_data, lambda t: 2.0 + 0 * t,
                               lambda t: 0 * t, lambda t: 0 * t, t)
    assert_allclose(cyl, 1.0, atol=1e-14)
    R = 2.0
    sph = revolution_expansion(
        flat_data, lambda t: np.sqrt(R ** 2 - t ** 2),
        lambda t: -t / np.sqrt(R ** 2 - t ** 2),
        lambda t: -R ** 2 / (R ** 2 - t ** 2) ** 1.5, np.array([0.0, 0.5]))
    assert_allclose(sph, 3.0 / R, atol=1e-13)


def test_isotropic_minimal_surface_root(iso_data, grid12):
    # the time-symmetric slice has its horizon where H vanishes (r = M/2)
    th_mean = lambda r: float(np.mean(expansion(
        iso_data, Surface.round_sphere(r, grid12))))
    root = brentq(th_mean, 0.3, 1.0)
    assert abs(root - 0.5) < 1e-9


def test_round_sphere_constancy_curved(pg_data, iso_data, grid16):
    # all induced fields are constant over round spheres in symmetric data
    for data, r in ((pg_data, 3.0), (iso_data, 2.0)):
        geom = surface_geometry(data, Surface.round_sphere(r, grid16))
        for fld in (geom.H, geom.tr_sigma_k, geom.theta, geom.R_sigma,
                    geom.h_minus_k2):
            assert np.ptp(fld) < 1e-10
