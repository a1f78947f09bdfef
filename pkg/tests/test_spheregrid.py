import numpy as np
import pytest
from numpy.testing import assert_allclose

from horizonlab.spheregrid import SphereGrid


@pytest.fixture(scope="module")
def full_grid():
    return SphereGrid(24, 48, lmax=15)


def test_quadrature_orthonormality(full_grid):
    g = full_grid
    pairs = [((3, 2), (3, 2)), ((15, 0), (15, 0)), ((3, 2), (5, 2)),
             ((4, 1), (4, 3)), ((0, 0), (8, 0)), ((7, 7), (7, 7))]
    for (l1, m1), (l2, m2) in pairs:
        val = g.integrate(g.ylm(l1, m1) * g.ylm(l2, m2))
        expect = 1.0 if (l1, m1) == (l2, m2) else 0.0
        assert abs(val - expect) < 1e-12, (l1, m1, l2, m2)


def test_total_solid_angle(full_grid):
    assert abs(full_grid.integrate(np.ones(full_grid.shape)) - 4 * np.pi) < 1e-12


def test_transform_roundtrip(full_grid):
    rng = np.random.default_rng(0)
    coeffs = [(rng.standard_normal(full_grid.lmax + 1 - m)
               + 1j * rng.standard_normal(full_grid.lmax + 1 - m) * (m > 0)).astype(complex)
              for m in range(full_grid.mmax + 1)]
    f = full_grid.synthesize(coeffs)
    back = full_grid.analyze(f)
    err = max(np.max(np.abs(a - b)) for a, b in zip(coeffs, back))
    assert err < 1e-12


def test_theta_derivatives_axisymmetric():
    grid = SphereGrid(32, 1)
    from numpy.polynomial import legendre
    c = np.zeros(5)
    c[4] = 1.0
    P4 = legendre.Legendre(c)
    norm = np.sqrt(9 / (4 * np.pi))
    th = grid.theta
    f = grid.ylm(4, 0)
    ft, fp, ftt, ftp, fpp = grid.partials(f)
    assert_allclose(ft[:, 0], -norm * P4.deriv()(np.cos(th)) * np.sin(th), atol=1e-11)
    exact_tt = norm * (P4.deriv(2)(np.cos(th)) * np.sin(th) ** 2
                       - P4.deriv()(np.cos(th)) * np.cos(th))
    assert_allclose(ftt[:, 0], exact_tt, atol=1e-10)
    assert_allclose(fp, 0.0, atol=1e-14)


def test_matrices_match_transforms():
    grid = SphereGrid(12, 8)
    Dt, Dp, Dtt, Dtp, Dpp = grid.partial_matrices()
    f = grid.ylm(5, 3) + 0.3 * grid.ylm(2, 0)
    ft = grid.partials(f)[0]
    assert_allclose((Dt @ f.reshape(-1)).reshape(grid.shape), ft, atol=1e-12)


def test_round_laplacian_eigenvalue():
    grid = SphereGrid(12, 8)
    Dt, Dp, Dtt, Dtp, Dpp = grid.partial_matrices()
    cot = np.repeat(np.cos(grid.theta) / np.sin(grid.theta), grid.n_lon)
    inv_s2 = np.repeat(1.0 / np.sin(grid.theta) ** 2, grid.n_lon)
    lap = Dtt + cot[:, None] * Dt + inv_s2[:, None] * Dpp
    y = grid.ylm(5, 3).reshape(-1)
    assert_allclose(lap @ y, -30 * y, atol=1e-11)


def test_band_limit_guards():
    with pytest.raises(ValueError):
        SphereGrid(8, 1, lmax=12)
    grid = SphereGrid(8, 1)
    with pytest.raises(ValueError):
        grid.ylm(3, 2)  # m beyond the axisymmetric band
