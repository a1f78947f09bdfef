import numpy as np
import pytest
from numpy.testing import assert_allclose

from horizonlab.geometry import (Chart, DegenerateMetricError, ExtrinsicField,
                                 MetricField, christoffel, constraints,
                                 radial_chart, scalar_curvature)


def spherical_coordinate_metric():
    """g = dr^2 + r^2 dOmega^2 expressed in (r, theta, phi) components."""

    def g(x):
        r, th = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = r ** 2
        out[..., 2, 2] = (r * np.sin(th)) ** 2
        return out

    return MetricField.from_components(g, h=0.01)


def test_christoffel_flat_is_zero(flat_data):
    x = np.array([[1.0, 0.5, -0.2], [2.0, 0.0, 0.0]])
    gamma = christoffel(flat_data.metric, x)
    assert_allclose(gamma, 0.0, atol=1e-15)


def test_christoffel_spherical_chart_closed_form():
    metric = spherical_coordinate_metric()
    x = np.array([2.0, 1.1, 0.3])
    gamma = christoffel(metric, x)
    # standard spherical-chart symbols at r = 2
    assert_allclose(gamma[0, 1, 1], -2.0, atol=1e-8)   # Gamma^r_{theta theta}
    assert_allclose(gamma[1, 0, 1], 0.5, atol=1e-8)    # Gamma^theta_{r theta}
    # symmetry in the lower indices
    assert_allclose(gamma, np.swapaxes(gamma, -1, -2), atol=1e-12)


def test_christoffel_two_evaluation_paths():
    # perturbed conformal metric: analytic derivatives against the FD fallback
    def g(x):
        r = np.linalg.norm(x, axis=-1)
        return (1.0 + 0.1 * np.exp(-r))[..., None, None] * np.eye(3)

    fd = MetricField.from_components(g, h=0.02)

    def dg(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        grad = -0.1 * np.exp(-r) * x / r
        return grad[..., :, None, None] * np.eye(3)

    x = np.array([[1.3, 0.4, -0.7], [0.9, -1.1, 0.5], [2.5, 0.1, 0.1]])
    assert_allclose(fd.dg(x), dg(x), atol=1e-6)
    analytic = MetricField(g=g, dg=dg, d2g=fd.d2g)
    assert_allclose(christoffel(analytic, x), christoffel(fd, x), atol=1e-6)


def test_scalar_curvature_flat(flat_data):
    x = np.array([[1.0, 2.0, 0.2], [0.7, 0.7, 0.7]])
    assert_allclose(scalar_curvature(flat_data.metric, x), 0.0, atol=1e-10)


def test_scalar_curvature_harmonic_conformal_factor(iso_data):
    # phi = 1 + M/(2r) is flat-harmonic, so R = -8 phi^-5 lap(phi) = 0
    x = np.array([3.0, 0.0, 0.0])
    assert abs(scalar_curvature(iso_data.metric, x)) < 1e-10


def test_constraints_flat_vacuum(flat_data):
    x = np.array([[1.5, 0.0, 0.3]])
    c = flat_data.constraints_at(x)
    assert_allclose(c.mu, 0.0, atol=1e-14)
    assert_allclose(c.J, 0.0, atol=1e-14)
    assert_allclose(c.dec_margin, 0.0, atol=1e-14)


def test_constraints_constant_k(fck_data):
    # mu = (9c^2 - 3c^2)/2 = 3c^2 = 0.03 for c = 0.1
    x = np.array([[2.0, 0.5, -0.5], [1.0, 0.0, 0.0]])
    c = fck_data.constraints_at(x)
    assert_allclose(c.mu, 0.03, atol=1e-13)
    assert_allclose(c.J, 0.0, atol=1e-13)


def test_constraints_pg_vacuum(pg_data):
    r = pg_data.chart.nodes()[::50]
    x = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
    c = pg_data.constraints_at(x)
    assert np.max(np.abs(c.mu)) < 1e-8
    assert np.max(np.abs(c.J)) < 1e-8


def test_constraints_quadratic_in_k(pg_data):
    # mu(2k) - mu(k) = (3/2)((tr k)^2 - |k|^2),  J(2k) = 2 J(k)
    doubled = ExtrinsicField(
        k=lambda x: 2.0 * pg_data.extrinsic.k(x),
        dk=lambda x: 2.0 * pg_data.extrinsic.dk(x))
    rng = np.random.default_rng(5)
    x = rng.uniform(1.0, 6.0, (10, 3))
    c1 = constraints(pg_data.metric, pg_data.extrinsic, x)
    c2 = constraints(pg_data.metric, doubled, x)
    g = pg_data.metric.g(x)
    ginv = np.linalg.inv(g)
    k = pg_data.extrinsic.k(x)
    trk = np.einsum("...ab,...ab->...", ginv, k)
    k2 = np.einsum("...ac,...bd,...ab,...cd->...", ginv, ginv, k, k)
    assert_allclose(c2.mu - c1.mu, 1.5 * (trk ** 2 - k2), atol=1e-12)
    assert_allclose(c2.J, 2.0 * c1.J, atol=1e-12)


def test_degenerate_metric_raises():
    def g(x):
        out = np.broadcast_to(np.eye(3), np.asarray(x).shape[:-1] + (3, 3)).copy()
        out[..., 2, 2] = 0.0
        return out

    metric = MetricField.from_components(g)
    with pytest.raises(DegenerateMetricError):
        christoffel(metric, np.array([1.0, 0.0, 0.0]))


def test_chart_validation():
    with pytest.raises(ValueError):
        radial_chart(0.0, 2.0, 64)
    with pytest.raises(ValueError):
        radial_chart(1.0, 2.0, 4)
    with pytest.raises(ValueError):
        Chart(kind="radial", r_min=1.0, r_max=2.0, n_points=32, spacing="cubic")
    nodes = radial_chart(0.5, 2.0, 32, "logarithmic").nodes()
    assert np.all(np.diff(nodes) > 0)


@pytest.mark.parametrize("name,params", [
    ("flat_constant_k", {"c": 0.1}),
    ("painleve_gullstrand", {"M": 1.0}),
    ("isotropic_schwarzschild", {"M": 1.0}),
    ("conformal_perturbed", {"M": 1.0, "eps": 0.05}),
])
def test_analytic_vs_fd_paths_on_catalog(name, params):
    # the two derivative evaluation paths agree on every catalog entry
    from horizonlab.catalog import catalog_load
    data = catalog_load(name, params)
    fd_metric = MetricField.from_components(data.metric.g, h=0.02)
    x = np.array([[1.5, 0.8, 0.4], [3.0, -1.0, 0.5]])
    assert np.max(np.abs(christoffel(data.metric, x)
                         - christoffel(fd_metric, x))) < 1e-6
    assert np.max(np.abs(scalar_curvature(data.metric, x)
                         - scalar_curvature(fd_metric, x))) < 1e-6
    fd_k = ExtrinsicField.from_components(data.extrinsic.k, h=0.02)
    assert np.max(np.abs(data.extrinsic.dk(x) - fd_k.dk(x))) < 1e-6
