import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from horizonlab.catalog import (UnknownDataError, catalog_load, load_config,
                                validate_decay)
from horizonlab.geometry import NotApplicableError


def test_flat_vacuum_is_trivial(flat_data):
    x = np.array([[1.0, 0.0, 0.0], [3.0, 1.0, -1.0]])
    assert_allclose(flat_data.extrinsic.k(x), 0.0)
    assert_allclose(flat_data.constraints_at(x).mu, 0.0, atol=1e-14)
    assert flat_data.mu1() == 0.0


def test_constant_k_trace(fck_data):
    r = fck_data.chart.nodes()
    assert_allclose(fck_data.radial.tr_k(r), 0.3, atol=1e-14)
    x = np.array([[2.0, 1.0, 0.0]])
    ginv = np.linalg.inv(fck_data.metric.g(x))
    trk = np.einsum("...ab,...ab->...", ginv, fck_data.extrinsic.k(x))
    assert_allclose(trk, 0.3, atol=1e-14)


def test_pg_mots_convention(pg_data):
    # the sign of k is fixed by theta(2M) = 0 with the outward normal
    prof = pg_data.radial
    assert abs(prof.expansion(2.0)) < 1e-14
    assert prof.expansion(3.0) > 0 > prof.expansion(1.0)


def test_catalog_rejects_bad_input():
    with pytest.raises(UnknownDataError):
        catalog_load("kerr")
    with pytest.raises(UnknownDataError):
        catalog_load("painleve_gullstrand", {"M": -1.0})
    with pytest.raises(UnknownDataError):
        catalog_load("periodic_constant_k", {"L": 0.0})


def test_decay_flat_trivially_passes(flat_data):
    report = validate_decay(flat_data)
    assert report.overall
    assert all(np.isinf(v) for v in report.exponents.values())


def test_decay_isotropic_passes(iso_data):
    report = validate_decay(iso_data)
    assert report.overall
    assert abs(report.exponents["g_minus_delta"] - 1.0) < 0.2


def test_decay_constant_k_fails_on_k(fck_data):
    report = validate_decay(fck_data)
    assert not report.overall
    assert not report.passes["k"]
    assert not report.passes["coordinate_tr_k"]
    assert report.passes["g_minus_delta"]


def test_decay_pg_fails_on_slow_k(pg_data):
    # k ~ r^{-3/2} misses the required quadratic rate; the entry is flagged
    report = validate_decay(pg_data)
    assert not pg_data.asymptotically_flat
    assert not report.passes["k"]
    assert abs(report.exponents["k"] - 1.5) < 0.1


def test_decay_periodic_not_applicable(periodic_data):
    with pytest.raises(NotApplicableError):
        validate_decay(periodic_data)


def test_vacuum_dec_margin(iso_data, pg_data):
    for data in (iso_data, pg_data):
        r = data.chart.nodes()[::40]
        x = np.stack([r, 0.3 * r, np.zeros_like(r)], axis=-1)
        assert np.min(data.constraints_at(x).dec_margin) >= -1e-10


def test_load_config_shorthand():
    data = load_config("pg:M=2")
    assert data.name == "painleve_gullstrand"
    assert data.params["M"] == 2.0
    assert abs(data.radial.expansion(4.0)) < 1e-14  # MOTS at r = 2M
    with pytest.raises(UnknownDataError):
        load_config("pg:M")
    with pytest.raises(UnknownDataError):
        load_config("mystery:M=1")


def test_load_config_json(tmp_path):
    cfg = {"data": {"name": "flat_constant_k", "params": {"c": 0.2}},
           "chart": {"kind": "radial", "r_min": 0.5, "r_max": 8.0, "n_points": 64}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    data = load_config(str(path))
    assert data.params["c"] == 0.2
    assert data.chart.n_points == 64


def test_decay_conformal_perturbed_passes():
    data = catalog_load("conformal_perturbed", {"M": 1.0, "eps": 0.05})
    report = validate_decay(data)
    assert report.overall
    # the bump is non-vacuum: the margin is computed, not assumed nonnegative
    x = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert np.all(np.isfinite(data.constraints_at(x).dec_margin))
