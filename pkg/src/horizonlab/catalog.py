"""Catalog of model initial data sets, configuration ingestion, and decay validation.

Every catalog entry carries two representations that downstream modules
cross-validate against each other:

* Cartesian component functions (with analytic derivatives) feeding the
  general tensor machinery in :mod:`horizonlab.geometry`;
* a radial profile (metric a(r)^2 dr^2 + R(r)^2 dOmega^2, extrinsic curvature
  eigenvalues kappa_r, kappa_t) feeding the 1D reductions used by the solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import (Chart, ExtrinsicField, MetricField, NotApplicableError,
                       constraints, periodic_chart, radial_chart)


class UnknownDataError(ValueError):
    """Catalog name not recognized or parameters out of range."""


# ---------------------------------------------------------------------------
# Radial profiles (spherically symmetric reduction)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialProfile:
    """Spherically symmetric reduction g = a(r)^2 dr^2 + R(r)^2 dOmega^2 with k
    diagonal in the same frame (eigenvalues kappa_r once, kappa_t twice)."""

    a: Callable
    R: Callable
    dR: Callable
    kappa_r: Callable
    kappa_t: Callable
    homogeneous: bool = False  # periodic-box fixture: area factor 1, no sphere part

    def area_factor(self, r):
        """Flux area factor of the 1D divergence form (R^2, or 1 on a periodic line)."""
        if self.homogeneous:
            return np.ones_like(np.asarray(r, dtype=float))
        return self.R(r) ** 2

    def tr_k(self, r):
        return self.kappa_r(r) + 2.0 * self.kappa_t(r)

    def expansion(self, r, orientation="outward"):
        """Closed-form expansion of the round sphere of coordinate radius r."""
        if self.homogeneous:
            raise NotApplicableError("no round spheres on a periodic line")
        H = 2.0 * self.dR(r) / (self.a(r) * self.R(r))
        sign = 1.0 if orientation == "outward" else -1.0
        return sign * H - 2.0 * self.kappa_t(r)

    def d_expansion_dr(self, r, orientation="outward", h=1e-5):
        rr = np.asarray(r, dtype=float)
        return (self.expansion(rr - 2 * h, orientation) - 8 * self.expansion(rr - h, orientation)
                + 8 * self.expansion(rr + h, orientation) - self.expansion(rr + 2 * h, orientation)) / (12 * h)

    def geodesic_width(self, r1, r2, n=2049):
        """Radial geodesic distance between coordinate radii (Simpson quadrature)."""
        from scipy.integrate import simpson
        r = np.linspace(min(r1, r2), max(r1, r2), n)
        return float(simpson(self.a(r), x=r))


# ---------------------------------------------------------------------------
# Initial data sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialDataSet:
    name: str
    params: dict
    chart: Chart
    metric: MetricField
    extrinsic: ExtrinsicField
    symmetry: str  # 'spherical' | 'periodic_homogeneous' | 'none'
    radial: Optional[RadialProfile] = None
    asymptotically_flat: bool = True
    test_mode: bool = False

    def mu1(self) -> float:
        """max |tr_g k| over the chart (a priori bound scale for s f_s)."""
        r = self.chart.nodes()
        if self.radial is not None:
            return float(np.max(np.abs(self.radial.tr_k(r))))
        x = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
        ginv = np.linalg.inv(self.metric.g(x))
        trk = np.einsum("...ab,...ab->...", ginv, self.extrinsic.k(x))
        return float(np.max(np.abs(trk)))

    def constraints_at(self, x):
        return constraints(self.metric, self.extrinsic, x)


# ---------------------------------------------------------------------------
# Cartesian component helpers
# ---------------------------------------------------------------------------

def _unit(x):
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / r, r[..., 0]


def _conformal_metric(u, du, d2u) -> MetricField:
    """g_ab = u(r) * delta_ab with radial u and analytic radial derivatives."""
    eye = np.eye(3)

    def g(x):
        _, r = _unit(np.asarray(x, dtype=float))
        return u(r)[..., None, None] * eye

    def dg(x):
        xh, r = _unit(np.asarray(x, dtype=float))
        grad = du(r)[..., None] * xh  # d_c u
        return grad[..., :, None, None] * eye

    def d2g(x):
        xh, r = _unit(np.asarray(x, dtype=float))
        P = eye - xh[..., :, None] * xh[..., None, :]
        hess = (d2u(r)[..., None, None] * xh[..., :, None] * xh[..., None, :]
                + (du(r) / r)[..., None, None] * P)
        return hess[..., :, :, None, None] * eye

    return MetricField(g=g, dg=dg, d2g=d2g)


def _flat_metric() -> MetricField:
    eye = np.eye(3)

    def g(x):
        return np.broadcast_to(eye, np.asarray(x).shape[:-1] + (3, 3)).copy()

    def dg(x):
        return np.zeros(np.asarray(x).shape[:-1] + (3, 3, 3))

    def d2g(x):
        return np.zeros(np.asarray(x).shape[:-1] + (3, 3, 3, 3))

    return MetricField(g=g, dg=dg, d2g=d2g)


def _radial_k(p, dp, q, dq) -> ExtrinsicField:
    """k_ab = p(r) xhat_a xhat_b + q(r) (delta_ab - xhat_a xhat_b), flat-frame components."""
    eye = np.eye(3)

    def k(x):
        xh, r = _unit(np.asarray(x, dtype=float))
        rad = xh[..., :, None] * xh[..., None, :]
        return p(r)[..., None, None] * rad + q(r)[..., None, None] * (eye - rad)

    def dk(x):
        xh, r = _unit(np.asarray(x, dtype=float))
        rad = xh[..., :, None] * xh[..., None, :]
        trans = eye - rad
        # d_c (xhat_a xhat_b) = (delta_ca xhat_b + delta_cb xhat_a - 2 xhat_c xhat_a xhat_b)/r
        drad = (eye[:, :, None] * xh[..., None, None, :]
                + eye[:, None, :][None] * xh[..., None, :, None]
                - 2.0 * xh[..., :, None, None] * xh[..., None, :, None] * xh[..., None, None, :]
                ) / r[..., None, None, None]
        return (dp(r)[..., None, None, None] * xh[..., :, None, None] * rad[..., None, :, :]
                + dq(r)[..., None, None, None] * xh[..., :, None, None] * trans[..., None, :, :]
                + (p(r) - q(r))[..., None, None, None] * drad)

    return ExtrinsicField(k=k, dk=dk)


def _constant_k(c) -> ExtrinsicField:
    eye = np.eye(3)

    def k(x):
        return np.broadcast_to(c * eye, np.asarray(x).shape[:-1] + (3, 3)).copy()

    def dk(x):
        return np.zeros(np.asarray(x).shape[:-1] + (3, 3, 3))

    return ExtrinsicField(k=k, dk=dk)


def flat_with_radial_k(name, params, chart, kappa_r, dkappa_r, kappa_t, dkappa_t,
                       asymptotically_flat=True, test_mode=False) -> InitialDataSet:
    """Flat spatial metric with a radially diagonal extrinsic curvature; the
    constructor behind the PG entry and the synthetic test fixtures."""
    radial = RadialProfile(
        a=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        R=lambda r: np.asarray(r, dtype=float),
        dR=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        kappa_r=kappa_r, kappa_t=kappa_t)
    return InitialDataSet(
        name=name, params=params, chart=chart,
        metric=_flat_metric(),
        extrinsic=_radial_k(kappa_r, dkappa_r, kappa_t, dkappa_t),
        symmetry="spherical", radial=radial,
        asymptotically_flat=asymptotically_flat, test_mode=test_mode)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def _zeros(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def _ones(r):
    return np.ones_like(np.asarray(r, dtype=float))


def catalog_load(name: str, params: Optional[dict] = None,
                 chart: Optional[Chart] = None) -> InitialDataSet:
    """Load a model initial data set by name.

    Names: flat_vacuum, flat_constant_k(c), painleve_gullstrand(M),
    isotropic_schwarzschild(M), periodic_constant_k(c, L), conformal_perturbed(M, eps).
    """
    params = dict(params or {})

    if name == "flat_vacuum":
        chart = chart or radial_chart(0.5, 10.0, 200)
        radial = RadialProfile(a=_ones, R=lambda r: np.asarray(r, dtype=float),
                               dR=_ones, kappa_r=_zeros, kappa_t=_zeros)
        return InitialDataSet(name=name, params=params, chart=chart,
                              metric=_flat_metric(), extrinsic=ExtrinsicField.zero(),
                              symmetry="spherical", radial=radial)

    if name == "flat_constant_k":
        c = float(params.get("c", 0.1))
        params["c"] = c
        chart = chart or radial_chart(0.5, 20.0, 320)
        radial = RadialProfile(a=_ones, R=lambda r: np.asarray(r, dtype=float),
                               dR=_ones,
                               kappa_r=lambda r: np.full_like(np.asarray(r, dtype=float), c),
                               kappa_t=lambda r: np.full_like(np.asarray(r, dtype=float), c))
        return InitialDataSet(name=name, params=params, chart=chart,
                              metric=_flat_metric(), extrinsic=_constant_k(c),
                              symmetry="spherical", radial=radial,
                              asymptotically_flat=False, test_mode=True)

    if name == "painleve_gullstrand":
        M = float(params.get("M", 1.0))
        if M <= 0:
            raise UnknownDataError("painleve_gullstrand requires M > 0")
        params["M"] = M
        # log spacing resolves the steep transition deep inside the horizon
        chart = chart or radial_chart(0.2 * M, 12.0 * M, 600, spacing="logarithmic")
        # sign fixed so theta = H - tr_Sigma k vanishes at r = 2M with outward normal
        lam = lambda r: np.sqrt(2.0 * M / np.asarray(r, dtype=float) ** 3)
        dlam = lambda r: -1.5 * np.sqrt(2.0 * M) * np.asarray(r, dtype=float) ** -2.5
        return flat_with_radial_k(
            name, params, chart,
            kappa_r=lambda r: -0.5 * lam(r), dkappa_r=lambda r: -0.5 * dlam(r),
            kappa_t=lam, dkappa_t=dlam,
            asymptotically_flat=False)  # k ~ r^{-3/2} misses the required O(r^-2) rate

    if name in ("isotropic_schwarzschild", "conformal_perturbed"):
        M = float(params.get("M", 1.0))
        if M <= 0:
            raise UnknownDataError(f"{name} requires M > 0")
        eps = float(params.get("eps", 0.0)) if name == "conformal_perturbed" else 0.0
        params["M"] = M
        if name == "conformal_perturbed":
            params["eps"] = eps
        chart = chart or radial_chart(0.2 * M, 100.0 * M, 320, spacing="logarithmic")

        def phi(r):
            r = np.asarray(r, dtype=float)
            return 1.0 + M / (2 * r) + eps * np.exp(-r)

        def dphi(r):
            r = np.asarray(r, dtype=float)
            return -M / (2 * r ** 2) - eps * np.exp(-r)

        def d2phi(r):
            r = np.asarray(r, dtype=float)
            return M / r ** 3 + eps * np.exp(-r)

        u = lambda r: phi(r) ** 4
        du = lambda r: 4 * phi(r) ** 3 * dphi(r)
        d2u = lambda r: 12 * phi(r) ** 2 * dphi(r) ** 2 + 4 * phi(r) ** 3 * d2phi(r)
        radial = RadialProfile(
            a=lambda r: phi(r) ** 2,
            R=lambda r: phi(r) ** 2 * np.asarray(r, dtype=float),
            dR=lambda r: phi(r) ** 2 + 2 * phi(r) * dphi(r) * np.asarray(r, dtype=float),
            kappa_r=_zeros, kappa_t=_zeros)
        return InitialDataSet(name=name, params=params, chart=chart,
                              metric=_conformal_metric(u, du, d2u),
                              extrinsic=ExtrinsicField.zero(),
                              symmetry="spherical", radial=radial)

    if name == "periodic_constant_k":
        c = float(params.get("c", 0.1))
        L = float(params.get("L", 1.0))
        if L <= 0:
            raise UnknownDataError("periodic_constant_k requires L > 0")
        params.update({"c": c, "L": L})
        chart = chart or periodic_chart(L, 64)
        radial = RadialProfile(a=_ones, R=_ones, dR=_zeros,
                               kappa_r=lambda r: np.full_like(np.asarray(r, dtype=float), c),
                               kappa_t=lambda r: np.full_like(np.asarray(r, dtype=float), c),
                               homogeneous=True)
        return InitialDataSet(name=name, params=params, chart=chart,
                              metric=_flat_metric(), extrinsic=_constant_k(c),
                              symmetry="periodic_homogeneous", radial=radial,
                              asymptotically_flat=False, test_mode=True)

    raise UnknownDataError(f"unknown catalog entry {name!r}")


# ---------------------------------------------------------------------------
# Decay validation
# ---------------------------------------------------------------------------

#: required decay exponents from the asymptotic-flatness condition
DECAY_TARGETS = {"g_minus_delta": 1.0, "R_g": 4.0, "k": 2.0, "coordinate_tr_k": 3.0}
DECAY_SLACK = 0.2
ZERO_FLOOR = 1e-13


@dataclass(frozen=True)
class DecayReport:
    exponents: dict        # quantity -> measured exponent (inf for identically zero)
    targets: dict
    passes: dict           # quantity -> bool
    overall: bool
    n_nodes: int


def _fit_exponent(r, q):
    """Least-squares slope p of log|q| ~ -p log r; inf if q vanishes identically."""
    mask = np.abs(q) > ZERO_FLOOR
    if not np.any(mask):
        return np.inf
    if np.sum(mask) < 4:
        return 0.0
    lr, lq = np.log(r[mask]), np.log(np.abs(q[mask]))
    slope = np.polyfit(lr, lq, 1)[0]
    return -slope


def validate_decay(data: InitialDataSet) -> DecayReport:
    """Measure fall-off exponents of g - delta, R_g, k, and the coordinate trace
    of k on the outer quarter of a radial chart and compare with the required rates."""
    if data.chart.kind != "radial":
        raise NotApplicableError("decay validation requires a radial chart")
    r = data.chart.nodes()
    outer = r[r >= r[0] + 0.75 * (r[-1] - r[0])]
    if outer.size < 16:
        outer = r[-16:]
    if outer.size < 16:
        raise NotApplicableError("outer region must contain at least 16 nodes")

    x = np.stack([outer, np.zeros_like(outer), np.zeros_like(outer)], axis=-1)
    g = data.metric.g(x)
    k = data.extrinsic.k(x)
    from .geometry import scalar_curvature
    Rg = scalar_curvature(data.metric, x)

    qty = {
        "g_minus_delta": np.max(np.abs(g - np.eye(3)), axis=(-2, -1)),
        "R_g": np.abs(Rg),
        "k": np.max(np.abs(k), axis=(-2, -1)),
        "coordinate_tr_k": np.abs(np.einsum("...aa->...", k)),
    }
    exponents = {name: _fit_exponent(outer, q) for name, q in qty.items()}
    passes = {name: exponents[name] >= DECAY_TARGETS[name] - DECAY_SLACK
              for name in qty}
    return DecayReport(exponents=exponents, targets=dict(DECAY_TARGETS),
                       passes=passes, overall=all(passes.values()),
                       n_nodes=int(outer.size))


# ---------------------------------------------------------------------------
# Configuration ingestion
# ---------------------------------------------------------------------------

_SHORTHAND = {
    "flat": "flat_vacuum",
    "flat_vacuum": "flat_vacuum",
    "flatk": "flat_constant_k",
    "flat_constant_k": "flat_constant_k",
    "pg": "painleve_gullstrand",
    "painleve_gullstrand": "painleve_gullstrand",
    "iso": "isotropic_schwarzschild",
    "isotropic_schwarzschild": "isotropic_schwarzschild",
    "periodic": "periodic_constant_k",
    "periodic_constant_k": "periodic_constant_k",
    "confp": "conformal_perturbed",
    "conformal_perturbed": "conformal_perturbed",
}


def _chart_from_config(cfg: dict) -> Chart:
    kind = cfg.get("kind", "radial")
    if kind == "radial":
        return radial_chart(cfg["r_min"], cfg["r_max"], int(cfg["n_points"]),
                            cfg.get("spacing", "uniform"))
    if kind == "periodic_box":
        return periodic_chart(cfg["side_length"], int(cfg["n_points"]))
    raise UnknownDataError(f"unknown chart kind {kind!r} in config")


def load_config(spec: str, n_points: Optional[int] = None) -> InitialDataSet:
    """Resolve a --data argument: either a JSON config file path or the shorthand
    'name:key=val,key=val' (e.g. 'pg:M=1')."""
    if spec.endswith(".json"):
        with open(spec) as f:
            cfg = json.load(f)
        if "data" not in cfg or "name" not in cfg["data"]:
            raise UnknownDataError("config must contain data.name")
        name = cfg["data"]["name"]
        if name not in _SHORTHAND:
            raise UnknownDataError(f"unknown catalog entry {name!r}")
        chart = _chart_from_config(cfg["chart"]) if "chart" in cfg else None
        return catalog_load(_SHORTHAND[name], cfg["data"].get("params", {}), chart)

    head, _, tail = spec.partition(":")
    if head not in _SHORTHAND:
        raise UnknownDataError(f"unknown catalog entry {head!r}")
    params = {}
    if tail:
        for item in tail.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise UnknownDataError(f"malformed data parameter {item!r}")
            params[key] = float(val)
    data = catalog_load(_SHORTHAND[head], params)
    if n_points is not None and data.chart.kind == "radial":
        chart = radial_chart(data.chart.r_min, data.chart.r_max, n_points,
                             data.chart.spacing)
        data = catalog_load(_SHORTHAND[head], params, chart)
    elif n_points is not None and data.chart.kind == "periodic_box":
        chart = periodic_chart(data.chart.side_length, n_points)
        data = catalog_load(_SHORTHAND[head], params, chart)
    return data
