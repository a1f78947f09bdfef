"""Geometry of embedded 2-surfaces: induced metric, second fundamental form,
mean curvature, expansion, and graphs in normal (Fermi) coordinates.

Surfaces are spectral graphs over the unit sphere.  Every representation is
reduced to Cartesian embedding values X(y) on a :class:`SphereGrid`; the first
and second fundamental forms then follow from spectral partials of X and the
ambient metric.  The closed-form radial path for spherically symmetric data
lives on :class:`horizonlab.catalog.RadialProfile` and serves as the
independent oracle for everything here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .catalog import InitialDataSet
from .geometry import NotApplicableError, christoffel, ricci, scalar_curvature
from .spheregrid import SphereGrid

_LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _LEVI_CIVITA[_i, _j, _k] = 1.0
    _LEVI_CIVITA[_i, _k, _j] = -1.0


class ChartBoundsError(Exception):
    """Surface leaves the computational chart."""


class FocalDistanceError(Exception):
    """Fermi graph height exceeds the focal-distance estimate of its base."""


# ---------------------------------------------------------------------------
# Surface representations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Surface:
    """round_sphere(r) | radial_graph(rho) | fermi_graph(base, w), with an
    orientation selecting the unit normal."""

    kind: str
    grid: SphereGrid
    orientation: str = "outward"
    radius: float = 0.0
    rho: Optional[np.ndarray] = None
    base: Optional["Surface"] = None
    w: Optional[np.ndarray] = None

    @classmethod
    def round_sphere(cls, r: float, grid: SphereGrid, orientation="outward"):
        if r <= 0:
            raise ValueError("round sphere needs r > 0")
        return cls(kind="round_sphere", grid=grid, orientation=orientation, radius=float(r))

    @classmethod
    def radial_graph(cls, rho, grid: SphereGrid, orientation="outward"):
        rho = np.asarray(rho, dtype=float).reshape(grid.shape)
        if np.min(rho) <= 0:
            raise ValueError("radial graph needs rho > 0 everywhere")
        return cls(kind="radial_graph", grid=grid, orientation=orientation, rho=rho)

    @classmethod
    def fermi_graph(cls, base: "Surface", w, orientation="outward"):
        w = np.asarray(w, dtype=float).reshape(base.grid.shape)
        return cls(kind="fermi_graph", grid=base.grid, orientation=orientation,
                   base=base, w=w)

    def rho_field(self) -> np.ndarray:
        if self.kind == "round_sphere":
            return np.full(self.grid.shape, self.radius)
        if self.kind == "radial_graph":
            return self.rho
        raise NotApplicableError("fermi graphs carry no radial field")


# ---------------------------------------------------------------------------
# Geodesic normal exponential map
# ---------------------------------------------------------------------------

def exp_map(data: InitialDataSet, x0, v0, n_steps: int = 48):
    """Ambient exponential: integrate the geodesic equation from x0 with initial
    velocity v0 to unit parameter time (RK4; exact when spatial metric is flat).

    Returns arrival points and arrival velocities.
    """
    metric = data.metric

    def acc(x, v):
        gam = christoffel(metric, x)
        return -np.einsum("...ijk,...j,...k->...i", gam, v, v)

    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    h = 1.0 / n_steps
    for _ in range(n_steps):
        k1x, k1v = v, acc(x, v)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x, v


# ---------------------------------------------------------------------------
# Embedding partials
# ---------------------------------------------------------------------------

def _graph_embedding_partials(grid: SphereGrid, rho):
    """Partials of X = rho * nhat from spectral partials of rho and the analytic
    partials of the unit direction field."""
    n, n_t, n_p, n_tt, n_tp, n_pp = grid.unit_direction_partials()
    r = rho[..., None]
    rt, rp, rtt, rtp, rpp = [d[..., None] for d in grid.partials(rho)]
    X = r * n
    X_t = rt * n + r * n_t
    X_p = rp * n + r * n_p
    X_tt = rtt * n + 2 * rt * n_t + r * n_tt
    X_tp = rtp * n + rt * n_p + rp * n_t + r * n_tp
    X_pp = rpp * n + 2 * rp * n_p + r * n_pp
    return X, (X_t, X_p), (X_tt, X_tp, X_pp)


def _field_embedding_partials(grid: SphereGrid, X):
    """Spectral partials of a pointwise embedding (used for Fermi graphs)."""
    parts = [grid.partials(X[..., a]) for a in range(3)]
    stack = lambda i: np.stack([parts[a][i] for a in range(3)], axis=-1)
    return X, (stack(0), stack(1)), (stack(2), stack(3), stack(4))


def _resample_lon(field, grid: SphereGrid, grid_wide: SphereGrid):
    """Re-evaluate a band-limited field on a grid with more longitudes."""
    coeffs = grid.analyze(field)
    padded = [coeffs[m] if m <= grid.mmax else np.zeros(grid_wide.lmax + 1 - m, dtype=complex)
              for m in range(grid_wide.mmax + 1)]
    return grid_wide.synthesize(padded)


def _widen_surface(surface: Surface, grid_wide: SphereGrid) -> Surface:
    if surface.kind == "round_sphere":
        return Surface.round_sphere(surface.radius, grid_wide, surface.orientation)
    if surface.kind == "radial_graph":
        return Surface.radial_graph(_resample_lon(surface.rho, surface.grid, grid_wide),
                                    grid_wide, surface.orientation)
    base = _widen_surface(surface.base, grid_wide)
    return Surface.fermi_graph(base, _resample_lon(surface.w, surface.grid, grid_wide),
                               surface.orientation)


def _embedding(data: InitialDataSet, surface: Surface):
    """Embedding values and partials; for Fermi graphs also the transported
    normal direction used to orient the limit normal."""
    grid = surface.grid
    if surface.kind in ("round_sphere", "radial_graph"):
        return _graph_embedding_partials(grid, surface.rho_field()) + (None,)
    if surface.kind != "fermi_graph":
        raise ValueError(f"unknown surface kind {surface.kind!r}")

    base_geom = surface_geometry(data, surface.base)
    kmax = np.max(np.abs(base_geom.principal_curvatures))
    focal = 0.5 / max(kmax, 1e-30)
    if np.max(np.abs(surface.w)) > focal * (1.0 + 1e-12):
        raise FocalDistanceError(
            f"max|w| = {np.max(np.abs(surface.w)):.3e} exceeds focal estimate {focal:.3e}")
    v0 = surface.w[..., None] * base_geom.nu
    X, v_end = exp_map(data, base_geom.X, v0)
    wsafe = np.where(np.abs(surface.w) > 1e-14, surface.w, 1.0)
    transported = np.where(np.abs(surface.w)[..., None] > 1e-14,
                           v_end / wsafe[..., None], base_geom.nu)
    emb = _field_embedding_partials(grid, X)
    return emb + (transported,)


# ---------------------------------------------------------------------------
# Surface geometry
# ---------------------------------------------------------------------------

@dataclass
class SurfaceGeometry:
    """Induced geometry of a surface in an initial data set, on the grid nodes."""

    grid: SphereGrid
    X: np.ndarray                 # embedding points
    tangents: np.ndarray          # T[i] = dX/dy^i, shape (..., 2, 3)
    nu: np.ndarray                # unit normal (upper components)
    gamma: np.ndarray             # induced metric, (..., 2, 2)
    gamma_inv: np.ndarray
    gamma_christoffel: np.ndarray  # (..., 2(k), 2(i), 2(j))
    sqrt_gamma: np.ndarray
    h: np.ndarray                 # second fundamental form w.r.t. nu
    H: np.ndarray                 # mean curvature
    tr_sigma_k: np.ndarray
    theta: np.ndarray             # expansion H - tr_Sigma k
    R_sigma: np.ndarray           # intrinsic scalar curvature
    h_minus_k2: np.ndarray        # |h - k|^2 on the surface
    xi_low: np.ndarray            # drift covector, (..., 2)
    xi_up: np.ndarray
    xi_norm2: np.ndarray
    div_xi: np.ndarray
    mu: np.ndarray
    J_nu: np.ndarray
    trk_ambient: np.ndarray
    area: float
    principal_curvatures: np.ndarray
    xi_tangency: np.ndarray       # <xi, nu>, a pure roundoff diagnostic

    @property
    def area_element(self) -> np.ndarray:
        """Surface measure weights: integral of f over the surface is
        sum(f * area_element)."""
        return self.sqrt_gamma * self.grid.coordinate_weights


def surface_geometry(data: InitialDataSet, surface: Surface) -> SurfaceGeometry:
    """All induced-geometry fields of `surface` in `data`."""
    grid = surface.grid
    # Cartesian embedding components of a Fermi graph carry one longitudinal
    # mode more than the height field; compute on a widened grid and slice back.
    if surface.kind == "fermi_graph" and grid.n_lon < 2 * grid.mmax + 4:
        stride = -(-(2 * grid.mmax + 4) // grid.n_lon)
        grid_wide = SphereGrid(grid.n_lat, grid.n_lon * stride, lmax=grid.lmax)
        wide = surface_geometry(data, _widen_surface(surface, grid_wide))
        fields = {}
        from dataclasses import fields as dc_fields
        for f in dc_fields(SurfaceGeometry):
            val = getattr(wide, f.name)
            if isinstance(val, np.ndarray) and val.shape[:2] == grid_wide.shape:
                val = np.ascontiguousarray(val[:, ::stride])
            fields[f.name] = val
        fields["grid"] = grid
        return SurfaceGeometry(**fields)

    X, (X_t, X_p), (X_tt, X_tp, X_pp), transported = _embedding(data, surface)

    if data.chart.kind == "radial":
        radii = np.linalg.norm(X, axis=-1)
        lo, hi = data.chart.r_min, data.chart.r_max
        pad = 1e-9 * (hi - lo)
        if np.min(radii) < lo - pad or np.max(radii) > hi + pad:
            raise ChartBoundsError(
                f"surface radius range [{np.min(radii):.6g}, {np.max(radii):.6g}] "
                f"exits chart [{lo:.6g}, {hi:.6g}]")
    else:
        raise NotApplicableError("embedded surfaces require a radial chart")

    g = data.metric.g(X)
    gam_amb = christoffel(data.metric, X)
    k = data.extrinsic.k(X)

    T = np.stack([X_t, X_p], axis=-2)
    second = np.stack([np.stack([X_tt, X_tp], axis=-2),
                       np.stack([X_tp, X_pp], axis=-2)], axis=-3)

    gamma = np.einsum("...ab,...ia,...jb->...ij", g, T, T)
    det = gamma[..., 0, 0] * gamma[..., 1, 1] - gamma[..., 0, 1] ** 2
    gamma_inv = np.empty_like(gamma)
    gamma_inv[..., 0, 0] = gamma[..., 1, 1] / det
    gamma_inv[..., 1, 1] = gamma[..., 0, 0] / det
    gamma_inv[..., 0, 1] = gamma_inv[..., 1, 0] = -gamma[..., 0, 1] / det
    sqrt_gamma = np.sqrt(det)

    # unit normal: Levi-Civita contraction of the tangents, raised and normalized
    n_low = np.einsum("abc,...b,...c->...a", _LEVI_CIVITA, X_t, X_p)
    ginv = np.linalg.inv(g)
    nu = np.einsum("...ab,...b->...a", ginv, n_low)
    nu = nu / np.sqrt(np.einsum("...ab,...a,...b->...", g, nu, nu))[..., None]
    if surface.kind == "fermi_graph":
        align = np.einsum("...ab,...a,...b->...", g, nu, transported)
    else:
        align = np.einsum("...a,...a->...", nu, X)  # outward: points away from origin
    nu = nu * np.sign(align)[..., None]
    if surface.orientation == "inward":
        nu = -nu
    elif surface.orientation != "outward":
        raise ValueError(f"unknown orientation {surface.orientation!r}")
    nu_low = np.einsum("...ab,...b->...a", g, nu)

    # h_ij = -nu_a (d2_ij X^a + Gamma^a_bc T_i^b T_j^c)
    h = -(np.einsum("...a,...ija->...ij", nu_low, second)
          + np.einsum("...a,...abc,...ib,...jc->...ij", nu_low, gam_amb, T, T))
    H = np.einsum("...ij,...ij->...", gamma_inv, h)
    shape_op = np.einsum("...ik,...kj->...ij", gamma_inv, h)
    principal = np.linalg.eigvals(shape_op).real

    k_sigma = np.einsum("...ab,...ia,...jb->...ij", k, T, T)
    tr_sigma_k = np.einsum("...ij,...ij->...", gamma_inv, k_sigma)
    theta = H - tr_sigma_k

    dev = h - k_sigma
    h_minus_k2 = np.einsum("...ik,...jl,...ij,...kl->...", gamma_inv, gamma_inv, dev, dev)
    h2 = np.einsum("...ik,...jl,...ij,...kl->...", gamma_inv, gamma_inv, h, h)

    # intrinsic curvature via the contracted Gauss equation
    Rg = scalar_curvature(data.metric, X)
    ric = ricci(data.metric, X)
    ric_nn = np.einsum("...ab,...a,...b->...", ric, nu, nu)
    R_sigma = Rg - 2.0 * ric_nn + H ** 2 - h2

    # drift covector xi_i = k(nu, T_i)
    xi_low = np.einsum("...ab,...a,...ib->...i", k, nu, T)
    xi_up = np.einsum("...ij,...j->...i", gamma_inv, xi_low)
    xi_norm2 = np.einsum("...i,...i->...", xi_up, xi_low)

    # surface Christoffels from first derivatives of gamma
    dg = data.metric.dg(X)
    dgamma = (np.einsum("...cab,...kc,...ia,...jb->...kij", dg, T, T, T)
              + np.einsum("...ab,...kia,...jb->...kij", g, second, T)
              + np.einsum("...ab,...ia,...kjb->...kij", g, T, second))
    gamma_chr = 0.5 * np.einsum(
        "...kl,...lij->...kij",
        gamma_inv,
        np.einsum("...ilj->...lij", dgamma) + np.einsum("...jli->...lij", dgamma)
        - np.einsum("...lij->...lij", dgamma))

    # div_Sigma xi through the ambient components of the tangential field
    xi_amb = np.einsum("...i,...ia->...a", xi_up, T)
    dxi = np.stack([np.stack(grid.partials(xi_amb[..., a])[:2], axis=-1)
                    for a in range(3)], axis=-2)  # (..., 3, 2): d_i xi^a at [..., a, i]
    cov = (np.einsum("...ai->...ia", dxi)
           + np.einsum("...abc,...ib,...c->...ia", gam_amb, T, xi_amb))
    div_xi = np.einsum("...ij,...ia,...ab,...jb->...", gamma_inv, cov, g, T)

    cons = data.constraints_at(X)
    J_nu = np.einsum("...a,...a->...", cons.J, nu)
    trk_amb = np.einsum("...ab,...ab->...", np.linalg.inv(g), k)

    area = float(np.sum(sqrt_gamma * grid.coordinate_weights))
    xi_tangency = np.einsum("...ab,...a,...b->...", g, xi_amb, nu)

    return SurfaceGeometry(
        grid=grid, X=X, tangents=T, nu=nu, gamma=gamma, gamma_inv=gamma_inv,
        gamma_christoffel=gamma_chr, sqrt_gamma=sqrt_gamma, h=h, H=H,
        tr_sigma_k=tr_sigma_k, theta=theta, R_sigma=R_sigma,
        h_minus_k2=h_minus_k2, xi_low=xi_low, xi_up=xi_up, xi_norm2=xi_norm2,
        div_xi=div_xi, mu=cons.mu, J_nu=J_nu, trk_ambient=trk_amb, area=area,
        principal_curvatures=principal, xi_tangency=xi_tangency)


def expansion(data: InitialDataSet, surface: Surface) -> np.ndarray:
    """Expansion theta = H - tr_Sigma k of the surface, pointwise on the grid."""
    return surface_geometry(data, surface).theta


def fermi_expansion(data: InitialDataSet, base: Surface, w) -> np.ndarray:
    """Expansion of the graph of w in Fermi coordinates over `base`, with normal
    continuing the base orientation."""
    return expansion(data, Surface.fermi_graph(base, w))


# ---------------------------------------------------------------------------
# Surfaces of revolution in M x R (barrier checks)
# ---------------------------------------------------------------------------

def revolution_expansion(data: InitialDataSet, r_of_t, dr_dt, d2r_dt2, t):
    """Expansion of the hypersurface of revolution {radius = r(t)} in the product
    M x R over spherically symmetric data, w.r.t. the outward-in-r normal.

    The vertical direction carries no extrinsic curvature, matching the trivial
    extension used for graphs over cylinders.
    """
    if data.radial is None:
        raise NotApplicableError("revolution surfaces need spherically symmetric data")
    prof = data.radial
    t = np.asarray(t, dtype=float)
    r, rd, rdd = np.asarray(r_of_t(t)), np.asarray(dr_dt(t)), np.asarray(d2r_dt2(t))
    a = prof.a(r)
    eps = 1e-6
    da = (prof.a(r + eps) - prof.a(r - eps)) / (2 * eps)
    W2 = 1.0 + a ** 2 * rd ** 2
    W = np.sqrt(W2)
    H = (2.0 * prof.dR(r) / (prof.a(r) * prof.R(r) * W)
         - a * (rdd + (da / a) * rd ** 2) / W ** 3)
    tr_k = 2.0 * prof.kappa_t(r) + prof.kappa_r(r) * (a ** 2 * rd ** 2) / W2
    return H - tr_k
