"""Warped-product gluing check: cylinders gamma_s + ds^2 over a conformal path
gamma_s = e^{2w} gamma_*, their scalar curvature, and the positivity bound for
the 3D conformal Laplacian in terms of the fiberwise 2D conformal Laplacian.

s-derivatives act on q = e^{2w}: the end condition of the construction is
d(e^{2w})/ds -> 0, and q stays smooth for the punctured-ball profile w = log s
where w itself is singular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .spheregrid import SphereGrid
from .stability import laplace_beltrami_matrix

BC_TOL = 1e-6


class BoundaryConditionError(Exception):
    """End condition d/ds e^{2w} -> 0 violated."""


# ---------------------------------------------------------------------------
# Chebyshev-Gauss collocation on an open interval
# ---------------------------------------------------------------------------

def _cheb_gauss(n: int, a: float, b: float):
    """Interior Chebyshev nodes on (a, b) with barycentric weights (ascending)."""
    j = np.arange(n)
    x = np.cos((2 * j + 1) * np.pi / (2 * n))[::-1]
    lam = ((-1.0) ** j * np.sin((2 * j + 1) * np.pi / (2 * n)))[::-1]
    s = a + (b - a) * (x + 1.0) / 2.0
    return s, x, lam


def _bary_diff_matrix(x, lam):
    n = x.size
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (lam[j] / lam[i]) / (x[i] - x[j])
    D[np.diag_indices(n)] = -np.sum(D, axis=1)
    return D


def _bary_eval(x_nodes, lam, values, x0):
    """Barycentric interpolation of nodal values at x0 (endpoint extrapolation)."""
    d = x0 - x_nodes
    if np.any(np.abs(d) < 1e-14):
        return values[np.argmin(np.abs(d))]
    wts = lam / d
    return np.tensordot(wts, values, axes=(0, 0)) / np.sum(wts)


def _bary_deriv_row(x_nodes, lam, x0):
    """Row vector of the interpolant's derivative at an off-node point x0."""
    d = x0 - x_nodes
    W = lam / d
    S1 = np.sum(W)
    S2 = np.sum(W / d)
    return (W / S1) * (S2 / S1 - 1.0 / d)


# ---------------------------------------------------------------------------
# Warped cylinder assembly
# ---------------------------------------------------------------------------

@dataclass
class WarpedCylinder:
    grid: SphereGrid
    interval: tuple
    s: np.ndarray                  # interior collocation nodes
    w: np.ndarray                  # (n_s, n_lat, n_lon)
    w_s: np.ndarray
    w_ss: np.ndarray
    kappa: np.ndarray              # fiberwise Gaussian curvature of gamma_s
    R_g: np.ndarray                # scalar curvature of the warped 3-metric
    lambda_per_s: np.ndarray       # lambda_1(-Lap_{gamma_s} + kappa_s) per node
    lambda_star: float
    end_flux: tuple                # d/ds e^{2w} extrapolated to both ends
    end_condition_ok: bool
    sup_d2_e2w: float
    _Ds: np.ndarray = None
    _lam_bary: np.ndarray = None
    _x: np.ndarray = None


def assemble_cylinder(w_fn: Callable, interval=(0.0, 3.0), grid: Optional[SphereGrid] = None,
                      n_s: int = 64, kappa_base: float = 1.0,
                      enforce_end_condition: bool = True,
                      w_s_fn: Optional[Callable] = None,
                      w_ss_fn: Optional[Callable] = None) -> WarpedCylinder:
    """Build the warped cylinder for w(x, s) sampled on grid x Chebyshev nodes.

    `w_fn(theta, phi, s)` must broadcast; the base is the unit round sphere
    (kappa_base = 1) carrying the fiberwise conformal factor e^{2w}.  Analytic
    s-derivatives, when supplied, replace the Chebyshev differentiation of
    e^{2w} (needed for profiles singular at an end or not analytic).  Profiles
    violating the end condition can be assembled with enforcement off for
    curvature arithmetic, but the eigenvalue bound then refuses to run.
    """
    grid = grid or SphereGrid(12, 1)
    a, b = interval
    s, x, lam = _cheb_gauss(n_s, a, b)
    Dx = _bary_diff_matrix(x, lam)
    Ds = Dx * (2.0 / (b - a))

    th = grid.theta[:, None]
    ph = grid.phi[None, :]
    sample = lambda fn: np.stack([np.broadcast_to(fn(th, ph, si), grid.shape) for si in s])
    w = sample(w_fn)
    q = np.exp(2.0 * w)
    if w_s_fn is not None and w_ss_fn is not None:
        w_s = sample(w_s_fn)
        w_ss = sample(w_ss_fn)
        delta = 1e-9 * (b - a)
        end_flux = tuple(
            float(np.max(np.abs(2.0 * w_s_fn(th, ph, se) * np.exp(2.0 * w_fn(th, ph, se)))))
            for se in (a + delta, b - delta))
    else:
        flat = q.reshape(n_s, -1)
        q_s = (Ds @ flat).reshape(w.shape)
        q_ss = (Ds @ (Ds @ flat)).reshape(w.shape)
        w_s = q_s / (2.0 * q)
        w_ss = q_ss / (2.0 * q) - 0.5 * (q_s / q) ** 2
        end_flux = tuple(float(np.max(np.abs(_bary_eval(x, lam, q_s.reshape(n_s, -1), xx))))
                         for xx in (-1.0, 1.0))
    end_ok = max(end_flux) <= BC_TOL
    if enforce_end_condition and not end_ok:
        raise BoundaryConditionError(
            f"d/ds e^(2w) at the ends is {end_flux}; must vanish to {BC_TOL:g}")

    # fiberwise conformal Gaussian curvature and the warped scalar curvature;
    # center w per fiber so the Laplacian of a constant conformal factor is exact
    lap = laplace_beltrami_round_sphere(grid)
    lap_w = np.stack([(lap @ (w[i] - np.mean(w[i])).reshape(-1)).reshape(grid.shape)
                      for i in range(n_s)])
    kappa = np.exp(-2.0 * w) * (kappa_base - lap_w)
    R_g = 2.0 * kappa - 4.0 * w_ss - 6.0 * w_s ** 2

    from .stability import dealias_operator
    lam_per_s = np.empty(n_s)
    for i in range(n_s):
        M = np.diag(np.exp(-2.0 * w[i]).reshape(-1)) @ (-lap) \
            + np.diag(kappa[i].reshape(-1))
        vals = scipy.linalg.eigvals(dealias_operator(M, grid))
        lam_per_s[i] = float(np.min(vals.real))
    d2_e2w = (2.0 * w_ss + 4.0 * w_s ** 2) * q
    return WarpedCylinder(grid=grid, interval=(a, b), s=s, w=w, w_s=w_s, w_ss=w_ss,
                          kappa=kappa, R_g=R_g, lambda_per_s=lam_per_s,
                          lambda_star=float(np.min(lam_per_s)),
                          end_flux=end_flux, end_condition_ok=bool(end_ok),
                          sup_d2_e2w=float(np.max(np.abs(d2_e2w))),
                          _Ds=Ds, _lam_bary=lam, _x=x)


_round_lap_cache = {}


def laplace_beltrami_round_sphere(grid: SphereGrid) -> np.ndarray:
    """Collocation Laplacian of the unit round sphere (cached per grid shape)."""
    key = (grid.n_lat, grid.n_lon, grid.lmax)
    if key not in _round_lap_cache:
        from .catalog import catalog_load
        from .surfaces import Surface, surface_geometry
        chart_free = catalog_load("flat_vacuum")
        geom = surface_geometry(chart_free, Surface.round_sphere(1.0, grid))
        _round_lap_cache[key] = laplace_beltrami_matrix(geom)
    return _round_lap_cache[key]


# ---------------------------------------------------------------------------
# Eigenvalue bound
# ---------------------------------------------------------------------------

def eigen_bound_check(cyl: WarpedCylinder, tol: float = 1e-6) -> dict:
    """First Neumann eigenvalue of -Lap_g + R_g/8 on the cylinder against the
    lower bound lambda_star / 4."""
    if cyl.lambda_star <= 0:
        return {"applicable": False, "lambda_star": cyl.lambda_star,
                "note": "fiberwise eigenvalue bound fails; hypothesis not met"}
    if not cyl.end_condition_ok:
        return {"applicable": False, "lambda_star": cyl.lambda_star,
                "note": "end condition on e^(2w) violated; bound derivation needs it"}
    grid = cyl.grid
    n_s = cyl.s.size
    N = grid.size
    lap2 = laplace_beltrami_round_sphere(grid)
    Ds = cyl._Ds
    Dss = Ds @ Ds
    e2w = np.exp(-2.0 * cyl.w).reshape(n_s, N)
    ws = cyl.w_s.reshape(n_s, N)
    Rg = cyl.R_g.reshape(n_s, N)

    dim = n_s * N
    A = np.zeros((dim, dim))
    B = np.eye(dim)
    idx = lambda i, k: i * N + k
    if grid.size > grid.n_modes:
        from .stability import dealias_operator
        fiber = lambda M: dealias_operator(M, grid)
    else:
        fiber = lambda M: M
    for i in range(n_s):
        for j in range(n_s):
            blk = -(Dss[i, j] * np.eye(N) + 2.0 * Ds[i, j] * np.diag(ws[i]))
            A[i * N:(i + 1) * N, j * N:(j + 1) * N] += blk
        A[i * N:(i + 1) * N, i * N:(i + 1) * N] += \
            fiber(-np.diag(e2w[i]) @ lap2 + np.diag(Rg[i] / 8.0))

    # Neumann ends: replace the extreme collocation layers by derivative rows
    lam_b, x = cyl._lam_bary, cyl._x
    for layer, x_end in ((0, -1.0), (n_s - 1, 1.0)):
        drow = _bary_deriv_row(x, lam_b, x_end) * (2.0 / (cyl.interval[1] - cyl.interval[0]))
        for k in range(N):
            row = idx(layer, k)
            A[row, :] = 0.0
            B[row, row] = 0.0
            for j in range(n_s):
                A[row, idx(j, k)] = drow[j]

    vals = scipy.linalg.eig(A, B, right=False)
    finite = vals[np.isfinite(vals)]
    lam1 = float(np.min(finite.real))
    bound = cyl.lambda_star / 4.0
    return {"applicable": True, "lambda_star": cyl.lambda_star,
            "lambda1": lam1, "bound": bound,
            "bound_met": bool(lam1 >= bound - tol),
            "slack": float(lam1 - bound)}


# ---------------------------------------------------------------------------
# Cap construction profiles
# ---------------------------------------------------------------------------

def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    def bump(u):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(u > 0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
    num = bump(t)
    return num / (num + bump(1.0 - t))


def _smoothstep_d1(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    def bump(u):
        return np.exp(-1.0 / u)
    su, sv = bump(tt), bump(1.0 - tt)
    D = su + sv
    d = su * sv * (1.0 / tt ** 2 + 1.0 / (1.0 - tt) ** 2) / D ** 2
    return np.where(inside, d, 0.0)


def _smoothstep_d2(t, h=1e-5):
    return (_smoothstep_d1(np.asarray(t) + h) - _smoothstep_d1(np.asarray(t) - h)) / (2 * h)


def cap_profile(w_uniformization: float):
    """The capping conformal path: eta(s) w_i + a(s) with eta ramping 0 -> 1 on
    [1, 2], a(s) = log s near 0 and 0 beyond s = 1, a <= 0 throughout.

    Returns (w_fn, w_s_fn, w_ss_fn) for a constant uniformization exponent
    (round fiber metrics), suitable for assemble_cylinder on (0, 3).
    """
    wi = float(w_uniformization)

    def pieces(s):
        s = np.asarray(s, dtype=float)
        eta = _smoothstep(s - 1.0)
        rho = _smoothstep(2.0 * s - 1.0)
        return s, eta, rho

    def w_fn(theta, phi, s):
        s, eta, rho = pieces(s)
        a = (1.0 - rho) * np.log(np.maximum(s, 1e-300))
        return eta * wi + a + 0.0 * theta * phi

    def w_s_fn(theta, phi, s):
        s, eta, rho = pieces(s)
        d_eta = _smoothstep_d1(s - 1.0)
        d_rho = 2.0 * _smoothstep_d1(2.0 * s - 1.0)
        a_s = -d_rho * np.log(np.maximum(s, 1e-300)) + (1.0 - rho) / s
        return d_eta * wi + a_s + 0.0 * theta * phi

    def w_ss_fn(theta, phi, s):
        s, eta, rho = pieces(s)
        dd_eta = _smoothstep_d2(s - 1.0)
        d_rho = 2.0 * _smoothstep_d1(2.0 * s - 1.0)
        dd_rho = 4.0 * _smoothstep_d2(2.0 * s - 1.0)
        a_ss = (-dd_rho * np.log(np.maximum(s, 1e-300))
                - 2.0 * d_rho / s - (1.0 - rho) / s ** 2)
        return dd_eta * wi + a_ss + 0.0 * theta * phi

    return w_fn, w_s_fn, w_ss_fn
