"""Pseudospectral grid on the 2-sphere: Gauss-Legendre latitudes, equispaced
longitudes, spherical-harmonic transforms, and exact spectral differentiation.

Scalar fields live as value arrays of shape (n_lat, n_lon).  Partial derivatives
in (theta, phi) are synthesized from analytic derivatives of the basis functions,
so they are exact for band-limited fields; second theta-derivatives come from the
associated Legendre ODE rather than repeated differentiation.  n_lon = 1 selects
the axisymmetric (m = 0) mode with the identical code path.
"""

from __future__ import annotations

import numpy as np


def _normalized_plm_tables(x, lmax, mmax):
    """Orthonormal associated Legendre P_lm(x) with first and second
    theta-derivatives at the nodes x = cos(theta).

    Returns three lists indexed by m; entry m has shape (len(x), lmax+1-m)
    with columns l = m..lmax.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(1.0 - x * x)          # sin(theta) > 0 at interior nodes
    cot = x / s
    P, dP, d2P = [], [], []
    pmm = np.full_like(x, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(mmax + 1):
        cols = lmax + 1 - m
        tbl = np.zeros((x.size, cols))
        tbl[:, 0] = pmm
        if cols > 1:
            tbl[:, 1] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            tbl[:, l - m] = a * (x * tbl[:, l - m - 1] - b * tbl[:, l - m - 2])
        # d/dtheta via  sin(theta) P' = l x P_lm - c_lm P_{l-1,m}
        dtbl = np.zeros_like(tbl)
        for l in range(m, lmax + 1):
            term = l * x * tbl[:, l - m]
            if l > m:
                c = np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0))
                term = term - c * tbl[:, l - m - 1]
            dtbl[:, l - m] = term / s
        # d2/dtheta2 from the associated Legendre equation
        ll = np.arange(m, lmax + 1)
        d2tbl = (-cot[:, None] * dtbl
                 - (ll * (ll + 1.0) - (m * m) / (s * s)[:, None]) * tbl)
        P.append(tbl)
        dP.append(dtbl)
        d2P.append(d2tbl)
        if m < mmax:
            pmm = -np.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * s * pmm
    return P, dP, d2P


class SphereGrid:
    """Gauss-Legendre x Fourier collocation grid with spectral transforms."""

    def __init__(self, n_lat: int, n_lon: int = 1, lmax: int | None = None):
        if n_lat < 2:
            raise ValueError("n_lat must be at least 2")
        if n_lon < 1:
            raise ValueError("n_lon must be at least 1")
        self.n_lat = int(n_lat)
        self.n_lon = int(n_lon)
        self.lmax = int(lmax) if lmax is not None else self.n_lat - 1
        if self.lmax > self.n_lat - 1:
            raise ValueError("lmax must not exceed n_lat - 1 for exact quadrature")
        # mmax limited by the longitudinal Nyquist mode
        self.mmax = min(self.lmax, (self.n_lon - 1) // 2)

        xg, wg = np.polynomial.legendre.leggauss(self.n_lat)
        order = np.argsort(-xg)                  # theta ascending: x = cos(theta) descending
        self.x = xg[order]
        self.w = wg[order]
        self.theta = np.arccos(self.x)
        self.sin_theta = np.sqrt(1.0 - self.x ** 2)
        self.phi = 2.0 * np.pi * np.arange(self.n_lon) / self.n_lon
        self.shape = (self.n_lat, self.n_lon)
        self.size = self.n_lat * self.n_lon

        self._P, self._dP, self._d2P = _normalized_plm_tables(self.x, self.lmax, self.mmax)
        # analysis weights 2*pi*w folded into the Legendre transform
        self._A = [2.0 * np.pi * (tbl * self.w[:, None]).T for tbl in self._P]
        self._mats = {}

    # -- quadrature ---------------------------------------------------------

    @property
    def solid_angle_weights(self) -> np.ndarray:
        """Weights for integrals against the solid-angle measure dOmega."""
        return np.outer(self.w, np.full(self.n_lon, 2.0 * np.pi / self.n_lon))

    @property
    def coordinate_weights(self) -> np.ndarray:
        """Weights for integrals against d(theta) d(phi); exact for smooth
        integrands carrying the usual sin(theta) area factor."""
        return self.solid_angle_weights / self.sin_theta[:, None]

    def integrate(self, f) -> float:
        """Solid-angle integral of a field of shape (n_lat, n_lon)."""
        return float(np.sum(f * self.solid_angle_weights))

    # -- transforms ---------------------------------------------------------

    def analyze(self, f):
        """Spherical-harmonic coefficients [m] -> complex array over l = m..lmax."""
        f = np.asarray(f, dtype=float).reshape(self.shape)
        F = np.fft.rfft(f, axis=1) / self.n_lon
        return [self._A[m] @ F[:, m] for m in range(self.mmax + 1)]

    def synthesize(self, coeffs, kind: str = "value") -> np.ndarray:
        """Evaluate a coefficient set on the grid; `kind` selects the basis
        weighting: value, dt, dtt (theta-derivatives), dp, dtp, dpp (phi)."""
        tables = {"value": self._P, "dt": self._dP, "dtt": self._d2P}
        G = np.zeros((self.n_lat, self.n_lon // 2 + 1), dtype=complex)
        for m in range(self.mmax + 1):
            if kind in tables:
                col = tables[kind][m] @ coeffs[m]
            elif kind == "dp":
                col = 1j * m * (self._P[m] @ coeffs[m])
            elif kind == "dtp":
                col = 1j * m * (self._dP[m] @ coeffs[m])
            elif kind == "dpp":
                col = -(m * m) * (self._P[m] @ coeffs[m])
            else:
                raise ValueError(f"unknown synthesis kind {kind!r}")
            G[:, m] = col
        return np.fft.irfft(G * self.n_lon, n=self.n_lon, axis=1)

    def project(self, f) -> np.ndarray:
        """Band-limit a field (analyze + synthesize)."""
        return self.synthesize(self.analyze(f))

    def partials(self, f):
        """All partial derivatives up to second order of a smooth scalar field.

        Returns (f_t, f_p, f_tt, f_tp, f_pp)."""
        c = self.analyze(f)
        return (self.synthesize(c, "dt"), self.synthesize(c, "dp"),
                self.synthesize(c, "dtt"), self.synthesize(c, "dtp"),
                self.synthesize(c, "dpp"))

    def gradient_matrices(self):
        """Dense N x N collocation matrices (D_t, D_p) of the first partials."""
        return self._matrices()[:2]

    def partial_matrices(self):
        """Dense N x N matrices (D_t, D_p, D_tt, D_tp, D_pp)."""
        return self._matrices()[:5]

    def projection_matrix(self):
        """Band-limit projector (analysis followed by synthesis).  The identity
        on square grids; on oversampled grids it kills the non-representable
        directions, whose spurious operator modes must be shifted away."""
        return self._matrices()[5]

    @property
    def n_modes(self) -> int:
        """Dimension of the representable harmonic space."""
        zonal = self.lmax + 1
        other = sum(2 * (self.lmax + 1 - m) for m in range(1, self.mmax + 1))
        return zonal + other

    def _matrices(self):
        if "D" not in self._mats:
            N = self.size
            eye = np.eye(N).reshape(N, self.n_lat, self.n_lon)
            kinds = ("dt", "dp", "dtt", "dtp", "dpp", "value")
            batches = {k: np.empty((N, N)) for k in kinds}
            for i in range(N):
                c = self.analyze(eye[i])
                for k in kinds:
                    batches[k][:, i] = self.synthesize(c, k).reshape(N)
            self._mats["D"] = tuple(batches[k] for k in kinds)
        return self._mats["D"]

    # -- embeddings and fixtures --------------------------------------------

    def unit_directions(self):
        """Cartesian unit vectors n(theta, phi), shape (n_lat, n_lon, 3)."""
        st, ct = self.sin_theta[:, None], self.x[:, None]
        cp, sp = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        return np.stack([st * cp, st * sp, ct * np.ones_like(cp)], axis=-1)

    def unit_direction_partials(self):
        """Analytic first and second partials of the unit direction field.

        Returns (n, n_t, n_p, n_tt, n_tp, n_pp), each (n_lat, n_lon, 3)."""
        st, ct = self.sin_theta[:, None], self.x[:, None]
        cp, sp = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        one = np.ones_like(st * cp)
        zero = np.zeros_like(one)
        n = np.stack([st * cp, st * sp, ct * one], axis=-1)
        n_t = np.stack([ct * cp, ct * sp, -st * one], axis=-1)
        n_p = np.stack([-st * sp, st * cp, zero], axis=-1)
        n_tt = -n
        n_tp = np.stack([-ct * sp, ct * cp, zero], axis=-1)
        n_pp = np.stack([-st * cp, -st * sp, zero], axis=-1)
        return n, n_t, n_p, n_tt, n_tp, n_pp

    def ylm(self, l: int, m: int = 0) -> np.ndarray:
        """Real orthonormal spherical harmonic sampled on the grid
        (m >= 0 selects the cos(m phi) branch)."""
        if not (0 <= m <= l <= self.lmax):
            raise ValueError("need 0 <= m <= l <= lmax")
        if m > self.mmax and m > 0:
            raise ValueError("m exceeds the longitudinal band limit")
        col = self._P[m][:, l - m] if m <= self.mmax else None
        base = col[:, None] * np.cos(m * self.phi)[None, :]
        return base * (np.sqrt(2.0) if m > 0 else 1.0)
