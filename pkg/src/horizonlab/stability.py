"""Stability of constant expansion surfaces: the (non-self-adjoint) linearized
expansion operator, its principal eigenpair, and the arctan barrier profile.

The operator acting on a normal perturbation phi of a CES with expansion Theta is

    L phi = -Lap phi - 2 <xi, grad phi> + V phi,
    V = P - div xi - |xi|^2 - Theta (2 tr k + Theta) / 2,
    P = R_Sigma/2 - |h - k|^2/2 - mu + J(nu),

with drift xi the tangential part of k(nu, .)^sharp.  The drift makes L
non-self-adjoint; for gradient drift xi = grad(eta) an e^eta similarity
transform produces the self-adjoint oracle used in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .catalog import InitialDataSet
from .surfaces import Surface, SurfaceGeometry, surface_geometry

DENSE_LIMIT = 64 * 64  # dense eigensolve guaranteed up to this many nodes


class NotConstantExpansionError(Exception):
    """Surface fed to the operator assembly is not a CES."""


class EigenSolveError(Exception):
    """Eigen-iteration failed or the principal eigenvalue is genuinely complex."""


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

@dataclass
class ExpansionOperator:
    geometry: SurfaceGeometry
    Theta: float
    matrix: np.ndarray
    V: np.ndarray                  # potential field on the grid
    components: dict               # individually exposed pieces of V
    xi_up: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, phi) -> np.ndarray:
        return (self.matrix @ np.asarray(phi, dtype=float).reshape(-1)).reshape(
            self.geometry.grid.shape)

    def solve(self, rhs, rcond: float = 1e-9) -> np.ndarray:
        """Solve L psi = rhs (used for the foliation velocity).

        Exact geometric null modes (sphere translations in symmetric data) make
        the matrix singular; the SVD-filtered solve projects them out while
        leaving physically small eigenvalues (near-marginal sheets) intact.
        """
        psi, *_ = np.linalg.lstsq(self.matrix,
                                  np.asarray(rhs, dtype=float).reshape(-1), rcond=rcond)
        return psi.reshape(self.geometry.grid.shape)


def laplace_beltrami_matrix(geom: SurfaceGeometry) -> np.ndarray:
    """Collocation matrix of the (non-positive) Laplacian of the induced metric."""
    grid = geom.grid
    Dt, Dp, Dtt, Dtp, Dpp = grid.partial_matrices()
    gi = geom.gamma_inv.reshape(grid.size, 2, 2)
    contr = np.einsum("nij,nkij->nk", gi, geom.gamma_christoffel.reshape(grid.size, 2, 2, 2))
    return (gi[:, 0, 0, None] * Dtt + 2.0 * gi[:, 0, 1, None] * Dtp
            + gi[:, 1, 1, None] * Dpp
            - contr[:, 0, None] * Dt - contr[:, 1, None] * Dp)


def drift_matrix(geom: SurfaceGeometry, xi_up) -> np.ndarray:
    grid = geom.grid
    Dt, Dp = grid.gradient_matrices()
    xi = np.asarray(xi_up).reshape(grid.size, 2)
    return xi[:, 0, None] * Dt + xi[:, 1, None] * Dp


def gradient_drift(geom: SurfaceGeometry, eta) -> np.ndarray:
    """xi = grad(eta) on the surface, upper components (manufactured drift)."""
    grid = geom.grid
    et, ep = grid.partials(eta)[:2]
    deta = np.stack([et, ep], axis=-1)
    return np.einsum("...ij,...j->...i", geom.gamma_inv, deta)


def dealias_operator(matrix, grid) -> np.ndarray:
    """Restrict a collocation operator to the representable harmonic space.

    On oversampled grids the multiplication parts of the operator act on
    sub-grid noise directions too, planting spurious eigenvalues that can
    undercut the principal one; the sandwich confines the physics to the band
    space and parks the null directions far up the spectrum.
    """
    if grid.size == grid.n_modes:
        return matrix
    P = grid.projection_matrix()
    shift = 10.0 * (np.linalg.norm(matrix, np.inf) + 1.0)
    return P @ matrix @ P + shift * (np.eye(grid.size) - P)


def operator_from_parts(geom: SurfaceGeometry, Theta: float, V, xi_up) -> ExpansionOperator:
    """Assemble the discrete operator from explicit potential and drift (the
    manufactured-operator entry point; `assemble` fills the physical fields)."""
    grid = geom.grid
    V = np.asarray(V, dtype=float).reshape(grid.shape)
    xi_up = np.asarray(xi_up, dtype=float).reshape(grid.shape + (2,))
    L = (-laplace_beltrami_matrix(geom) - 2.0 * drift_matrix(geom, xi_up)
         + np.diag(V.reshape(-1)))
    return ExpansionOperator(geometry=geom, Theta=Theta,
                             matrix=dealias_operator(L, grid), V=V,
                             components={}, xi_up=xi_up)


CES_TOL = 1e-6


def assemble(data: InitialDataSet, surface: Surface,
             geometry: Optional[SurfaceGeometry] = None) -> ExpansionOperator:
    """Discrete linearized expansion operator of a CES; raises if the surface's
    expansion oscillates by more than the CES tolerance."""
    geom = geometry if geometry is not None else surface_geometry(data, surface)
    Theta_mean = float(np.mean(geom.theta))
    osc = float(np.max(geom.theta) - np.min(geom.theta))
    if osc > CES_TOL * (1.0 + abs(Theta_mean)):
        raise NotConstantExpansionError(
            f"expansion oscillation {osc:.3e} exceeds CES tolerance "
            f"(mean {Theta_mean:.6g}); not a constant expansion surface")

    P = 0.5 * geom.R_sigma - 0.5 * geom.h_minus_k2 - geom.mu + geom.J_nu
    theta_term = 0.5 * Theta_mean * (2.0 * geom.trk_ambient + Theta_mean)
    V = P - geom.div_xi - geom.xi_norm2 - theta_term

    op = operator_from_parts(geom, Theta_mean, V, geom.xi_up)
    op.components = {
        "P": P, "div_xi": geom.div_xi, "xi_norm2": geom.xi_norm2,
        "theta_term": theta_term, "R_sigma": geom.R_sigma,
        "h_minus_k2": geom.h_minus_k2, "mu": geom.mu, "J_nu": geom.J_nu,
    }
    return op


# ---------------------------------------------------------------------------
# Principal eigenpair
# ---------------------------------------------------------------------------

@dataclass
class EigenResult:
    lambda1: float
    beta: np.ndarray               # positive principal eigenfunction, max = 1
    residual: float
    stability_class: str           # strictly_stable | marginally_stable | unstable
    tol_marginal: float
    beta_min: float
    spectrum: Optional[np.ndarray] = None


def marginal_tolerance(op: ExpansionOperator) -> float:
    return 1e-6 * (float(np.max(np.abs(op.V))) + 1.0)


def principal_eig(op: ExpansionOperator, tol_marginal: Optional[float] = None,
                  keep_spectrum: bool = False) -> EigenResult:
    """Principal eigenpair: the eigenvalue of minimal real part with its
    positive eigenfunction (dense solve up to 64^2 nodes, shift-invert beyond)."""
    scale = float(np.linalg.norm(op.matrix, np.inf))
    imag_tol = 1e-8 * max(scale, 1.0)

    if op.size <= DENSE_LIMIT:
        vals, vecs = scipy.linalg.eig(op.matrix)
    else:
        sigma = float(np.min(op.V)) - scale  # safe lower bound for shift-invert
        vals, vecs = scipy.sparse.linalg.eigs(op.matrix, k=6, sigma=sigma)

    order = np.argsort(vals.real)
    idx = order[0]
    lam = vals[idx]
    if abs(lam.imag) > imag_tol:
        raise EigenSolveError(
            f"principal eigenvalue {lam:.6g} is complex beyond tolerance "
            f"{imag_tol:.2e}; violates the real-principal-eigenvalue expectation")
    lam1 = float(lam.real)

    beta = vecs[:, idx].real
    peak = beta[np.argmax(np.abs(beta))]
    beta = beta / peak              # max = 1 and predominantly positive
    residual = float(np.max(np.abs(op.matrix @ beta - lam1 * beta)))

    tol = tol_marginal if tol_marginal is not None else marginal_tolerance(op)
    if lam1 > tol:
        cls = "strictly_stable"
    elif abs(lam1) <= tol:
        cls = "marginally_stable"
    else:
        cls = "unstable"
    return EigenResult(lambda1=lam1, beta=beta.reshape(op.geometry.grid.shape),
                       residual=residual, stability_class=cls, tol_marginal=tol,
                       beta_min=float(np.min(beta)),
                       spectrum=np.sort_complex(vals) if keep_spectrum else None)


def conjugated_operator(op: ExpansionOperator, eta) -> np.ndarray:
    """Self-adjoint similarity transform of an operator with gradient drift
    xi = grad(eta):  e^eta L e^{-eta} = -Lap + (V + |grad eta|^2 + Lap eta).

    Independent oracle for the principal eigenvalue.
    """
    geom = op.geometry
    grid = geom.grid
    eta = np.asarray(eta, dtype=float).reshape(grid.shape)
    lap = laplace_beltrami_matrix(geom)
    lap_eta = (lap @ eta.reshape(-1)).reshape(grid.shape)
    et, ep = grid.partials(eta)[:2]
    deta = np.stack([et, ep], axis=-1)
    grad2 = np.einsum("...ij,...i,...j->...", geom.gamma_inv, deta, deta)
    V_tilde = op.V + grad2 + lap_eta
    return dealias_operator(-lap + np.diag(V_tilde.reshape(-1)), grid)


# ---------------------------------------------------------------------------
# Barrier profile
# ---------------------------------------------------------------------------

def barrier_profile(t):
    """eta(t) = arctan(t+1) - arctan(1) and the barrier combination eta'' + eta."""
    t = np.asarray(t, dtype=float)
    eta = np.arctan(t + 1.0) - np.arctan(1.0)
    d2 = -2.0 * (t + 1.0) / (1.0 + (t + 1.0) ** 2) ** 2
    return eta, d2 + eta


def _barrier_eta_derivs(t):
    t = np.asarray(t, dtype=float)
    q = 1.0 + (t + 1.0) ** 2
    eta = np.arctan(t + 1.0) - np.arctan(1.0)
    return eta, 1.0 / q, -2.0 * (t + 1.0) / q ** 2


def barrier_expansion_excess(data: InitialDataSet, radius: float, eps: float,
                             alpha: float, t):
    """Expansion of the deformed cylinder over an unstable round CES minus its
    expansion Theta, at heights t (must be positive for t <= 1/(2 alpha)).

    The deformed cylinder in M x R is swept by the radial offsets
    r(t) = radius + eps * eta(alpha t); its expansion is evaluated through the
    surface-of-revolution formula with the vertically trivial k extension.
    """
    from .surfaces import revolution_expansion
    prof = data.radial
    Theta = float(prof.expansion(radius))

    def r_of_t(tt):
        return radius + eps * _barrier_eta_derivs(alpha * tt)[0]

    def dr(tt):
        return eps * alpha * _barrier_eta_derivs(alpha * tt)[1]

    def d2r(tt):
        return eps * alpha ** 2 * _barrier_eta_derivs(alpha * tt)[2]

    theta_d = revolution_expansion(data, r_of_t, dr, d2r, t)
    return theta_d - Theta
