"""Constant-expansion-surface foliations: predictor-corrector tracing of
theta(Sigma_tau) = tau, the velocity field solving L psi = 1, the local level-set
solution v with its gradient/eigenvalue Harnack link, and the comparison of the
capillary blowdown limit against v.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .blowdown import BlowdownLimit
from .catalog import InitialDataSet
from .geometry import NotApplicableError
from .stability import (ExpansionOperator, NotConstantExpansionError, assemble,
                        marginal_tolerance, principal_eig)
from .surfaces import ChartBoundsError, Surface, surface_geometry

DTAU_MIN = 1e-5
DTAU_MAX = 0.1
CORRECTOR_MAX = 12
MARGINAL_ENDPOINT_FRAC = 0.02   # |lambda1| shrunk this far below branch scale
                                # counts as the marginal endpoint when stepping dies


class SeedNotCESError(Exception):
    pass


class TraceFailure(Exception):
    pass


def _exits_chart(data, rho) -> bool:
    if data.chart.kind != "radial":
        return False
    pad = 1e-6 * (data.chart.r_max - data.chart.r_min)
    return bool(np.min(rho) < data.chart.r_min + pad
                or np.max(rho) > data.chart.r_max - pad)


@dataclass
class Sheet:
    tau: float
    surface: Surface
    r_mean: float
    lambda1: float
    psi: np.ndarray
    psi_min: float
    psi_max: float
    theta_osc: float
    sup_h2: float
    V: np.ndarray


@dataclass
class FoliationBranch:
    data: InitialDataSet
    direction: int
    mode: str                      # 'stable' | 'invertible'
    sheets: list
    termination: str               # marginal_endpoint | domain_boundary |
                                   # expansion_cap | step_failure | max_steps
    tol_marginal: float

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.sheets])

    @property
    def lambda1s(self) -> np.ndarray:
        return np.array([s.lambda1 for s in self.sheets])

    def sheet_radii(self) -> np.ndarray:
        return np.array([s.r_mean for s in self.sheets])


def _sheet_from_surface(data, surface, op: ExpansionOperator, eig) -> Sheet:
    geom = op.geometry
    psi = op.solve(np.ones(geom.grid.shape))
    radii = np.linalg.norm(geom.X, axis=-1)
    h2 = np.einsum("...ik,...jl,...ij,...kl->...",
                   geom.gamma_inv, geom.gamma_inv, geom.h, geom.h)
    return Sheet(tau=op.Theta, surface=surface, r_mean=float(np.mean(radii)),
                 lambda1=eig.lambda1, psi=psi, psi_min=float(np.min(psi)),
                 psi_max=float(np.max(psi)),
                 theta_osc=float(np.max(geom.theta) - np.min(geom.theta)),
                 sup_h2=float(np.max(h2)), V=op.V)


def trace(data: InitialDataSet, seed: Surface, direction: int = 1,
          cap_T: float = 3.0, max_steps: int = 400, mode: str = "invertible",
          dtau0: Optional[float] = None, fixed_dtau: Optional[float] = None) -> FoliationBranch:
    """Trace the CES branch through `seed` in the direction of increasing
    (direction=+1) or decreasing (-1) expansion.

    Predictor moves each sheet by dtau * psi along its normal (L psi = 1);
    the corrector Newton-iterates theta(sheet) = tau_target with the operator
    as Jacobian.  Stops at the marginal band, chart boundary, |tau| cap, or
    when the step control dies.
    """
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    if mode not in ("stable", "invertible"):
        raise ValueError("mode must be 'stable' or 'invertible'")

    try:
        op = assemble(data, seed)
    except NotConstantExpansionError as exc:
        raise SeedNotCESError(str(exc)) from exc
    tol_marginal = marginal_tolerance(op)
    eig = principal_eig(op, tol_marginal)
    if abs(eig.lambda1) <= tol_marginal:
        raise SeedNotCESError(
            f"seed is marginally stable (lambda1 = {eig.lambda1:.3e}); cannot step")
    if mode == "stable" and eig.lambda1 < tol_marginal:
        raise SeedNotCESError("stable mode requires a strictly stable seed")

    sheets = [_sheet_from_surface(data, seed, op, eig)]
    metric = data.metric
    rho = seed.rho_field().copy()
    grid = seed.grid
    tau = op.Theta
    dtau = fixed_dtau if fixed_dtau is not None else (
        dtau0 if dtau0 is not None else 1e-2 * (1.0 + abs(tau)))
    termination = "max_steps"

    geom = op.geometry
    for _ in range(max_steps):
        if abs(tau) > cap_T:
            termination = "expansion_cap"
            break
        tau_target = tau + direction * dtau
        if abs(tau_target) > cap_T:
            tau_target = np.sign(tau_target) * cap_T

        # conversion field: coordinate-radial step per unit normal displacement
        xhat = geom.X / np.linalg.norm(geom.X, axis=-1, keepdims=True)
        g_at = metric.g(geom.X)
        conv = np.einsum("...ab,...a,...b->...", g_at, xhat, geom.nu)

        w_pred = direction * dtau * sheets[-1].psi
        rho_try = rho + w_pred / conv
        converged = False
        try:
            surf_try = Surface.radial_graph(rho_try, grid)
            geom_try = surface_geometry(data, surf_try)
            for _ in range(CORRECTOR_MAX):
                defect = geom_try.theta - tau_target
                if np.max(np.abs(defect)) <= 1e-9 * (1.0 + abs(tau_target)):
                    converged = True
                    break
                dw = op.solve(-defect)          # chord Newton with the last operator
                rho_try = rho_try + dw / conv
                surf_try = Surface.radial_graph(rho_try, grid)
                geom_try = surface_geometry(data, surf_try)
        except (ChartBoundsError, ValueError, np.linalg.LinAlgError):
            converged = False  # diverging corrector iterate; retry smaller

        if not converged:
            if fixed_dtau is not None:
                termination = "step_failure"
                break
            if dtau <= DTAU_MIN * (1.0 + abs(tau)):
                lam_scale = np.max(np.abs([s.lambda1 for s in sheets]))
                if _exits_chart(data, rho + direction * dtau * sheets[-1].psi / conv):
                    termination = "domain_boundary"
                elif abs(sheets[-1].lambda1) <= MARGINAL_ENDPOINT_FRAC * lam_scale:
                    termination = "marginal_endpoint"
                else:
                    termination = "step_failure"
                break
            dtau = max(dtau * 0.5, DTAU_MIN * (1.0 + abs(tau)))
            continue

        try:
            op = assemble(data, surf_try, geometry=geom_try)
        except NotConstantExpansionError:
            termination = "step_failure"
            break
        eig = principal_eig(op, tol_marginal)
        sheets.append(_sheet_from_surface(data, surf_try, op, eig))
        rho, geom, tau = rho_try, geom_try, op.Theta

        if abs(eig.lambda1) <= tol_marginal:
            termination = "marginal_endpoint"
            break
        if mode == "stable" and eig.lambda1 < tol_marginal:
            termination = "marginal_endpoint"
            break
        if abs(tau) >= cap_T:
            termination = "expansion_cap"
            break
        if fixed_dtau is None and dtau < DTAU_MAX * (1.0 + abs(tau)):
            dtau = min(dtau * 1.2, DTAU_MAX * (1.0 + abs(tau)))

    return FoliationBranch(data=data, direction=direction, mode=mode,
                           sheets=sheets, termination=termination,
                           tol_marginal=tol_marginal)


# ---------------------------------------------------------------------------
# Velocity consistency
# ---------------------------------------------------------------------------

def velocity_consistency(branch: FoliationBranch) -> dict:
    """Displacement-over-dtau against the velocity field, and L(1) against the
    radial derivative of the expansion (spherically symmetric oracle)."""
    sheets = branch.sheets
    if len(sheets) < 3:
        return {"applicable": False, "note": "branch has fewer than 3 sheets"}
    prof = branch.data.radial
    devs = []
    for s0, s1 in zip(sheets[:-1], sheets[1:]):
        dtau = s1.tau - s0.tau
        if abs(dtau) < 1e-14:
            continue
        dsigma = prof.geodesic_width(s0.r_mean, s1.r_mean, n=257)
        dsigma *= np.sign(s1.r_mean - s0.r_mean)
        psi_mid = 0.5 * (np.mean(s0.psi) + np.mean(s1.psi))
        devs.append(abs(dsigma / dtau - psi_mid))
    l1_dev = []
    for s in sheets:
        dtheta_dsigma = prof.d_expansion_dr(s.r_mean) / prof.a(s.r_mean)
        l1_dev.append(abs(float(np.mean(s.V)) - float(dtheta_dsigma)))
    return {"applicable": True,
            "max_velocity_deviation": float(np.max(devs)) if devs else 0.0,
            "max_L1_vs_dtheta": float(np.max(l1_dev))}


# ---------------------------------------------------------------------------
# Local smooth solution
# ---------------------------------------------------------------------------

@dataclass
class LocalSolution:
    taus: np.ndarray
    radii: np.ndarray
    grad_v_min: np.ndarray         # per sheet, from |grad v| = 1/psi
    grad_v_max: np.ndarray
    lambda1s: np.ndarray
    harnack_C: np.ndarray
    correlation: float

    def v_of_r(self, r):
        """v at coordinate radius r by monotone interpolation along the branch."""
        order = np.argsort(self.radii)
        return np.interp(r, self.radii[order], self.taus[order])

    @property
    def r_range(self):
        return float(np.min(self.radii)), float(np.max(self.radii))


def local_solution(branch: FoliationBranch) -> LocalSolution:
    """v(Psi(tau, y)) = tau on a strictly stable branch, with the per-sheet
    gradient bounds and the empirical Harnack constant C(tau)."""
    lam = branch.lambda1s
    if np.any(lam <= branch.tol_marginal):
        raise NotApplicableError("local solution requires a strictly stable branch")
    sheets = branch.sheets
    gmin = np.array([1.0 / s.psi_max for s in sheets])
    gmax = np.array([1.0 / max(s.psi_min, 1e-300) for s in sheets])
    C = np.maximum(gmax / lam, lam / gmin)
    if len(sheets) >= 3 and np.std(lam) > 0 and np.std(gmin) > 0:
        corr = float(np.corrcoef(lam, gmin)[0, 1])
    else:
        corr = 1.0
    return LocalSolution(taus=branch.taus, radii=branch.sheet_radii(),
                         grad_v_min=gmin, grad_v_max=gmax, lambda1s=lam,
                         harnack_C=C, correlation=corr)


# ---------------------------------------------------------------------------
# Comparison of u against v
# ---------------------------------------------------------------------------

def compare(limit: BlowdownLimit, sol: LocalSolution, data: InitialDataSet,
            seed_theta_tol: float = 1e-6) -> dict:
    """u <= v + error budget on the foliated annulus grown from a strictly
    stable MOTS; lists any violating nodes."""
    tau0 = sol.taus[0]
    if abs(tau0) > seed_theta_tol:
        raise NotApplicableError(
            f"comparison requires a MOTS seed (theta = {tau0:.3e})")
    lo, hi = sol.r_range
    r = limit.r
    mask = (r >= lo - 1e-12) & (r <= hi + 1e-12)
    if not np.any(mask):
        return {"applicable": False, "note": "annulus contains no chart nodes"}
    spacing = float(np.max(np.diff(r))) if r.size > 1 else 0.0
    budget = limit.convergence_gap + limit.lipschitz * spacing
    v_vals = sol.v_of_r(r[mask])
    u_vals = limit.u[mask]
    excess = u_vals - v_vals - budget
    violations = np.flatnonzero(excess > 0)
    return {"applicable": True,
            "nodes_checked": int(np.sum(mask)),
            "budget": float(budget),
            "max_excess": float(np.max(excess)),
            "violations": [(int(i), float(excess[i])) for i in violations],
            "holds": bool(violations.size == 0)}
