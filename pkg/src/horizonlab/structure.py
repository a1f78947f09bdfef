"""Structure report of a blowup region: partition of the detected support into
maximal-domain and foliation-band segments, interface consistency, thickness of
radial annuli, and the divergence-balance / isoperimetric diagnostics.

The report assumes (and records, without verifying) that compact sets carry
only finitely many marginally stable constant expansion surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from .blowdown import (LABEL_CYLINDRICAL, LABEL_GRAPHICAL, LABEL_UNRESOLVED,
                       BlowdownLimit, ClassificationMap)
from .catalog import InitialDataSet

UNRESOLVED_CAP = 0.20


class OverlappingLabelsError(Exception):
    """A node carries two segment labels (internal bug by construction)."""


@dataclass
class Segment:
    kind: str                      # maximal_domain | foliation_band | unresolved
    first: int                     # node range, inclusive
    last: int
    r_lo: float
    r_hi: float
    Theta: Optional[float] = None  # maximal domains: the constant value of u
    u_oscillation: float = 0.0
    tau_range: Optional[tuple] = None
    monotone: bool = True
    thickness: Optional[float] = None
    min_abs_grad_f: Optional[float] = None
    interior_critical_point: bool = False

    @property
    def n_nodes(self) -> int:
        return self.last - self.first + 1


@dataclass
class Interface:
    node: int                      # left node of the junction
    r: float
    u_value: float
    theta_value: float
    mismatch: float
    grid_error_constant: float     # mismatch / local spacing


@dataclass
class StructureReport:
    segments: list
    interfaces: list
    support_nodes: int
    tiles_support: bool
    unresolved_fraction: float
    confidence: str                # ok | degraded
    balance: Optional[dict] = None
    isoperimetric: Optional[dict] = None
    finiteness_assumption: str = (
        "assumes finitely many marginally stable constant expansion surfaces "
        "in compact sets (not verified)")

    def maximal_domains(self):
        return [s for s in self.segments if s.kind == "maximal_domain"]

    def bands(self):
        return [s for s in self.segments if s.kind == "foliation_band"]


_SEGMENT_KIND = {LABEL_GRAPHICAL: "maximal_domain",
                 LABEL_CYLINDRICAL: "foliation_band",
                 LABEL_UNRESOLVED: "unresolved"}


def partition(limit: BlowdownLimit, cmap: ClassificationMap,
              data: InitialDataSet, thin_threshold: float = 0.5) -> StructureReport:
    """Tile the detected blowup support into contiguous labeled segments and
    check the interface consistency theta(interface) = u(interface)."""
    r, u = limit.r, limit.u
    labels = cmap.labels
    support = limit.support
    idx = np.flatnonzero(support)
    if idx.size == 0:
        return StructureReport(segments=[], interfaces=[], support_nodes=0,
                               tiles_support=True, unresolved_fraction=0.0,
                               confidence="ok")

    seen = np.zeros(r.size, dtype=int)
    segments = []
    runs = []
    start = idx[0]
    for prev, cur in zip(idx[:-1], idx[1:]):
        if cur != prev + 1 or labels[cur] != labels[prev]:
            runs.append((start, prev))
            start = cur
    runs.append((start, idx[-1]))

    prof = data.radial
    grad_last = cmap.grad_history[-1]
    for (i0, i1) in runs:
        sl = slice(i0, i1 + 1)
        seen[sl] += 1
        kind = _SEGMENT_KIND.get(labels[i0], "unresolved")
        seg = Segment(kind=kind, first=int(i0), last=int(i1),
                      r_lo=float(r[i0]), r_hi=float(r[i1]))
        useg = u[sl]
        seg.u_oscillation = float(np.max(useg) - np.min(useg))
        if kind == "maximal_domain":
            seg.Theta = float(np.mean(useg))
            if not data.chart.periodic:
                seg.thickness = thickness((seg.r_lo, seg.r_hi), data)
            seg.min_abs_grad_f = float(np.min(np.abs(grad_last[sl])))
            interior = grad_last[sl][1:-1]
            seg.interior_critical_point = bool(
                interior.size >= 2 and np.any(np.sign(interior[:-1]) * np.sign(interior[1:]) < 0))
        elif kind == "foliation_band":
            seg.tau_range = (float(np.min(useg)), float(np.max(useg)))
            du = np.diff(useg)
            seg.monotone = bool(np.all(du >= 0) or np.all(du <= 0))
        segments.append(seg)

    if np.any(seen > 1):
        raise OverlappingLabelsError("a support node landed in two segments")
    tiles = bool(np.sum([s.n_nodes for s in segments]) == idx.size)

    interfaces = []
    if not data.chart.periodic:
        for a, b in zip(segments[:-1], segments[1:]):
            if a.last + 1 != b.first:
                continue
            i = a.last
            r_int = 0.5 * (r[i] + r[i + 1])
            u_int = 0.5 * (u[i] + u[i + 1])
            du = u[i + 1] - u[i]
            orient = "outward" if du >= 0 else "inward"
            th = float(prof.expansion(r_int, orient))
            h_loc = r[i + 1] - r[i]
            interfaces.append(Interface(node=int(i), r=float(r_int),
                                        u_value=float(u_int), theta_value=th,
                                        mismatch=float(abs(th - u_int)),
                                        grid_error_constant=float(abs(th - u_int) / h_loc)))

    nsup = int(idx.size)
    unresolved = sum(s.n_nodes for s in segments if s.kind == "unresolved") / nsup
    return StructureReport(segments=segments, interfaces=interfaces,
                           support_nodes=nsup, tiles_support=tiles,
                           unresolved_fraction=float(unresolved),
                           confidence="ok" if unresolved <= UNRESOLVED_CAP else "degraded")


def thickness(r_range, data: InitialDataSet) -> float:
    """Geodesic width of the radial annulus (r_lo, r_hi): the inscribed-ball
    thickness of a spherically symmetric shell."""
    if data.chart.kind != "radial" or data.radial is None:
        raise NotImplementedError("thickness is implemented for radial annuli only")
    r_lo, r_hi = r_range
    if r_hi <= r_lo:
        return 0.0
    return data.radial.geodesic_width(r_lo, r_hi)


def balance_check(limit: BlowdownLimit, eta, data: InitialDataSet,
                  node_range: Optional[tuple] = None) -> dict:
    """Divergence-theorem balance of the companion equation over the detected
    region: boundary flux of eta against the volume integral of
    u + tr k - k(eta, eta).  For the positive-sign region the boundary pairing
    <eta, nu> should approach -1 (cylindrical orientation), +1 for the negative."""
    r, u = limit.r, limit.u
    prof = data.radial
    eta = np.asarray(eta, dtype=float)

    if data.chart.periodic:
        L = data.chart.side_length
        integrand = u + prof.tr_k(r) - prof.kappa_r(r) * eta ** 2
        vol_int = float(np.mean(integrand)) * L ** 3
        return {"flux": 0.0, "volume_integral": vol_int,
                "residual": -vol_int, "boundary_area": 0.0,
                "boundary_pairing": None}

    if node_range is None:
        idx = np.flatnonzero(limit.support)
        if idx.size == 0:
            return {"flux": 0.0, "volume_integral": 0.0, "residual": 0.0,
                    "boundary_area": 0.0, "boundary_pairing": None}
        i0, i1 = int(idx[0]), int(idx[-1])
    else:
        i0, i1 = node_range
    sl = slice(i0, i1 + 1)
    rr = r[sl]
    area = lambda x: 4.0 * np.pi * prof.R(x) ** 2
    flux = area(rr[-1]) * eta[i1] - area(rr[0]) * eta[i0]
    integrand = (u[sl] + prof.tr_k(rr) - prof.kappa_r(rr) * eta[sl] ** 2) \
        * area(rr) * prof.a(rr)
    vol_int = float(simpson(integrand, x=rr))
    boundary_area = float(area(rr[0]) + area(rr[-1]))
    # cylindrical-convergence orientation at the outer boundary:
    # +1 out of Omega_- (f drops to -inf inside), -1 out of Omega_+
    expected = 1.0 if np.any(limit.omega_minus[sl]) else -1.0
    return {"flux": float(flux), "volume_integral": vol_int,
            "residual": float(flux - vol_int),
            "boundary_area": boundary_area,
            "boundary_pairing": float(eta[i1]),
            "expected_pairing": expected}


def region_measures(limit: BlowdownLimit, data: InitialDataSet) -> dict:
    """Volume and boundary area of the detected support annulus, and sup |k|_g."""
    prof = data.radial
    idx = np.flatnonzero(limit.support)
    if idx.size == 0:
        return {"volume": 0.0, "boundary_area": 0.0, "k_sup": 0.0}
    rr = limit.r[idx[0]:idx[-1] + 1]
    vol = float(simpson(4.0 * np.pi * prof.R(rr) ** 2 * prof.a(rr), x=rr))
    bdry = float(4.0 * np.pi * (prof.R(rr[0]) ** 2 + prof.R(rr[-1]) ** 2))
    k_norm = np.sqrt(prof.kappa_r(rr) ** 2 + 2.0 * prof.kappa_t(rr) ** 2)
    return {"volume": vol, "boundary_area": bdry, "k_sup": float(np.max(k_norm))}


def isoperimetric_check(volume: float, boundary_area: float, k_sup: float,
                        I: float) -> dict:
    """Diagnostic record of |Omega| >= I^2 |k|^-3 and |bdry| >= I^2 |k|^-2 with
    a user-supplied isoperimetric constant (never computed here)."""
    if I <= 0:
        raise ValueError("isoperimetric constant must be positive")
    if k_sup <= 0:
        return {"applicable": False, "note": "k vanishes; bounds are vacuous"}
    vol_bound = I ** 2 * k_sup ** -3
    area_bound = I ** 2 * k_sup ** -2
    return {"applicable": True,
            "volume": volume, "volume_bound": vol_bound,
            "volume_ok": bool(volume >= vol_bound),
            "boundary_area": boundary_area, "area_bound": area_bound,
            "area_ok": bool(boundary_area >= area_bound)}
