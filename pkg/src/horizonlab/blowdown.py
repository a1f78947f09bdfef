"""Capillary blowdown limit: extraction from a continuation run, the level-set
equation residual at regular points, graphical/cylindrical classification of
blowup nodes from gradient trends, and the companion vector field identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .catalog import InitialDataSet
from .geometry import NotApplicableError
from .jang import ContinuationRun

LABEL_NO_BLOWUP = "no_blowup"
LABEL_GRAPHICAL = "graphical"
LABEL_CYLINDRICAL = "cylindrical"
LABEL_UNRESOLVED = "unresolved"


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

@dataclass
class BlowdownLimit:
    r: np.ndarray
    u: np.ndarray                  # zero on nodes without detected blowup
    u_raw: np.ndarray              # extrapolated values before support masking
    s_used: tuple
    fallback_nodes: int
    lipschitz: float
    omega_plus: np.ndarray         # boolean masks of the detected blowup regions
    omega_minus: np.ndarray
    threshold_factor: float
    threshold_sensitivity: dict    # factor -> detected node count
    convergence_gap: float         # sup |u_{s_last} - u_{s_prev}|

    @property
    def support(self) -> np.ndarray:
        return self.omega_plus | self.omega_minus

    def level_sets(self, C: float):
        """Index sets of the super- and sub-level sets {u > C}, {u < C}."""
        return np.flatnonzero(self.u > C), np.flatnonzero(self.u < C)


def extract(run: ContinuationRun, threshold_factor: float = 0.5) -> BlowdownLimit:
    """Richardson extrapolation (first order in s) of u_s = s f_s over the last
    three converged steps; blowup nodes are those where |f| at the smallest s
    exceeds threshold_factor * max|u| / s_min, signed by f."""
    small = [st for st in run.steps if st.converged and st.s <= 0.1]
    if len(small) < 3:
        raise NotApplicableError("need at least 3 converged steps with s <= 0.1")
    s1, s2, s3 = small[-3:]
    u1, u2, u3 = s1.u, s2.u, s3.u
    monotone = (u3 - u2) * (u2 - u1) >= 0
    extrap = u3 + (u3 - u2) * (s3.s / (s2.s - s3.s))
    u_raw = np.where(monotone, extrap, u3)
    fallback = int(np.sum(~monotone))

    f_last = s3.f
    sensitivity = {}
    for factor in (0.25, threshold_factor, 0.75):
        thr = factor * np.max(np.abs(u_raw)) / s3.s
        sensitivity[factor] = int(np.sum(np.abs(f_last) > thr))
    thr = threshold_factor * np.max(np.abs(u_raw)) / s3.s
    blow = np.abs(f_last) > thr
    omega_plus = blow & (f_last > 0)
    omega_minus = blow & (f_last < 0)
    u = np.where(blow, u_raw, 0.0)

    prof = run.data.radial
    rr = s3.r
    if run.data.chart.periodic:
        du = (np.roll(u_raw, -1) - np.roll(u_raw, 1)) / (2 * (rr[1] - rr[0]))
    else:
        du = np.gradient(u_raw, rr)
    lip = float(np.max(np.abs(du / prof.a(rr))))
    gap = float(np.max(np.abs(u3 - u2)))
    return BlowdownLimit(r=rr, u=u, u_raw=u_raw, s_used=(s1.s, s2.s, s3.s),
                         fallback_nodes=fallback, lipschitz=lip,
                         omega_plus=omega_plus, omega_minus=omega_minus,
                         threshold_factor=threshold_factor,
                         threshold_sensitivity=sensitivity, convergence_gap=gap)


def schedule_spread(data: InitialDataSet, schedules) -> dict:
    """Spread of the extracted blowdown limit across different schedules.

    Uniqueness of the limit is an open matter; this reports sup |u_a - u_b|
    over schedule pairs without asserting anything.
    """
    from .jang import continuation
    limits = [extract(continuation(data, sched)) for sched in schedules]
    spread = 0.0
    for i in range(len(limits)):
        for j in range(i + 1, len(limits)):
            spread = max(spread, float(np.max(np.abs(limits[i].u - limits[j].u))))
    return {"schedules": list(schedules), "spread": spread,
            "max_abs_u": [float(np.max(np.abs(l.u))) for l in limits]}


# ---------------------------------------------------------------------------
# Level-set equation residual
# ---------------------------------------------------------------------------

def default_grad_floor(data: InitialDataSet, u) -> float:
    if data.chart.periodic:
        scale = data.chart.side_length
    else:
        scale = data.chart.r_max - data.chart.r_min
    return 1e-3 * float(np.max(np.abs(u))) / scale


def levelset_residual_field(data: InitialDataSet, limit: BlowdownLimit,
                            grad_floor: Optional[float] = None):
    """Residual of the level-set form  |grad u| (u - theta_levelset)  at every
    node with |grad u| above the floor; below it the equation is singular and
    the node is reported not-applicable (NaN with mask False)."""
    prof = data.radial
    r, u = limit.r, limit.u
    if data.chart.periodic:
        raise NotApplicableError("level-set residual needs round level sets")
    floor = grad_floor if grad_floor is not None else default_grad_floor(data, u)
    du = np.gradient(u, r)
    grad = du / prof.a(r)
    applicable = np.abs(grad) >= floor
    theta_out = prof.expansion(r, "outward")
    theta_in = prof.expansion(r, "inward")
    theta = np.where(du >= 0, theta_out, theta_in)
    res = np.where(applicable, np.abs(grad) * (u - theta), np.nan)
    return res, applicable


def levelset_residual(data: InitialDataSet, limit: BlowdownLimit, node: int) -> float:
    """Single-node form; raises on the singular set."""
    res, ok = levelset_residual_field(data, limit)
    if not ok[node]:
        raise NotApplicableError(f"node {node} lies in the singular set of grad u")
    return float(res[node])


# ---------------------------------------------------------------------------
# Classification of blowup nodes
# ---------------------------------------------------------------------------

@dataclass
class ClassificationMap:
    r: np.ndarray
    labels: np.ndarray             # object array of the LABEL_* strings
    domain_id: np.ndarray          # maximal-domain index per graphical node, else -1
    eta: np.ndarray                # companion field (radial unit component)
    growth_exponent: np.ndarray
    grad_history: np.ndarray       # |grad f| per (step, node) over the fitted window
    unresolved_fraction: float
    levelset_monitor: dict

    def interfaces(self) -> np.ndarray:
        """Indices i where the label changes between nodes i and i+1."""
        lab = self.labels
        return np.flatnonzero(lab[:-1] != lab[1:])


GROWTH_CYLINDRICAL = 0.5
GROWTH_GRAPHICAL = 0.1
TREND_WINDOW = 4


def classify(run: ContinuationRun, limit: Optional[BlowdownLimit] = None,
             reference_nodes=None, rng_seed: int = 2024) -> ClassificationMap:
    """Per-node gradient-trend classification over the last schedule steps.

    Growth exponent p of |grad f_s| ~ (1/s)^p decides: p < 0.1 graphical,
    p >= 0.5 cylindrical, in between unresolved (flagged, never silently
    labeled).  Nodes outside the detected blowup support are no_blowup.
    """
    if limit is None:
        limit = extract(run)
    steps = [st for st in run.steps if st.converged][-TREND_WINDOW:]
    if len(steps) < TREND_WINDOW:
        raise NotApplicableError(f"need {TREND_WINDOW} converged steps")
    grads = np.stack([np.abs(st.monitors["grad_f"]) for st in steps])
    svals = np.array([st.s for st in steps])
    n = grads.shape[1]

    log_inv_s = np.log(1.0 / svals)
    gfloor = 1e-8 * (1.0 + float(np.max(grads)))
    safe = np.maximum(grads, gfloor)
    A = np.vstack([log_inv_s, np.ones_like(log_inv_s)]).T
    slope = np.linalg.lstsq(A, np.log(safe), rcond=None)[0][0]
    tiny = np.all(grads < gfloor, axis=0)
    slope = np.where(tiny, 0.0, slope)

    labels = np.full(n, LABEL_NO_BLOWUP, dtype=object)
    support = limit.support
    graphical = support & (slope < GROWTH_GRAPHICAL)
    cylindrical = support & (slope >= GROWTH_CYLINDRICAL)
    unresolved = support & ~graphical & ~cylindrical
    labels[graphical] = LABEL_GRAPHICAL
    labels[cylindrical] = LABEL_CYLINDRICAL
    labels[unresolved] = LABEL_UNRESOLVED
    if reference_nodes is not None:
        keep = np.zeros(n, dtype=bool)
        keep[np.asarray(reference_nodes, dtype=int)] = True
        labels = np.where(keep, labels, LABEL_NO_BLOWUP)

    # companion field from the smallest-s gradient
    grad_last = run.steps[-1].monitors["grad_f"]
    eta = grad_last / np.sqrt(1.0 + grad_last ** 2)

    # contiguous graphical runs become maximal domains (wraparound on a ring)
    domain_id = np.full(n, -1, dtype=int)
    next_id = 0
    i = 0
    while i < n:
        if labels[i] == LABEL_GRAPHICAL and domain_id[i] < 0:
            j = i
            while j < n and labels[j] == LABEL_GRAPHICAL:
                domain_id[j] = next_id
                j += 1
            next_id += 1
            i = j
        else:
            i += 1
    if run.data.chart.periodic and next_id > 1 \
            and labels[0] == LABEL_GRAPHICAL and labels[-1] == LABEL_GRAPHICAL:
        domain_id[domain_id == domain_id[-1]] = domain_id[0]

    nsup = max(int(np.sum(support)), 1)
    monitor = _levelset_pair_monitor(run, limit, rng_seed)
    return ClassificationMap(
        r=limit.r, labels=labels, domain_id=domain_id, eta=eta,
        growth_exponent=slope, grad_history=grads,
        unresolved_fraction=float(np.sum(unresolved)) / nsup,
        levelset_monitor=monitor)


def _levelset_pair_monitor(run, limit, rng_seed, max_pairs=200):
    """Level-set lemma check: where u(x) clearly exceeds u(x0), the translated
    difference f_s(x) - f_s(x0) must grow without bound down the schedule."""
    u = limit.u_raw
    gap = 3.0 * max(limit.convergence_gap, 1e-14)
    rng = np.random.default_rng(rng_seed)
    n = u.size
    checked = passed = 0
    window = [st for st in run.steps if st.converged][-TREND_WINDOW:]
    for _ in range(max_pairs):
        x, x0 = rng.integers(0, n, 2)
        if u[x] <= u[x0] + gap:
            continue
        diffs = np.array([st.f[x] - st.f[x0] for st in window])
        increasing = bool(np.all(np.diff(diffs) > 0))
        unbounded = bool(diffs[-1] > 1.5 * abs(diffs[0]) + gap)
        checked += 1
        passed += int(increasing and unbounded)
    return {"pairs_checked": checked, "pairs_passed": passed,
            "pass_fraction": passed / checked if checked else 1.0,
            "uniform_gap": gap}


# ---------------------------------------------------------------------------
# Companion vector field
# ---------------------------------------------------------------------------

def companion_residual(data: InitialDataSet, limit: BlowdownLimit, eta,
                       cmap: Optional[ClassificationMap] = None):
    """Pointwise residual of  div(eta) - tr k + k(eta, eta) - u  with one-sided
    differences across classification interfaces.  Returns the residual field
    and the interior mask excluding a 2-node band around each interface."""
    prof = data.radial
    r, u = limit.r, limit.u
    eta = np.asarray(eta, dtype=float)
    n = r.size
    a = prof.a(r)
    A = prof.area_factor(r)
    flux = A * eta

    if data.chart.periodic:
        h = r[1] - r[0]
        div = (np.roll(flux, -1) - np.roll(flux, 1)) / (2 * h * a * A)
        interior = np.ones(n, dtype=bool)
    else:
        div = np.gradient(flux, r) / (a * A)
        interior = np.ones(n, dtype=bool)
        interior[:2] = interior[-2:] = False
        if cmap is not None:
            for i in cmap.interfaces():
                # one-sided re-evaluation next to the interface
                for j in (i, i + 1):
                    if 2 <= j < n - 2:
                        if j <= i:   # left side: backward stencil
                            sl = slice(j - 2, j + 1)
                        else:        # right side: forward stencil
                            sl = slice(j, j + 3)
                        w = _onesided_d1(r[sl], r[j])
                        div[j] = (w @ flux[sl]) / (a[j] * A[j])
                lo, hi = max(i - 1, 0), min(i + 2, n - 1)
                interior[lo:hi + 1] = False

    res = div - prof.tr_k(r) + prof.kappa_r(r) * eta ** 2 - u
    return res, interior


def _onesided_d1(xs, x0):
    from .jang import _onesided_weights
    return _onesided_weights(xs, x0)
