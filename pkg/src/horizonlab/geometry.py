"""Ambient geometry: charts, metric and extrinsic-curvature fields, curvature tensors,
and the energy/momentum constraint quantities of an initial data slice.

All tensor components are Cartesian.  Points are arrays of shape (..., 3); tensor
outputs append index axes, e.g. a metric evaluation has shape (..., 3, 3) and its
first derivatives (..., 3, 3, 3) with the derivative index first.  Everything is
vectorized over the leading axes.

Units are geometric (G = c = 1), dimensionless throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

EIG_FLOOR = 1e-12  # smallest admissible metric eigenvalue


class DegenerateMetricError(Exception):
    """Metric not positive definite at the requested point."""


class NotApplicableError(Exception):
    """Operation does not apply to the given configuration (reported, not failed)."""


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chart:
    """Computational restriction of the ambient manifold.

    kind: 'radial' | 'periodic_box' | 'product_cylinder'
    """

    kind: str
    r_min: float = 0.0
    r_max: float = 0.0
    n_points: int = 0
    spacing: str = "uniform"
    side_length: float = 0.0
    interval: tuple = (0.0, 0.0)
    n_s: int = 0

    def __post_init__(self):
        if self.kind == "radial":
            if self.r_min <= 0:
                raise ValueError("radial chart requires r_min > 0")
            if self.n_points < 8:
                raise ValueError("radial chart requires n_points >= 8")
            if self.r_max <= self.r_min:
                raise ValueError("radial chart requires r_max > r_min")
            if self.spacing not in ("uniform", "logarithmic"):
                raise ValueError(f"unknown spacing {self.spacing!r}")
        elif self.kind == "periodic_box":
            if self.side_length <= 0:
                raise ValueError("periodic box requires side_length > 0")
            if self.n_points < 8:
                raise ValueError("periodic box requires n_points >= 8")
        elif self.kind == "product_cylinder":
            if self.n_s < 8:
                raise ValueError("product cylinder requires n_s >= 8")
            if not self.interval[1] > self.interval[0]:
                raise ValueError("product cylinder requires a nonempty interval")
        else:
            raise ValueError(f"unknown chart kind {self.kind!r}")

    def nodes(self) -> np.ndarray:
        """1D coordinate nodes (radius for radial charts, strictly increasing)."""
        if self.kind == "radial":
            if self.spacing == "uniform":
                return np.linspace(self.r_min, self.r_max, self.n_points)
            return np.geomspace(self.r_min, self.r_max, self.n_points)
        if self.kind == "periodic_box":
            # periodic: last node is identified with the first, so exclude it
            return np.linspace(0.0, self.side_length, self.n_points, endpoint=False)
        raise NotApplicableError("product_cylinder charts have no 1D node line")

    @property
    def periodic(self) -> bool:
        return self.kind == "periodic_box"


def radial_chart(r_min, r_max, n_points, spacing="uniform") -> Chart:
    return Chart(kind="radial", r_min=r_min, r_max=r_max, n_points=n_points, spacing=spacing)


def periodic_chart(side_length, n_points) -> Chart:
    return Chart(kind="periodic_box", side_length=side_length, n_points=n_points)


# ---------------------------------------------------------------------------
# Tensor fields
# ---------------------------------------------------------------------------

def _fd4(fn, x, h, axis):
    """4th-order centered first derivative of fn along coordinate `axis`."""
    e = np.zeros(3)
    e[axis] = 1.0
    return (-fn(x + 2 * h * e) + 8 * fn(x + h * e)
            - 8 * fn(x - h * e) + fn(x + (-2 * h) * e)) / (12 * h)


@dataclass
class MetricField:
    """Riemannian metric with component functions and their derivatives.

    `g` maps points (..., 3) to components (..., 3, 3); `dg` prepends one
    derivative index, `d2g` two.  Catalog entries supply analytic closures;
    `MetricField.from_components` builds the finite-difference fallback.
    """

    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]
    d2g: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_components(cls, g_fn, h: float = 0.02) -> "MetricField":
        """Metric from a components-only callable, derivatives by 4th-order FD."""

        def dg(x):
            return np.stack([_fd4(g_fn, x, h, c) for c in range(3)], axis=-3)

        def d2g(x):
            return np.stack([_fd4(dg, x, h, c) for c in range(3)], axis=-4)

        return cls(g=g_fn, dg=dg, d2g=d2g)

    def check_positive(self, x):
        gx = self.g(x)
        ev = np.linalg.eigvalsh(gx)
        if np.min(ev) < EIG_FLOOR:
            raise DegenerateMetricError(
                f"metric eigenvalue {np.min(ev):.3e} below {EIG_FLOOR:.0e}")
        return gx


@dataclass
class ExtrinsicField:
    """Symmetric (0,2) tensor k with first derivatives."""

    k: Callable[[np.ndarray], np.ndarray]
    dk: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_components(cls, k_fn, h: float = 0.02) -> "ExtrinsicField":
        def dk(x):
            return np.stack([_fd4(k_fn, x, h, c) for c in range(3)], axis=-3)

        return cls(k=k_fn, dk=dk)

    @classmethod
    def zero(cls) -> "ExtrinsicField":
        def k(x):
            return np.zeros(x.shape[:-1] + (3, 3))

        def dk(x):
            return np.zeros(x.shape[:-1] + (3, 3, 3))

        return cls(k=k, dk=dk)


@dataclass(frozen=True)
class ConstraintFields:
    """Pointwise constraint quantities: energy density, current density covector,
    and the dominant-energy margin mu - |J|_g (computed, never assumed >= 0)."""

    mu: np.ndarray
    J: np.ndarray
    dec_margin: np.ndarray


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------

def inverse_metric(metric: MetricField, x):
    gx = metric.check_positive(x)
    return np.linalg.inv(gx)


def christoffel(metric: MetricField, x):
    """Christoffel symbols Gamma^i_{jk}, shape (..., 3, 3, 3)."""
    gx = metric.check_positive(x)
    ginv = np.linalg.inv(gx)
    dg = metric.dg(x)  # [..., c, a, b] = d_c g_ab
    # Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
    return 0.5 * (np.einsum("...il,...jlk->...ijk", ginv, dg)
                  + np.einsum("...il,...klj->...ijk", ginv, dg)
                  - np.einsum("...il,...ljk->...ijk", ginv, dg))


def _christoffel_and_derivative(metric: MetricField, x):
    gx = metric.check_positive(x)
    ginv = np.linalg.inv(gx)
    dg = metric.dg(x)
    d2g = metric.d2g(x)  # [..., c, d, a, b] = d_c d_d g_ab
    dginv = -np.einsum("...im,...ln,...cmn->...cil", ginv, ginv, dg)
    # first-derivative bracket B_ljk = d_j g_lk + d_k g_lj - d_l g_jk
    B = (np.einsum("...jlk->...ljk", dg) + np.einsum("...klj->...ljk", dg)
         - np.einsum("...ljk->...ljk", dg))
    gamma = 0.5 * np.einsum("...il,...ljk->...ijk", ginv, B)
    # d_c B_ljk from second derivatives
    dB = (np.einsum("...cjlk->...cljk", d2g) + np.einsum("...cklj->...cljk", d2g)
          - np.einsum("...cljk->...cljk", d2g))
    dgamma = 0.5 * (np.einsum("...cil,...ljk->...cijk", dginv, B)
                    + np.einsum("...il,...cljk->...cijk", ginv, dB))
    return gamma, dgamma, ginv


def riemann(metric: MetricField, x):
    """Riemann tensor R^i_{jkl}, shape (..., 3, 3, 3, 3)."""
    gamma, dgamma, _ = _christoffel_and_derivative(metric, x)
    R = (np.einsum("...kilj->...ijkl", dgamma) - np.einsum("...likj->...ijkl", dgamma)
         + np.einsum("...ikm,...mlj->...ijkl", gamma, gamma)
         - np.einsum("...ilm,...mkj->...ijkl", gamma, gamma))
    return R


def ricci(metric: MetricField, x):
    R = riemann(metric, x)
    return np.einsum("...ijil->...jl", R)


def scalar_curvature(metric: MetricField, x):
    """Scalar curvature R_g at x."""
    ric = ricci(metric, x)
    ginv = inverse_metric(metric, x)
    return np.einsum("...jl,...jl->...", ginv, ric)


def ricci_nn(metric: MetricField, x, nu):
    """Ricci curvature contracted twice with a vector field nu (upper indices)."""
    ric = ricci(metric, x)
    return np.einsum("...jl,...j,...l->...", ric, nu, nu)


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

def constraints(metric: MetricField, extrinsic: ExtrinsicField, x) -> ConstraintFields:
    """Energy density mu = (R - |k|^2 + (tr k)^2)/2, current J = div(k - tr(k) g),
    and the margin mu - |J|_g."""
    gx = metric.check_positive(x)
    ginv = np.linalg.inv(gx)
    kx = extrinsic.k(x)
    dk = extrinsic.dk(x)
    dg = metric.dg(x)
    gamma = christoffel(metric, x)

    R = scalar_curvature(metric, x)
    trk = np.einsum("...ab,...ab->...", ginv, kx)
    k2 = np.einsum("...ac,...bd,...ab,...cd->...", ginv, ginv, kx, kx)
    mu = 0.5 * (R - k2 + trk ** 2)

    # T = k - (tr k) g ;  J_j = g^{ic} nabla_i T_cj
    dginv = -np.einsum("...im,...ln,...cmn->...cil", ginv, ginv, dg)
    dtrk = (np.einsum("...cab,...ab->...c", dginv, kx)
            + np.einsum("...ab,...cab->...c", ginv, dk))
    T = kx - trk[..., None, None] * gx
    dT = (dk - dtrk[..., :, None, None] * gx[..., None, :, :]
          - trk[..., None, None, None] * dg)
    nablaT = (dT - np.einsum("...lia,...lb->...iab", gamma, T)
              - np.einsum("...lib,...al->...iab", gamma, T))
    J = np.einsum("...ic,...icj->...j", ginv, nablaT)

    J2 = np.einsum("...ij,...i,...j->...", ginv, J, J)
    dec_margin = mu - np.sqrt(np.maximum(J2, 0.0))
    return ConstraintFields(mu=mu, J=J, dec_margin=dec_margin)
