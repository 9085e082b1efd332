#!/usr/bin/env python3
# src/core/identities.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/identities.py
Multiplier identities evaluated on discrete fields.

All identities are written for  Laplace(u) + (n + i eps) u = g,  where the
solver convention gives g = -f. Integrals use the operator control volumes of
the grid; surface terms at |x| = L are reported under their own keys. A
multiplier whose value (phi, psi) or Laplacian (Psi) jumps across a circle
contributes the corresponding surface term at the nearest shell.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import PreconditionError
from .helmholtz_fd import ComplexField, PolarGrid, cartesian_gradient, gradient
from .index_models import AngularProfile, IndexModel

logger = logging.getLogger(__name__)

Array = np.ndarray
Scalar = Callable[[Array, Array], Array]
Pair = Callable[[Array, Array], Tuple[Array, Array]]
Triple = Callable[[Array, Array], Tuple[Array, Array, Array]]

KINDS = ("scalar_phi", "scalar_psi", "vector_Psi_kinked", "vector_Psi_q", "custom_smooth")
FLOOR = 1e-300


@dataclass(frozen=True)
class Multiplier:
    """Weight or potential with the derivatives the identities need.

    ``jumps`` lists (radius, J): for phi/psi the jump of the value, for Psi
    the jump of its Laplacian, outside minus inside.
    """

    kind: str
    value: Scalar
    gradient: Pair
    laplacian: Optional[Scalar] = None
    hessian: Optional[Triple] = None
    grad_laplacian: Optional[Pair] = None
    jumps: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise PreconditionError(f"multiplier kind must be one of {KINDS}, got '{self.kind}'")


def _zeros(x1: Array, x2: Array) -> Array:
    return np.zeros(np.broadcast(x1, x2).shape)


def _zero_pair(x1: Array, x2: Array) -> Tuple[Array, Array]:
    return _zeros(x1, x2), _zeros(x1, x2)


def gaussian_weight(scale: float = 1.0) -> Multiplier:
    """phi = exp(-|x|^2 / scale^2)."""
    s2 = scale**2

    def value(x1, x2):
        return np.exp(-(x1**2 + x2**2) / s2)

    def grad(x1, x2):
        phi = value(x1, x2)
        return -2.0 * x1 / s2 * phi, -2.0 * x2 / s2 * phi

    def lap(x1, x2):
        r2 = x1**2 + x2**2
        return (4.0 * r2 / s2**2 - 4.0 / s2) * value(x1, x2)

    return Multiplier("scalar_phi", value, grad, lap)


def ball_weight(R: float) -> Multiplier:
    """phi = 1/(2R) on |x| <= R and 0 outside."""
    height = 0.5 / R

    def value(x1, x2):
        return np.where(np.hypot(x1, x2) <= R, height, 0.0)

    return Multiplier("scalar_phi", value, _zero_pair, _zeros, jumps=((R, -height),))


def constant_weight(c: float = 1.0) -> Multiplier:
    def value(x1, x2):
        return np.full(np.broadcast(x1, x2).shape, float(c))

    return Multiplier("scalar_psi", value, _zero_pair, _zeros)


def angular_weight(profile: AngularProfile) -> Multiplier:
    """psi = N(theta); grad psi = N'(theta) theta_hat / |x|."""

    def value(x1, x2):
        return profile.eval(np.arctan2(x2, x1))

    def grad(x1, x2):
        r2 = x1**2 + x2**2
        d = profile.d1(np.arctan2(x2, x1))
        return -d * x2 / r2, d * x1 / r2

    def lap(x1, x2):
        return profile.d2(np.arctan2(x2, x1)) / (x1**2 + x2**2)

    return Multiplier("scalar_psi", value, grad, lap)


def quadratic_potential() -> Multiplier:
    """Psi = |x|^2 / 2: D^2 Psi = I, Laplace Psi = 2."""

    def value(x1, x2):
        return 0.5 * (x1**2 + x2**2)

    def grad(x1, x2):
        return np.asarray(x1, dtype=float) + 0.0 * x2, np.asarray(x2, dtype=float) + 0.0 * x1

    def lap(x1, x2):
        return np.full(np.broadcast(x1, x2).shape, 2.0)

    def hess(x1, x2):
        one = np.ones(np.broadcast(x1, x2).shape)
        return one, 0.0 * one, one.copy()

    return Multiplier("custom_smooth", value, grad, lap, hess, _zero_pair)


def kinked_potential(R: float) -> Multiplier:
    """grad Psi = x/R on |x| <= R and x/|x| outside; Laplace Psi jumps by -1/R."""

    def inside(x1, x2):
        return np.hypot(x1, x2) <= R

    def value(x1, x2):
        r = np.hypot(x1, x2)
        return np.where(r <= R, 0.5 * r**2 / R, r - 0.5 * R)

    def grad(x1, x2):
        r = np.hypot(x1, x2)
        scale = np.where(r <= R, 1.0 / R, 1.0 / np.maximum(r, R))
        return scale * x1, scale * x2

    def lap(x1, x2):
        r = np.hypot(x1, x2)
        return np.where(r <= R, 2.0 / R, 1.0 / np.maximum(r, R))

    def hess(x1, x2):
        r = np.maximum(np.hypot(x1, x2), R)
        h11 = x2**2 / r**3
        h12 = -x1 * x2 / r**3
        h22 = x1**2 / r**3
        inner = inside(x1, x2)
        return (
            np.where(inner, 1.0 / R, h11),
            np.where(inner, 0.0, h12),
            np.where(inner, 1.0 / R, h22),
        )

    def grad_lap(x1, x2):
        r = np.maximum(np.hypot(x1, x2), R)
        inner = inside(x1, x2)
        return np.where(inner, 0.0, -x1 / r**3), np.where(inner, 0.0, -x2 / r**3)

    return Multiplier("vector_Psi_kinked", value, grad, lap, hess, grad_lap, jumps=((R, -1.0 / R),))


def transition(s) -> Tuple[Array, Array, Array, Array]:
    """q and three derivatives: 0 below 1, the quintic 16t^3 - 23t^4 + 9t^5 (t = s - 1) on [1, 2], s above."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    poly = (16.0 * t**3 - 23.0 * t**4 + 9.0 * t**5, 48.0 * t**2 - 92.0 * t**3 + 45.0 * t**4,
            96.0 * t - 276.0 * t**2 + 180.0 * t**3, 96.0 - 552.0 * t + 540.0 * t**2)
    below, above = s <= 1.0, s >= 2.0
    q = np.where(below, 0.0, np.where(above, s, poly[0]))
    dq = np.where(below, 0.0, np.where(above, 1.0, poly[1]))
    d2q = np.where(below | above, 0.0, poly[2])
    d3q = np.where(below | above, 0.0, poly[3])
    return q, dq, d2q, d3q


def _radial_factor(R: float, r: Array) -> Tuple[Array, Array, Array, Array]:
    q, dq, d2q, d3q = transition(r / R)
    return q, dq / R, d2q / R**2, d3q / R**3


def _polar_hessian(Q, dQ, d2Q, N, dN, d2N, r):
    """Hessian of Q(r)N(theta) in the (r_hat, theta_hat) frame."""
    h_rr = d2Q * N
    h_rt = dQ * dN / r - Q * dN / r**2
    h_tt = dQ * N / r + Q * d2N / r**2
    return h_rr, h_rt, h_tt


def profile_potential(R: float, profile: AngularProfile) -> Multiplier:
    """Psi_q = q(|x|/R) n_inf(theta), vanishing on |x| <= R."""

    def parts(x1, x2):
        r = np.hypot(x1, x2)
        rs = np.where(r > 0.0, r, 1.0)
        theta = np.arctan2(x2, x1)
        return rs, np.cos(theta), np.sin(theta), _radial_factor(R, rs), [
            profile.derivative(theta, k) for k in range(4)
        ]

    def value(x1, x2):
        _, _, _, (Q, *_), (N, *_) = parts(x1, x2)
        return Q * N

    def grad(x1, x2):
        r, c, s, (Q, dQ, _, _), (N, dN, _, _) = parts(x1, x2)
        g_r, g_t = dQ * N, Q * dN / r
        return c * g_r - s * g_t, s * g_r + c * g_t

    def lap(x1, x2):
        r, _, _, (Q, dQ, d2Q, _), (N, _, d2N, _) = parts(x1, x2)
        return d2Q * N + dQ * N / r + Q * d2N / r**2

    def hess(x1, x2):
        r, c, s, (Q, dQ, d2Q, _), (N, dN, d2N, _) = parts(x1, x2)
        h_rr, h_rt, h_tt = _polar_hessian(Q, dQ, d2Q, N, dN, d2N, r)
        return (
            c**2 * h_rr - 2.0 * c * s * h_rt + s**2 * h_tt,
            c * s * (h_rr - h_tt) + (c**2 - s**2) * h_rt,
            s**2 * h_rr + 2.0 * c * s * h_rt + c**2 * h_tt,
        )

    def grad_lap(x1, x2):
        r, c, s, (Q, dQ, d2Q, d3Q), (N, dN, d2N, d3N) = parts(x1, x2)
        d_r = d3Q * N + d2Q * N / r - dQ * N / r**2 + dQ * d2N / r**2 - 2.0 * Q * d2N / r**3
        d_t = (d2Q * dN + dQ * dN / r + Q * d3N / r**2) / r
        return c * d_r - s * d_t, s * d_r + c * d_t

    return Multiplier("vector_Psi_q", value, grad, lap, hess, grad_lap)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    lhs: float
    rhs: float
    abs_residual: float
    rel_residual: float
    terms: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, lhs_terms: Dict[str, float], rhs_terms: Dict[str, float]) -> "IdentityReport":
        lhs = float(sum(lhs_terms.values()))
        rhs = float(sum(rhs_terms.values()))
        residual = abs(lhs - rhs)
        rel = residual / max(abs(lhs), abs(rhs), FLOOR)
        return cls(lhs, rhs, residual, rel, {**lhs_terms, **rhs_terms})

    def to_dict(self) -> dict:
        return asdict(self)


class _Quadrature:
    """Volume and surface sums on a grid."""

    def __init__(self, grid: PolarGrid):
        self.grid = grid
        self.volume = grid.volumes[:, None]

    def integrate(self, values: Array) -> float:
        return float(np.sum(self.volume * values))

    def surface(self, values: Array, shell: int) -> float:
        return float(np.sum(values[shell])) * self.grid.r[shell] * self.grid.dtheta


def _source(u: ComplexField, f: ComplexField) -> Array:
    if u.grid != f.grid:
        raise PreconditionError("solution and source live on different grids")
    return -f.values


def check_variational(
    u: ComplexField, f: ComplexField, model: IndexModel, phi: Multiplier
) -> IdentityReport:
    """-int phi|grad u|^2 + 1/2 int Laplace(phi)|u|^2 + int phi n|u|^2 = Re int phi conj(u) g."""
    grid = u.grid
    quad = _Quadrature(grid)
    g = _source(u, f)
    x1, x2 = grid.cartesian
    v = u.values
    du_r, du_t = gradient(u)
    ur, ut = du_r.values, du_t.values
    weight = phi.value(x1, x2)
    lap = phi.laplacian(x1, x2) if phi.laplacian is not None else np.zeros(grid.shape)
    n = model.n(x1, x2)
    abs2 = np.abs(v) ** 2

    lhs = {
        "gradient_energy": -quad.integrate(weight * (np.abs(ur) ** 2 + np.abs(ut) ** 2)),
        "weight_laplacian": 0.5 * quad.integrate(lap * abs2),
        "potential": quad.integrate(weight * n * abs2),
    }
    d_r_abs2 = 2.0 * np.real(np.conj(v) * ur)
    jump_total = 0.0
    for radius, jump in phi.jumps:
        shell, _ = grid.snap(radius)
        jump_total += -0.5 * jump * quad.surface(d_r_abs2, shell)
    lhs["weight_jump"] = jump_total

    outer = grid.Nr - 1
    g1, g2 = phi.gradient(x1, x2)
    d_r_phi = (x1 * g1 + x2 * g2) / grid.mesh[0]
    lhs["boundary_flux"] = quad.surface(weight * np.real(np.conj(v) * ur), outer)
    lhs["boundary_weight"] = -0.5 * quad.surface(d_r_phi * abs2, outer)

    rhs = {"source": quad.integrate(np.real(weight * np.conj(v) * g))}
    return IdentityReport.build(lhs, rhs)


def check_flux(u: ComplexField, f: ComplexField, epsilon: float, psi: Multiplier) -> IdentityReport:
    """eps int psi|u|^2 - Im int grad psi . grad u conj(u) = Im int g conj(u) psi."""
    grid = u.grid
    quad = _Quadrature(grid)
    g = _source(u, f)
    x1, x2 = grid.cartesian
    v = u.values
    du_r, _ = gradient(u)
    u1, u2 = cartesian_gradient(u)
    weight = psi.value(x1, x2)
    p1, p2 = psi.gradient(x1, x2)

    lhs = {
        "absorption": epsilon * quad.integrate(weight * np.abs(v) ** 2),
        "weight_flux": -quad.integrate(np.imag((p1 * u1 + p2 * u2) * np.conj(v))),
    }
    jump_total = 0.0
    for radius, jump in psi.jumps:
        shell, _ = grid.snap(radius)
        jump_total += -jump * quad.surface(np.imag(du_r.values * np.conj(v)), shell)
    lhs["weight_jump"] = jump_total
    lhs["boundary_flux"] = quad.surface(weight * np.imag(np.conj(v) * du_r.values), grid.Nr - 1)

    rhs = {"source": quad.integrate(np.imag(g * np.conj(v) * weight))}
    return IdentityReport.build(lhs, rhs)


def check_morawetz(
    u: ComplexField, f: ComplexField, model: IndexModel, epsilon: float, Psi: Multiplier
) -> IdentityReport:
    """Morawetz identity for grad Psi . grad conj(u) + 1/2 Laplace(Psi) conj(u).

    lhs: int grad u* D^2 Psi grad u + 1/2 Re int grad Laplace(Psi) . grad u conj(u)
         + 1/2 int grad n . grad Psi |u|^2  (+ Laplacian jump surface terms)
    rhs: -Re int g (grad Psi . grad u* + 1/2 Laplace(Psi) u*) - eps Im int grad Psi . grad u* u
         + surface terms at |x| = L.
    """
    if Psi.hessian is None or Psi.grad_laplacian is None or Psi.laplacian is None:
        raise PreconditionError("Morawetz identity needs Hessian, Laplacian and grad-Laplacian of Psi")
    grid = u.grid
    quad = _Quadrature(grid)
    g = _source(u, f)
    x1, x2 = grid.cartesian
    rr, _ = grid.mesh
    v = u.values
    cv = np.conj(v)
    du_r, _ = gradient(u)
    ur = du_r.values
    u1, u2 = cartesian_gradient(u)
    c1, c2 = np.conj(u1), np.conj(u2)

    P1, P2 = Psi.gradient(x1, x2)
    lap = Psi.laplacian(x1, x2)
    h11, h12, h22 = Psi.hessian(x1, x2)
    l1, l2 = Psi.grad_laplacian(x1, x2)
    n, n1, n2 = model.evaluate(x1, x2)
    abs2 = np.abs(v) ** 2
    grad2 = np.abs(u1) ** 2 + np.abs(u2) ** 2
    psi_dot_grad_conj = P1 * c1 + P2 * c2

    hessian_form = np.real(c1 * h11 * u1 + c1 * h12 * u2 + c2 * h12 * u1 + c2 * h22 * u2)
    lhs = {
        "hessian": quad.integrate(hessian_form),
        "laplacian_gradient": 0.5 * quad.integrate(np.real((l1 * u1 + l2 * u2) * cv)),
        "index_gradient": 0.5 * quad.integrate((n1 * P1 + n2 * P2) * abs2),
    }
    jump_total = 0.0
    for radius, jump in Psi.jumps:
        shell, _ = grid.snap(radius)
        jump_total += 0.5 * jump * quad.surface(np.real(ur * cv), shell)
    lhs["laplacian_jump"] = jump_total

    outer = grid.Nr - 1
    d_r_psi = (x1 * P1 + x2 * P2) / rr
    rhs = {
        "source": -quad.integrate(np.real(g * (psi_dot_grad_conj + 0.5 * lap * cv))),
        "absorption": -epsilon * quad.integrate(np.imag(psi_dot_grad_conj * v)),
        "boundary_cross": quad.surface(np.real(ur * psi_dot_grad_conj), outer),
        "boundary_gradient": -0.5 * quad.surface(d_r_psi * grad2, outer),
        "boundary_laplacian": 0.5 * quad.surface(lap * np.real(cv * ur), outer),
        "boundary_index": 0.5 * quad.surface(n * d_r_psi * abs2, outer),
    }
    return IdentityReport.build(lhs, rhs)


# ---------------------------------------------------------------------------
# Energy mechanism of the profile potential
# ---------------------------------------------------------------------------

@dataclass
class DecompositionReport:
    index_terms: Dict[str, float]
    index_direct: float
    index_rel_error: float
    hessian_terms: Dict[str, float]
    hessian_direct: float
    hessian_rel_error: float

    def to_dict(self) -> dict:
        return asdict(self)


def psi_q_decomposition(
    u: ComplexField, model: IndexModel, profile: AngularProfile, R: float
) -> DecompositionReport:
    """Split int grad n . grad Psi_q |u|^2 and int grad u* D^2 Psi_q grad u into named terms.

    Each split is checked against a direct Cartesian evaluation.
    """
    grid = u.grid
    quad = _Quadrature(grid)
    x1, x2 = grid.cartesian
    rr, tt = grid.mesh
    v = u.values
    abs2 = np.abs(v) ** 2
    du_r, du_t = gradient(u)
    ur, ut = du_r.values, du_t.values
    u1, u2 = cartesian_gradient(u)

    Q, dQ, d2Q, _ = _radial_factor(R, rr)
    N, dN, d2N = profile.eval(tt), profile.d1(tt), profile.d2(tt)
    n, g1, g2 = model.evaluate(x1, x2)
    d_r_n = (x1 * g1 + x2 * g2) / rr
    d_t_n = -x2 * g1 + x1 * g2

    index_terms = {
        "angular_limit": quad.integrate(Q * dN * dN * abs2 / rr**2),
        "radial_index": quad.integrate(d_r_n * dQ * N * abs2),
        "angular_remainder": quad.integrate(Q * dN * (d_t_n - dN) * abs2 / rr**2),
    }

    # direct Cartesian gradient of Psi_q = Q(r) N(theta)
    th1, th2 = -x2 / rr**2, x1 / rr**2
    P1 = dQ * N * x1 / rr + Q * dN * th1
    P2 = dQ * N * x2 / rr + Q * dN * th2
    index_direct = quad.integrate((g1 * P1 + g2 * P2) * abs2)

    h_rr, h_rt, h_tt = _polar_hessian(Q, dQ, d2Q, N, dN, d2N, rr)
    hessian_terms = {
        "radial": quad.integrate(h_rr * np.abs(ur) ** 2),
        "tangential": quad.integrate(dQ * N / rr * np.abs(ut) ** 2),
        "cross": quad.integrate(2.0 * h_rt * np.real(np.conj(ur) * ut)),
        "angular_hessian": quad.integrate(Q * d2N / rr**2 * np.abs(ut) ** 2),
    }

    r4 = rr**4
    th11, th22, th12 = 2.0 * x1 * x2 / r4, -2.0 * x1 * x2 / r4, (x2**2 - x1**2) / r4
    xs = (x1, x2)
    ths = (th1, th2)
    second = {(0, 0): th11, (0, 1): th12, (1, 1): th22}
    H = {}
    for i, j in ((0, 0), (0, 1), (1, 1)):
        delta = 1.0 if i == j else 0.0
        H[i, j] = (
            d2Q * xs[i] * xs[j] / rr**2 * N
            + dQ * (delta / rr - xs[i] * xs[j] / rr**3) * N
            + dQ * dN * (xs[i] * ths[j] + xs[j] * ths[i]) / rr
            + Q * d2N * ths[i] * ths[j]
            + Q * dN * second[i, j]
        )
    c1, c2 = np.conj(u1), np.conj(u2)
    hessian_direct = quad.integrate(
        np.real(c1 * H[0, 0] * u1 + c1 * H[0, 1] * u2 + c2 * H[0, 1] * u1 + c2 * H[1, 1] * u2)
    )

    def rel(total: float, direct: float) -> float:
        return abs(total - direct) / max(abs(direct), abs(total), FLOOR)

    index_sum = float(sum(index_terms.values()))
    hessian_sum = float(sum(hessian_terms.values()))
    return DecompositionReport(
        index_terms=index_terms,
        index_direct=index_direct,
        index_rel_error=rel(index_sum, index_direct),
        hessian_terms=hessian_terms,
        hessian_direct=hessian_direct,
        hessian_rel_error=rel(hessian_sum, hessian_direct),
    )


def multiplier_from_name(name: str, grid: PolarGrid, profile: Optional[AngularProfile], R: Optional[float]) -> Multiplier:
    """Psi multiplier by configuration name; R defaults to L/2."""
    radius = R if R is not None else 0.5 * grid.L
    if name == "quadratic":
        return quadratic_potential()
    if name == "kinked":
        return kinked_potential(radius)
    if name == "profile":
        if profile is None:
            raise PreconditionError("profile potential needs an angular profile")
        return profile_potential(radius, profile)
    raise PreconditionError(f"unknown potential multiplier '{name}'")
