#!/usr/bin/env python3
# src/core/norms.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/norms.py
Weighted norms, radiation residuals and flux balances of discrete fields.

Ball integrals start at r_inner: the unresolved disk r < r_inner counts as
zero. Suprema over R run over grid shells only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import PreconditionError
from .helmholtz_fd import ComplexField, PolarGrid, gradient
from .index_models import AngularProfile, IndexModel

logger = logging.getLogger(__name__)

WEIGHTS = ("inverse", "shifted")


def _shell_mass(grid: PolarGrid, density: np.ndarray) -> np.ndarray:
    return np.sum(grid.weights * density, axis=1)


def _same_grid(a: ComplexField, b: ComplexField) -> None:
    if a.grid != b.grid:
        raise PreconditionError("fields live on different grids")


# ---------------------------------------------------------------------------
# Morrey and dyadic norms
# ---------------------------------------------------------------------------

def triple_of_density(grid: PolarGrid, density: np.ndarray, R0: float = 0.0) -> float:
    """sup over shells r_i > R0 of (1/r_i) sum_{r_k <= r_i} w density."""
    if not 0.0 <= R0 < grid.L:
        raise PreconditionError(f"R0 must lie in [0, L), got {R0}")
    ball = np.cumsum(_shell_mass(grid, density))
    ratios = ball / grid.r
    return float(np.max(ratios[grid.r > R0]))


def triple_norm(u: ComplexField, R0: float = 0.0, weight: Optional[np.ndarray] = None) -> float:
    """|||u|||^2_R0, optionally with |u|^2 multiplied by ``weight`` (e.g. n)."""
    density = u.abs2 if weight is None else np.broadcast_to(weight, u.grid.shape) * u.abs2
    return triple_of_density(u.grid, density, R0)


@dataclass
class DyadicTerm:
    j: int
    lower: float
    upper: float
    value: float
    clipped: bool


@dataclass
class DyadicDecomposition:
    R0: float
    head: float
    terms: List[DyadicTerm]

    @property
    def total(self) -> float:
        return self.head + math.fsum(t.value for t in self.terms)

    @property
    def clipped(self) -> List[int]:
        return [t.j for t in self.terms if t.clipped]


def dyadic_decomposition(f: ComplexField, R0: float = 0.0) -> DyadicDecomposition:
    """Annulus terms [2^(j+1) int_C(j) |f|^2]^(1/2) for j > J plus the ball head.

    Nodes are assigned to annuli by 2^j <= r_i < 2^(j+1); J is defined by
    2^J <= R0 < 2^(J+1). An annulus not contained in [r_inner, L] is clipped.
    """
    grid = f.grid
    if R0 < 0.0:
        raise PreconditionError(f"R0 must be >= 0, got {R0}")
    mass = _shell_mass(grid, f.abs2)

    head = 0.0
    if R0 > 0.0:
        head = math.sqrt(R0 * float(np.sum(mass[grid.r <= R0])))
        j_start = int(math.floor(math.log2(R0))) + 1
    else:
        j_start = int(math.floor(math.log2(grid.r_inner)))
    j_stop = int(math.floor(math.log2(grid.L)))

    terms = []
    for j in range(j_start, j_stop + 1):
        lower, upper = 2.0**j, 2.0 ** (j + 1)
        members = (grid.r >= lower) & (grid.r < upper)
        value = math.sqrt(upper * float(np.sum(mass[members])))
        clipped = lower < grid.r_inner or upper > grid.L
        terms.append(DyadicTerm(j, lower, upper, value, clipped))
    decomposition = DyadicDecomposition(R0, head, terms)
    if decomposition.clipped:
        logger.debug(f"Dyadic annuli clipped by the grid: {decomposition.clipped}")
    return decomposition


def besov_norm(f: ComplexField, R0: float = 0.0) -> float:
    """N_R0(f): dyadic annulus sum plus the ball head term."""
    return dyadic_decomposition(f, R0).total


def weighted_source_norm(f: ComplexField, a: float = 1.0) -> float:
    """int |f|^2 (1 + |x|)^a."""
    rr, _ = f.grid.mesh
    return float(np.sum(f.grid.weights * f.abs2 * (1.0 + rr) ** a))


@dataclass
class DualityCheck:
    lhs: float
    rhs: float
    ok: bool


def duality_check(f: ComplexField, u: ComplexField) -> DualityCheck:
    """int |f u| <= N(f) |||u|||, annulus by annulus Cauchy-Schwarz."""
    _same_grid(f, u)
    lhs = float(np.sum(f.grid.weights * np.abs(f.values * np.conj(u.values))))
    rhs = besov_norm(f, 0.0) * math.sqrt(triple_norm(u, 0.0))
    return DualityCheck(lhs, rhs, lhs <= rhs * (1.0 + 1e-12))


# ---------------------------------------------------------------------------
# Morawetz quantities
# ---------------------------------------------------------------------------

@dataclass
class NormReport:
    R0: float
    a: float = 1.0
    triple_u: Optional[float] = None
    triple_nu: Optional[float] = None
    tangential_energy: Optional[float] = None
    M2: Optional[float] = None
    besov_f: Optional[float] = None
    concentration: Optional[float] = None
    sommerfeld: dict = field(default_factory=dict)
    flux_pairs: List[dict] = field(default_factory=list)
    weighted_f: Optional[float] = None
    unresolved_disk_radius: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def tangential_energy(u: ComplexField, R0: float = 0.0) -> float:
    """int_{|x| >= R0} |grad_tau u|^2 / |x|."""
    _, du_t = gradient(u)
    lengths = u.grid.radial_lengths(lower=R0)
    return float(np.sum(lengths * np.sum(np.abs(du_t.values) ** 2, axis=1)))


def morawetz_report(u: ComplexField, model: IndexModel, R0: Optional[float] = None) -> NormReport:
    """|||grad u|||^2 + |||n^(1/2) u|||^2 + tangential energy, all from R0.

    R0 defaults to n0^(-1/2) with n0 the model's lower bound.
    """
    grid = u.grid
    if R0 is None:
        R0 = model.lower_bound() ** -0.5
    R0 = min(R0, grid.r[-2])
    du_r, du_t = gradient(u)
    grad2 = np.abs(du_r.values) ** 2 + np.abs(du_t.values) ** 2
    x1, x2 = grid.cartesian
    n = model.n(x1, x2)

    report = NormReport(R0=float(R0), unresolved_disk_radius=grid.r_inner)
    report.triple_u = triple_of_density(grid, grad2, R0)
    report.triple_nu = triple_norm(u, R0, weight=n)
    report.tangential_energy = tangential_energy(u, R0)
    report.M2 = report.triple_u + report.triple_nu + report.tangential_energy
    return report


def concentration_integral(u: ComplexField, profile: AngularProfile, R: float) -> float:
    """int_{|x| >= R} |d_theta n_inf|^2 |u|^2 / |x|."""
    grid = u.grid
    if not grid.r_inner <= R < grid.L:
        raise PreconditionError(f"R must lie in [r_inner, L), got {R}")
    angular = profile.d1(grid.theta) ** 2
    lengths = grid.radial_lengths(lower=R)
    return float(np.sum(lengths * np.sum(angular[None, :] * u.abs2, axis=1)))


def annulus_mass(u: ComplexField, lower: float, upper: Optional[float] = None) -> float:
    """int_{lower <= |x| <= upper} |u|^2 / |x|."""
    lengths = u.grid.radial_lengths(lower=lower, upper=upper)
    return float(np.sum(lengths * np.sum(u.abs2, axis=1)))


# ---------------------------------------------------------------------------
# Radiation conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarPhase:
    """Radial phase speed s: residual |d_r u - i s u|^2 + |grad_tau u|^2."""

    s: np.ndarray

    @classmethod
    def from_model(cls, grid: PolarGrid, model: IndexModel, sign: float = 1.0) -> "ScalarPhase":
        x1, x2 = grid.cartesian
        return cls(sign * np.sqrt(model.n(x1, x2)))

    @classmethod
    def from_profile(cls, grid: PolarGrid, profile: AngularProfile, sign: float = 1.0) -> "ScalarPhase":
        return cls(sign * np.broadcast_to(np.sqrt(profile.eval(grid.theta))[None, :], grid.shape))


@dataclass(frozen=True, eq=False)
class VectorPhase:
    """Polar components (G_r, G_tau) of a vector phase field G."""

    radial: np.ndarray
    tangential: np.ndarray

    @classmethod
    def from_cartesian(cls, grid: PolarGrid, g1: np.ndarray, g2: np.ndarray) -> "VectorPhase":
        _, tt = grid.mesh
        c, s = np.cos(tt), np.sin(tt)
        return cls(c * g1 + s * g2, -s * g1 + c * g2)


Phase = Union[ScalarPhase, VectorPhase]


def _radiation_density(u: ComplexField, phase: Phase) -> np.ndarray:
    grid = u.grid
    du_r, du_t = gradient(u)
    v = u.values
    if isinstance(phase, ScalarPhase):
        s = np.broadcast_to(phase.s, grid.shape)
        return np.abs(du_r.values - 1j * s * v) ** 2 + np.abs(du_t.values) ** 2
    g_r = np.broadcast_to(phase.radial, grid.shape)
    g_t = np.broadcast_to(phase.tangential, grid.shape)
    if not (np.all(np.isfinite(g_r)) and np.all(np.isfinite(g_t))):
        raise PreconditionError("vector phase field has non-finite entries")
    return np.abs(du_r.values - 1j * g_r * v) ** 2 + np.abs(du_t.values - 1j * g_t * v) ** 2


def _radial_weight(grid: PolarGrid, weight: str) -> np.ndarray:
    if weight == "inverse":
        return 1.0 / grid.r
    if weight == "shifted":
        return 1.0 / (1.0 + grid.r)
    raise PreconditionError(f"weight must be one of {WEIGHTS}, got '{weight}'")


def weighted_integral(grid: PolarGrid, density: np.ndarray, weight: str = "shifted", r_min: Optional[float] = None) -> float:
    w = grid.radial_weights(lower=r_min) * _radial_weight(grid, weight)
    return float(np.sum(w * np.sum(density, axis=1)))


def sommerfeld_residual(
    u: ComplexField, phase: Phase, weight: str = "inverse", r_min: Optional[float] = None
) -> float:
    """Weighted radiation residual over r >= r_min (default r_inner)."""
    return weighted_integral(u.grid, _radiation_density(u, phase), weight, r_min)


def gradient_energy(u: ComplexField, weight: str = "inverse", r_min: Optional[float] = None) -> float:
    """The normalizing energy int |grad u|^2 with the same weight."""
    du_r, du_t = gradient(u)
    density = np.abs(du_r.values) ** 2 + np.abs(du_t.values) ** 2
    return weighted_integral(u.grid, density, weight, r_min)


def sommerfeld_liminf(u: ComplexField, phase: Phase, fraction: float = 0.1) -> float:
    """Min over the outer ``fraction`` of shells of the shell radiation flux."""
    grid = u.grid
    shell = np.sum(_radiation_density(u, phase), axis=1) * grid.r * grid.dtheta
    count = max(1, int(math.ceil(fraction * grid.Nr)))
    return float(np.min(shell[-count:]))


# ---------------------------------------------------------------------------
# Flux balance
# ---------------------------------------------------------------------------

FLUX_HEADER = "R,surface_flux,minus_surface_energy,volume_lhs,volume_rhs"


@dataclass
class FluxRow:
    R: float
    surface_flux: float
    minus_surface_energy: float
    volume_lhs: float
    volume_rhs: float

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.R, self.surface_flux, self.minus_surface_energy, self.volume_lhs, self.volume_rhs)


def flux_report(
    u: ComplexField,
    f: ComplexField,
    model: IndexModel,
    profile: AngularProfile,
    radii: Sequence[float],
) -> List[FluxRow]:
    """Surface flux and volume energy balance on the shells nearest ``radii``."""
    _same_grid(u, f)
    grid = u.grid
    du_r, _ = gradient(u)
    x1, x2 = grid.cartesian
    root_n = np.sqrt(model.n(x1, x2))
    root_ninf = np.sqrt(profile.eval(grid.theta))[None, :]
    v = u.values
    rows = []
    for R in radii:
        if not grid.r_inner < R <= grid.L:
            raise PreconditionError(f"flux radius {R} outside (r_inner, L]")
        i, Rs = grid.snap(R)
        ring = Rs * grid.dtheta
        vb = v[i]
        surface = float(np.sum(np.imag(np.conj(vb) * (du_r.values[i] - 1j * root_n[i] * vb)))) * ring
        minus_energy = -float(np.sum(root_n[i] * np.abs(vb) ** 2)) * ring
        w = grid.radial_weights(upper=Rs)[:, None]
        lhs = float(np.sum(w * root_ninf * np.abs(v) ** 2)) / Rs
        rhs = -float(np.sum(w * np.imag(f.values * np.conj(v))))
        rows.append(FluxRow(Rs, surface, minus_energy, lhs, rhs))
    return rows
