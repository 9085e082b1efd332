#!/usr/bin/env python3
# src/core/waveguide.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/waveguide.py
Closed-form waveguide field u = Q(lam y) theta(x) exp(i kappa |x|) with
kappa = sqrt(1 + i eps), its source, and the quadratures that contrast the
growing tangential energy with the bounded conjugated energy and source norm.

Here |x| is the absolute value of the first coordinate. The vertical extent
``y_max`` is measured in the envelope variable lam*y.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import PreconditionError, QuadratureUnderResolved

logger = logging.getLogger(__name__)

Array = np.ndarray

SQRT2 = math.sqrt(2.0)
_B_CUTOFF = 1.0 / 700.0


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------

def soliton(y) -> Tuple[Array, Array, Array]:
    """Q = sech(y/sqrt 2) with Q' and Q''; Q'' + (Q^2 - 1/2) Q = 0."""
    s = np.asarray(y, dtype=float) / SQRT2
    decay = np.exp(-np.abs(s))
    sech = 2.0 * decay / (1.0 + decay**2)
    tanh = np.tanh(s)
    return sech, -sech * tanh / SQRT2, -0.5 * (sech**3 - sech * tanh**2)


def _bump_factor(t: Array) -> Tuple[Array, Array, Array]:
    """B(t) = exp(-1/t) for t > 0, else 0, with two derivatives."""
    live = t > _B_CUTOFF
    ts = np.where(live, t, 1.0)
    B = np.where(live, np.exp(-1.0 / ts), 0.0)
    return B, B / ts**2, B * (1.0 / ts**4 - 2.0 / ts**3)


def bump(s) -> Tuple[Array, Array, Array]:
    """Smooth step theta(s): 0 for s <= 1, 1 for s >= 2, with theta' and theta''."""
    s = np.asarray(s, dtype=float)
    Ba, dBa, d2Ba = _bump_factor(s - 1.0)
    Bb, dBb, d2Bb = _bump_factor(2.0 - s)
    D = Ba + Bb
    D = np.where(D > 0.0, D, 1.0)
    N = dBa * Bb + Ba * dBb
    dN = d2Ba * Bb - Ba * d2Bb
    dD = dBa - dBb
    theta = np.where(s >= 2.0, 1.0, Ba / D)
    inside = (s > 1.0) & (s < 2.0)
    dtheta = np.where(inside, N / D**2, 0.0)
    d2theta = np.where(inside, (dN * D - 2.0 * N * dD) / D**3, 0.0)
    return theta, dtheta, d2theta


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveguideParams:
    lam: float = 0.3
    epsilon: float = 1e-2
    x_max: Optional[float] = None
    y_max: float = 40.0
    nodes: int = 16

    def __post_init__(self) -> None:
        if not 0.0 < self.lam < 0.5:
            raise PreconditionError(
                f"waveguide lambda = {self.lam} violates the admissible window 0 < lambda < 1/2"
            )
        if not 0.0 < self.epsilon < 1.0:
            raise PreconditionError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.nodes < 2:
            raise PreconditionError(f"nodes must be >= 2, got {self.nodes}")

    @property
    def kappa(self) -> complex:
        """Principal sqrt(1 + i eps), Im kappa > 0."""
        return complex(np.sqrt(1.0 + 1j * self.epsilon))

    @property
    def x_extent(self) -> float:
        return self.x_max if self.x_max is not None else 20.0 / self.epsilon

    @property
    def y_extent(self) -> float:
        return self.y_max / self.lam

    def with_epsilon(self, epsilon: float) -> "WaveguideParams":
        return WaveguideParams(self.lam, epsilon, self.x_max, self.y_max, self.nodes)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, **{k: v for k, v in asdict(self).items() if k != "lam"}}


@dataclass
class _Parts:
    Q: Array
    dQ: Array
    d2Q: Array
    theta: Array
    dtheta: Array
    d2theta: Array
    sig: Array
    phase: Array
    n: Array


def _parts(params: WaveguideParams, x, y) -> _Parts:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    lam = params.lam
    q, dq, d2q = soliton(lam * y)
    ax = np.abs(x)
    theta, dtheta, d2theta = bump(ax)
    return _Parts(
        Q=q,
        dQ=lam * dq,
        d2Q=lam**2 * d2q,
        theta=theta,
        dtheta=dtheta,
        d2theta=d2theta,
        sig=np.sign(x),
        phase=np.exp(1j * params.kappa * ax),
        n=lam**2 * q**2 + 1.0 - 0.5 * lam**2,
    )


def fields(params: WaveguideParams, x, y) -> Tuple[Array, Array, Array]:
    """(u, f, n) at the given points; f = Laplace(u) + (n + i eps) u."""
    p = _parts(params, x, y)
    kappa = params.kappa
    u = p.Q * p.theta * p.phase
    f = (2j * kappa * p.sig * p.dtheta + p.d2theta) * p.Q * p.phase
    return u, f, p.n


def field_gradient(params: WaveguideParams, x, y) -> Tuple[Array, Array]:
    """Analytic (du/dx, du/dy)."""
    p = _parts(params, x, y)
    ux = p.Q * (p.dtheta + 1j * params.kappa * p.sig * p.theta) * p.phase
    uy = p.dQ * p.theta * p.phase
    return ux, uy


def pde_residual(params: WaveguideParams, x, y) -> Array:
    """|Laplace(u) + (n + i eps) u - f| from analytic second derivatives."""
    p = _parts(params, x, y)
    kappa = params.kappa
    uxx = p.Q * (p.d2theta + 2j * kappa * p.sig * p.dtheta - kappa**2 * p.theta) * p.phase
    uyy = p.d2Q * p.theta * p.phase
    u, f, n = fields(params, x, y)
    return np.abs(uxx + uyy + (n + 1j * params.epsilon) * u - f)


def phase_diagnostic(params: WaveguideParams, samples: int = 1000) -> Tuple[bool, float]:
    """Whether phi = i kappa |x| solves |grad phi|^2 = n, and the smallest mismatch."""
    y = np.linspace(-params.y_extent, params.y_extent, samples)
    _, _, n = fields(params, np.full_like(y, 5.0), y)
    gap = float(np.min(np.abs((1j * params.kappa) ** 2 - n)))
    return gap < 1e-8, gap


def coulomb_ratio(params: WaveguideParams, samples: int = 20001) -> Tuple[float, float]:
    """sup_{r>1} r (d_r n)_- / n over the strip, and lam^2 for comparison.

    With d_r n = (y/r) dn/dy the supremum is attained on the axis x = 0.
    """
    lam = params.lam
    s = np.linspace(0.0, params.y_max, samples)
    q, dq, _ = soliton(s)
    n = lam**2 * q**2 + 1.0 - 0.5 * lam**2
    # y = s/lam, so r (d_r n)_- = -y * 2 lam^3 Q Q' = -2 lam^2 s Q Q'
    decay = np.maximum(-2.0 * lam**2 * s * q * dq, 0.0)
    mask = s / lam > 1.0
    return float(np.max(decay[mask] / n[mask])), lam**2


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def gauss_panels(edges: Sequence[float], nodes: int) -> Tuple[Array, Array]:
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    t, w = leggauss(nodes)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * w).ravel()


def _x_edges(x_max: float) -> Array:
    bump_region = np.linspace(1.0, 2.0, 5)
    near = np.array([3.0, 4.0])
    if x_max <= 4.0:
        return np.concatenate([bump_region, near[near < x_max], [x_max]])
    decades = math.log10(x_max / 4.0)
    far = np.geomspace(4.0, x_max, max(2, int(math.ceil(8.0 * decades)) + 1))
    return np.concatenate([bump_region, near[:-1], far])


def tangential_integral(params: WaveguideParams, nodes: Optional[int] = None) -> float:
    """T(eps) = int |grad_tau u|^2 / (1 + r) over the plane.

    The integrand is even in x and y and vanishes for |x| < 1.
    """
    nodes = nodes or params.nodes
    ys, wy = gauss_panels(np.linspace(0.0, params.y_extent, int(math.ceil(params.y_max)) + 1), nodes)
    edges = _x_edges(params.x_extent)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs, wx = gauss_panels([lo, hi], nodes)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        ux, uy = field_gradient(params, X, Y)
        r = np.hypot(X, Y)
        tangential = np.abs(-Y * ux + X * uy) ** 2 / r**2
        total += float(wx @ (tangential / (1.0 + r)) @ wy)
    return 4.0 * total


def refined_tangential_integral(params: WaveguideParams, tolerance: float = 0.01) -> float:
    """T(eps) with a node-doubling check; raises QuadratureUnderResolved past ``tolerance``."""
    coarse = tangential_integral(params)
    fine = tangential_integral(params, 2 * params.nodes)
    if abs(fine - coarse) > tolerance * abs(fine):
        raise QuadratureUnderResolved(coarse, fine, tolerance)
    logger.debug(f"T(eps={params.epsilon:g}) = {fine:.10g} (coarse {coarse:.10g})")
    return fine


@dataclass
class BlowupReport:
    epsilon: List[float]
    T: List[float]
    slope: float
    intercept: float
    r2: float
    monotone: bool
    growth_ratio: float
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_blowup(epsilon: Sequence[float], T: Sequence[float]) -> BlowupReport:
    """Least-squares T = slope * ln(1/eps) + intercept."""
    eps = np.asarray(epsilon, dtype=float)
    values = np.asarray(T, dtype=float)
    log_inv = np.log(1.0 / eps)
    slope, intercept = np.polyfit(log_inv, values, 1)
    fitted = slope * log_inv + intercept
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    r2 = 1.0 - float(np.sum((values - fitted) ** 2)) / ss_tot if ss_tot > 0.0 else 1.0
    order = np.argsort(eps)[::-1]
    monotone = bool(np.all(np.diff(values[order]) > 0.0))
    ratio = float(values[order][-1] / values[order][0])
    return BlowupReport(
        epsilon=eps.tolist(),
        T=values.tolist(),
        slope=float(slope),
        intercept=float(intercept),
        r2=r2,
        monotone=monotone,
        growth_ratio=ratio,
        flags={"fit_quality": r2 >= 0.98, "doubling_growth": ratio >= 2.0},
    )


def tangential_blowup(
    params: WaveguideParams,
    epsilon_list: Sequence[float],
    tolerance: float = 0.01,
    mapper: Callable[[Callable, Iterable], Iterable] = map,
) -> BlowupReport:
    """T(eps) over a decreasing list and the ln(1/eps) fit.

    The strip length defaults to 20/eps_min for every entry.
    """
    eps = [float(e) for e in epsilon_list]
    if any(not 1e-5 < e < 1.0 for e in eps):
        raise PreconditionError(f"every epsilon must lie in (1e-5, 1), got {eps}")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise PreconditionError("epsilon_list must be strictly decreasing")
    x_max = params.x_max if params.x_max is not None else 20.0 / min(eps)
    if x_max < 20.0 / min(eps):
        raise PreconditionError(f"x_max = {x_max} is below 20/eps_min = {20.0 / min(eps)}")
    base = WaveguideParams(params.lam, eps[0], x_max, params.y_max, params.nodes)

    def run(e: float) -> float:
        return refined_tangential_integral(base.with_epsilon(e), tolerance)

    values = list(mapper(run, eps))
    report = fit_blowup(eps, values)
    logger.info(f"Tangential blow-up: slope {report.slope:.4g}, r2 {report.r2:.4f}")
    return report


def _disk_averages(density: Callable[[Array, Array], Array], radii: Array, nodes: int) -> Array:
    """(1/R) int_{B(R)} density for each R in ``radii`` (increasing, starting at the support edge 1)."""
    edges = np.concatenate([[0.0, 1.0], radii[radii > 1.0]])
    cumulative = np.zeros(len(edges))
    for k, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if hi <= 1.0:
            continue
        rs, wr = gauss_panels([lo, hi], nodes)
        samples = max(512, 64 * int(math.ceil(hi)))
        ts = 2.0 * np.pi * np.arange(samples) / samples
        R, T = np.meshgrid(rs, ts, indexing="ij")
        values = density(R * np.cos(T), R * np.sin(T))
        cumulative[k + 1] = cumulative[k] + float(wr @ (values.sum(axis=1) * rs)) * (2.0 * np.pi / samples)
    return cumulative[1:][edges[1:] >= 1.0] / edges[1:][edges[1:] >= 1.0]


@dataclass
class ConjugatedEnergy:
    value: float
    radius: float
    x_term: float
    y_term: float
    envelope_energy: float
    bound_reference: float

    def to_dict(self) -> dict:
        return asdict(self)


def conjugated_energy(params: WaveguideParams, R_max: float = 200.0, count: int = 64) -> ConjugatedEnergy:
    """sup_{R <= R_max} (1/R) int_{B(R)} |grad(Q theta)|^2; free of eps.

    ``envelope_energy`` is int (Q_lam')^2 dy = lam sqrt(2)/3.
    """
    radii = np.geomspace(1.0, R_max, count)
    lam = params.lam

    def x_density(x, y):
        q, _, _ = soliton(lam * y)
        return (q * bump(np.abs(x))[1]) ** 2

    def y_density(x, y):
        _, dq, _ = soliton(lam * y)
        return (lam * dq * bump(np.abs(x))[0]) ** 2

    x_part = _disk_averages(x_density, radii, params.nodes)
    y_part = _disk_averages(y_density, radii, params.nodes)
    total = x_part + y_part
    k = int(np.argmax(total))
    envelope = lam * SQRT2 / 3.0
    return ConjugatedEnergy(
        value=float(total[k]),
        radius=float(radii[k]),
        x_term=float(x_part[k]),
        y_term=float(y_part[k]),
        envelope_energy=envelope,
        bound_reference=1.0 + envelope,
    )


def _envelope_mass(lam: float, lower: Array, upper: Array) -> Array:
    """int_{lower}^{upper} Q(lam y)^2 dy in closed form."""
    scale = SQRT2 / lam
    return scale * (np.tanh(upper / scale) - np.tanh(lower / scale))


def source_besov_norm(params: WaveguideParams) -> float:
    """Dyadic norm sum_j [2^(j+1) int_C(j) |f|^2]^(1/2) of the analytic source.

    f lives on 1 < |x| < 2; for each x node the annulus cuts the strip in a
    y-interval whose envelope mass is integrated exactly.
    """
    xs, wx = gauss_panels(np.linspace(1.0, 2.0, 9), params.nodes)
    _, f, _ = fields(params, xs, np.zeros_like(xs))
    profile = np.abs(f) ** 2
    j_max = int(math.ceil(math.log2(max(params.y_extent, 2.0)))) + 1
    total = 0.0
    for j in range(0, j_max + 1):
        lower, upper = 2.0**j, 2.0 ** (j + 1)
        y_lo = np.sqrt(np.maximum(lower**2 - xs**2, 0.0))
        y_hi = np.sqrt(np.maximum(upper**2 - xs**2, 0.0))
        # both signs of x and of y
        mass = 4.0 * float(np.sum(wx * profile * _envelope_mass(params.lam, y_lo, y_hi)))
        total += math.sqrt(upper * mass)
    return total


def field_triple_norm(params: WaveguideParams, R_max: float = 200.0, count: int = 64) -> float:
    """sup_{1 <= R <= R_max} (1/R) int_{B(R)} |u|^2."""
    radii = np.geomspace(1.0, R_max, count)

    def density(x, y):
        u, _, _ = fields(params, x, y)
        return np.abs(u) ** 2

    return float(np.max(_disk_averages(density, radii, params.nodes)))


@dataclass
class SourceNorms:
    epsilon: List[float]
    besov: List[float]
    triple_u: List[float]
    stability_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def source_norms(
    params: WaveguideParams,
    epsilon_list: Sequence[float],
    R_max: float = 200.0,
    mapper: Callable[[Callable, Iterable], Iterable] = map,
) -> SourceNorms:
    """N(f_eps) and |||u_eps||| over the list, with max/min of N(f_eps)."""
    eps = [float(e) for e in epsilon_list]

    def run(e: float) -> Tuple[float, float]:
        p = params.with_epsilon(e)
        return source_besov_norm(p), field_triple_norm(p, R_max)

    results = list(mapper(run, eps))
    besov = [b for b, _ in results]
    return SourceNorms(
        epsilon=eps,
        besov=besov,
        triple_u=[t for _, t in results],
        stability_ratio=max(besov) / min(besov),
    )
