#!/usr/bin/env python3
# src/core/eikonal_rays.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/eikonal_rays.py
Bicharacteristics of |grad phi|^2 = n/lam launched from the origin, inversion
of the ray map x = X(t; q(alpha)), and the diagnostics of the phase g = phi/|x|.

The ray state carries (X1, X2, P1, P2, Phi, F) with

    X' = 2P,  P' = grad n / lam,  Phi' = 2n / lam,  F' = X . grad n / lam,

so |P|^2 - n(X)/lam is conserved, phi(X) = Phi, grad phi(X) = P and
X . P = Phi + F along every ray. All rays of a batch are stepped together
with classical RK4; rays in a batch may stop at different times.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .config import RayConfig
from .errors import CausticSuspected, NoConvergence, PreconditionError, SafetyRadiusExceeded
from .index_models import IndexModel

logger = logging.getLogger(__name__)

Array = np.ndarray

TRAJECTORY_HEADER = "t,x1,x2,p1,p2,phi"
QUERY_HEADER = "x1,x2,phi,gphi1,gphi2,t,alpha,jac"

ALPHA_STEP = 1e-6
MAX_NEWTON = 50

STATUS_OK = "ok"
STATUS_CAUSTIC = "caustic"
STATUS_NO_CONVERGENCE = "no_convergence"
STATUS_INSIDE = "inside_mollifier"


@dataclass(frozen=True)
class RaySettings:
    lam: float
    dt: float = 1e-3
    safety_radius: float = 1e3
    zone_substeps: int = 64

    def __post_init__(self) -> None:
        if not self.lam > 0.0:
            raise PreconditionError(f"ray lambda must be positive, got {self.lam}")
        if not self.dt > 0.0:
            raise PreconditionError(f"dt must be positive, got {self.dt}")

    @classmethod
    def from_config(cls, model: IndexModel, config: RayConfig) -> "RaySettings":
        lam = config.lam if config.lam is not None else model.lam
        return cls(lam, config.dt, config.safety_radius, config.zone_substeps)


class RayIntegrator:
    """Vectorized RK4 for a batch of rays in one index model."""

    def __init__(self, model: IndexModel, settings: RaySettings):
        self.model = model
        self.settings = settings
        n0 = float(model.n(0.0, 0.0))
        if not n0 > 0.0:
            raise PreconditionError(f"n(0) must be positive to launch rays, got {n0}")
        self.n0 = n0
        self.zone = 2.0 * model.r_moll

    def launch(self, alpha: Array) -> Array:
        """Initial states: X = 0, P = q sqrt(n(0)/lam), Phi = F = 0."""
        alpha = np.asarray(alpha, dtype=float)
        speed = math.sqrt(self.n0 / self.settings.lam)
        state = np.zeros((6, alpha.size))
        state[2] = speed * np.cos(alpha)
        state[3] = speed * np.sin(alpha)
        return state

    def rhs(self, s: Array) -> Array:
        lam = self.settings.lam
        n, g1, g2 = self.model.evaluate(s[0], s[1])
        return np.stack([
            2.0 * s[2],
            2.0 * s[3],
            g1 / lam,
            g2 / lam,
            2.0 * n / lam,
            (s[0] * g1 + s[1] * g2) / lam,
        ])

    def rk4(self, s: Array, h: Array) -> Array:
        k1 = self.rhs(s)
        k2 = self.rhs(s + 0.5 * h * k1)
        k3 = self.rhs(s + 0.5 * h * k2)
        k4 = self.rhs(s + h * k3)
        return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def step(self, s: Array, h: Array) -> Array:
        """One step of per-ray size h; rays near the mollifier take substeps."""
        if self.zone > 0.0 and np.any((np.hypot(s[0], s[1]) < self.zone) & (h > 0.0)):
            sub = h / self.settings.zone_substeps
            for _ in range(self.settings.zone_substeps):
                s = self.rk4(s, sub)
            return s
        return self.rk4(s, h)

    def _guard(self, s: Array, t: float) -> None:
        radius = np.hypot(s[0], s[1])
        if np.any(radius > self.settings.safety_radius):
            k = int(np.argmax(radius))
            raise SafetyRadiusExceeded(
                f"ray left the safety radius {self.settings.safety_radius:g} at t = {t:.4g} "
                f"(|X| = {radius[k]:.4g})"
            )

    def advance_to(self, alpha: Array, t_end: Array) -> Array:
        """States at per-ray end times; finished rays take zero-size steps."""
        t_end = np.asarray(t_end, dtype=float)
        s = self.launch(alpha)
        t = np.zeros_like(t_end)
        dt = self.settings.dt
        steps = int(math.ceil(float(np.max(t_end, initial=0.0)) / dt))
        for _ in range(steps):
            h = np.clip(t_end - t, 0.0, dt)
            s = self.step(s, h)
            t = t + h
        self._guard(s, float(np.max(t_end, initial=0.0)))
        return s

    def trajectories(self, alpha: Array, t_max: float, sample_every: int = 1) -> Tuple[Array, Array]:
        """Sampled times (S,) and states (S, 6, Nq) on a common clock."""
        dt = self.settings.dt
        steps = int(round(t_max / dt))
        s = self.launch(alpha)
        h = np.full(s.shape[1], dt)
        times, states = [0.0], [s]
        for k in range(1, steps + 1):
            s = self.step(s, h)
            if k % sample_every == 0 or k == steps:
                self._guard(s, k * dt)
                times.append(k * dt)
                states.append(s)
        return np.asarray(times), np.stack(states)


@dataclass
class Trajectory:
    times: Array
    states: Array

    def table(self) -> Array:
        """Rows t,x1,x2,p1,p2,phi."""
        return np.column_stack([self.times, self.states[:, :5]])


def integrate_ray(
    model: IndexModel,
    lam: float,
    q: Sequence[float],
    t_max: float,
    dt: float = 1e-3,
    sample_every: int = 1,
    safety_radius: float = 1e3,
    zone_substeps: int = 64,
) -> Trajectory:
    """Single ray launched in the direction of ``q``."""
    q = np.asarray(q, dtype=float)
    if not np.isclose(np.hypot(q[0], q[1]), 1.0):
        raise PreconditionError(f"launch direction must be a unit vector, got {q.tolist()}")
    integrator = RayIntegrator(model, RaySettings(lam, dt, safety_radius, zone_substeps))
    times, states = integrator.trajectories(np.array([math.atan2(q[1], q[0])]), t_max, sample_every)
    return Trajectory(times, states[:, :, 0])


@dataclass(eq=False)
class RayBundle:
    """Fan of Nq rays q_k = (cos a_k, sin a_k), a_k = 2 pi k / Nq."""

    model: IndexModel
    integrator: RayIntegrator
    alphas: Array
    times: Array
    states: Array

    @property
    def lam(self) -> float:
        return self.integrator.settings.lam

    @cached_property
    def _tree(self) -> cKDTree:
        points = np.stack([self.states[:, 0, :].ravel(), self.states[:, 1, :].ravel()], axis=1)
        return cKDTree(points)

    def nearest(self, points: Array) -> Tuple[Array, Array]:
        """(t, alpha) of the bundle sample closest to each point."""
        _, index = self._tree.query(points)
        sample, ray = np.divmod(index, self.alphas.size)
        return self.times[sample], self.alphas[ray]

    def conservation_drift(self) -> float:
        """max | |P|^2 - n(X)/lam | over all samples."""
        x1, x2, p1, p2 = (self.states[:, k, :] for k in range(4))
        return float(np.max(np.abs(p1**2 + p2**2 - self.model.n(x1, x2) / self.lam)))

    def phase_identity_gap(self) -> float:
        """max |X . P - Phi - F| over all samples."""
        x1, x2, p1, p2, phi, F = (self.states[:, k, :] for k in range(6))
        return float(np.max(np.abs(x1 * p1 + x2 * p2 - phi - F)))

    def escape_rates(self, t_min: float = 10.0) -> Optional[Tuple[float, float]]:
        """(min, max) of |X|/t over samples with t >= t_min."""
        late = self.times >= t_min
        if not np.any(late):
            return None
        radius = np.hypot(self.states[late, 0, :], self.states[late, 1, :])
        rate = radius / self.times[late][:, None]
        return float(rate.min()), float(rate.max())

    def escape_band(self) -> Tuple[float, float]:
        """[0.5 * 2 sqrt(n_min/lam), 1.5 * 2 sqrt(n_max/lam)]."""
        p_min, p_max = self.model.perturbation_bounds()
        n_min, n_max = self.model.lam + p_min, self.model.lam + p_max
        return math.sqrt(n_min / self.lam), 3.0 * math.sqrt(n_max / self.lam)

    def reflection_gap(self) -> float:
        """max distance between ray a_k and the mirror image of ray -a_k."""
        mirror = (-np.arange(self.alphas.size)) % self.alphas.size
        x1, x2 = self.states[:, 0, :], self.states[:, 1, :]
        return float(np.max(np.hypot(x1 - x1[:, mirror], x2 + x2[:, mirror])))

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(self.times, self.states[:, :, k])


def build_bundle(model: IndexModel, config: RayConfig) -> RayBundle:
    """Integrate the launch fan of ``config.Nq`` rays up to ``config.t_max``."""
    if config.Nq < 4:
        raise PreconditionError(f"Nq must be >= 4, got {config.Nq}")
    integrator = RayIntegrator(model, RaySettings.from_config(model, config))
    alphas = 2.0 * np.pi * np.arange(config.Nq) / config.Nq
    logger.info(f"Integrating {config.Nq} rays to t = {config.t_max:g} (dt = {config.dt:g})")
    times, states = integrator.trajectories(alphas, config.t_max, config.sample_every)
    return RayBundle(model, integrator, alphas, times, states)


# ---------------------------------------------------------------------------
# Inversion of the ray map
# ---------------------------------------------------------------------------

@dataclass
class PhaseResult:
    points: Array
    phi: Array
    grad: Array
    t: Array
    alpha: Array
    jac: Array
    F: Array
    status: List[str]

    @property
    def ok(self) -> Array:
        return np.array([s == STATUS_OK for s in self.status])

    def table(self) -> Array:
        """Rows x1,x2,phi,gphi1,gphi2,t,alpha,jac."""
        return np.column_stack([self.points, self.phi, self.grad, self.t, self.alpha, self.jac])

    def failures(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for s in self.status:
            if s != STATUS_OK:
                counts[s] = counts.get(s, 0) + 1
        return counts


class EikonalField:
    """phi and grad phi at arbitrary points by Newton inversion on (t, alpha)."""

    def __init__(self, bundle: RayBundle, tol: float = 1e-10, max_iter: int = MAX_NEWTON):
        self.bundle = bundle
        self.tol = tol
        self.max_iter = max_iter

    def _solve(self, points: Array) -> Tuple[PhaseResult, Dict[int, Tuple[float, int, float]]]:
        """Batched Newton; the second value records (jacobian, iterations, residual) of failures."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = len(points)
        radius = np.hypot(points[:, 0], points[:, 1])
        status = np.full(k, STATUS_NO_CONVERGENCE, dtype=object)
        status[radius <= self.bundle.model.r_moll] = STATUS_INSIDE
        result = PhaseResult(
            points, np.full(k, np.nan), np.full((k, 2), np.nan), np.full(k, np.nan),
            np.full(k, np.nan), np.full(k, np.nan), np.full(k, np.nan), [],
        )
        failures: Dict[int, Tuple[float, int, float]] = {}
        active = np.flatnonzero(status != STATUS_INSIDE)
        if active.size == 0:
            result.status = status.tolist()
            return result, failures

        t, alpha = self.bundle.nearest(points[active])
        t = np.maximum(t, self.bundle.integrator.settings.dt)
        tolerance = self.tol * (1.0 + radius[active])
        integrator = self.bundle.integrator
        residual = np.full(active.size, np.inf)

        for iteration in range(1, self.max_iter + 1):
            m = active.size
            batch_alpha = np.concatenate([alpha, alpha + ALPHA_STEP, alpha - ALPHA_STEP])
            s = integrator.advance_to(batch_alpha, np.tile(t, 3))
            centre, plus, minus = s[:, :m], s[:, m:2 * m], s[:, 2 * m:]
            r1 = centre[0] - points[active, 0]
            r2 = centre[1] - points[active, 1]
            residual = np.hypot(r1, r2)
            j11, j21 = 2.0 * centre[2], 2.0 * centre[3]
            j12 = (plus[0] - minus[0]) / (2.0 * ALPHA_STEP)
            j22 = (plus[1] - minus[1]) / (2.0 * ALPHA_STEP)
            det = j11 * j22 - j12 * j21

            caustic = det <= 0.0
            done = (residual <= tolerance) & ~caustic
            for local in np.flatnonzero(done | caustic):
                index = active[local]
                result.t[index], result.alpha[index], result.jac[index] = t[local], alpha[local], det[local]
                if caustic[local]:
                    status[index] = STATUS_CAUSTIC
                    failures[index] = (float(det[local]), iteration, float(residual[local]))
                    continue
                status[index] = STATUS_OK
                result.phi[index] = centre[4, local]
                result.grad[index] = centre[2:4, local]
                result.F[index] = centre[5, local]

            keep = ~(done | caustic)
            if not np.any(keep):
                active = active[:0]
                break
            active, t, alpha = active[keep], t[keep], alpha[keep]
            tolerance, residual = tolerance[keep], residual[keep]
            r1, r2, det = r1[keep], r2[keep], det[keep]
            j11, j12, j21, j22 = j11[keep], j12[keep], j21[keep], j22[keep]
            d_t = -(j22 * r1 - j12 * r2) / det
            d_alpha = -(-j21 * r1 + j11 * r2) / det
            # at most half a radian in alpha, and t stays positive
            shrink = np.where(d_t < 0.0, 0.5 * t / np.maximum(-d_t, 1e-300), np.inf)
            damping = np.minimum.reduce([np.ones_like(t), 0.5 / np.maximum(np.abs(d_alpha), 1e-300), shrink])
            t = t + damping * d_t
            alpha = alpha + damping * d_alpha

        for local, index in enumerate(active):
            failures[index] = (float("nan"), self.max_iter, float(residual[local]))
            result.t[index], result.alpha[index] = t[local], alpha[local]
        result.status = status.tolist()
        return result, failures

    def query(self, points: Array) -> PhaseResult:
        """phi = Phi(t; q), grad phi = P(t; q) per point; failures are flagged, not raised."""
        result, _ = self._solve(points)
        failed = result.failures()
        if failed:
            logger.warning(f"Ray inversion failed at {sum(failed.values())} point(s): {failed}")
        return result

    def invert(self, x: Sequence[float]) -> Tuple[float, Array, float]:
        """(t, q, jacobian_det) with X(t; q) = x."""
        x = np.asarray(x, dtype=float)
        if not np.hypot(x[0], x[1]) > self.bundle.model.r_moll:
            raise PreconditionError(
                f"query {x.tolist()} lies inside the mollifier radius {self.bundle.model.r_moll:g}"
            )
        result, failures = self._solve(x[None, :])
        status = result.status[0]
        if status == STATUS_CAUSTIC:
            raise CausticSuspected(x.tolist(), failures[0][0])
        if status == STATUS_NO_CONVERGENCE:
            _, iterations, residual = failures[0]
            raise NoConvergence(iterations, residual)
        a = float(result.alpha[0])
        return float(result.t[0]), np.array([math.cos(a), math.sin(a)]), float(result.jac[0])


def invert(field: EikonalField, x: Sequence[float]) -> Tuple[float, Array, float]:
    return field.invert(x)


def phase_field(field: EikonalField, points: Array) -> PhaseResult:
    return field.query(points)


def curl_check(gradient_field: Callable[[Array], Array], radius: float, samples: int = 256) -> float:
    """Circulation of the field around |x| = radius divided by the loop length."""
    theta = 2.0 * np.pi * np.arange(samples) / samples
    points = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    values = np.asarray(gradient_field(points), dtype=float)
    tangential = -np.sin(theta) * values[:, 0] + np.cos(theta) * values[:, 1]
    return float(np.mean(tangential))


def field_gradient(field: EikonalField) -> Callable[[Array], Array]:
    """grad phi as a callable for ``curl_check``; raises on any failed point."""

    def evaluate(points: Array) -> Array:
        result = field.query(points)
        if not np.all(result.ok):
            raise PreconditionError(f"loop crosses failed inversions: {result.failures()}")
        return result.grad

    return evaluate


# ---------------------------------------------------------------------------
# Phase diagnostics
# ---------------------------------------------------------------------------

@dataclass
class HJReport:
    g_min: float
    g_max: float
    g_bounds: Tuple[float, float]
    within_bounds: bool
    gradient_sup: float
    radial_decay_sup: float
    delta: float
    delta_source: str
    g_inf: List[float]
    theta: List[float]
    hjlim_residual: float
    ratio_bounds: Optional[Tuple[float, float]]
    hj_residual: float
    tangential_gap: float
    f_identity_gap: float
    third_derivative_proxy: float
    f_table: List[Tuple[float, float, float, float]] = field(default_factory=list)
    failures: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _decay_exponent(model: IndexModel, declared: Optional[float]) -> Tuple[float, str]:
    """delta with |d_r p| <= C r^(-1-delta): declared, fitted, or 1 when d_r p vanishes."""
    if declared is not None:
        return float(declared), "declared"
    if model.decay_exponent() is not None:
        return float(model.decay_exponent()), "declared"
    radii = np.geomspace(2.0, 50.0, 24)
    theta = 2.0 * np.pi * np.arange(64) / 64
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    x1, x2 = rr * np.cos(tt), rr * np.sin(tt)
    _, g1, g2 = model.perturbation(x1, x2)
    radial = np.max(np.abs(x1 * g1 + x2 * g2) / rr, axis=1)
    if np.max(radial) <= 1e-12:
        return 1.0, "radially-constant"
    live = radial > 0.0
    slope, _ = np.polyfit(np.log(radii[live]), np.log(radial[live]), 1)
    return float(-slope - 1.0), "fitted"


def hj_report(
    field: EikonalField,
    radii: Sequence[float],
    theta_samples: int = 64,
    delta: Optional[float] = None,
    slack: float = 1e-6,
) -> HJReport:
    """Measure g = phi/|x| on the (radii x theta) lattice.

    The limit profile g_inf is read at the largest radius.
    """
    model = field.bundle.model
    lam = field.bundle.lam
    radii = np.sort(np.asarray(radii, dtype=float))
    theta = 2.0 * np.pi * np.arange(theta_samples) / theta_samples
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    points = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    result = field.query(points)

    shape = rr.shape
    phi = result.phi.reshape(shape)
    p1, p2 = result.grad[:, 0].reshape(shape), result.grad[:, 1].reshape(shape)
    F = result.F.reshape(shape)
    c, s = np.cos(tt), np.sin(tt)
    g = phi / rr
    radial_grad = c * p1 + s * p2
    tangential_grad = -s * p1 + c * p2

    p_min, p_max = model.perturbation_bounds()
    bounds = (math.sqrt(1.0 + p_min / lam), math.sqrt(1.0 + p_max / lam))
    g_min, g_max = float(np.nanmin(g)), float(np.nanmax(g))

    gradient_sup = float(np.nanmax(np.hypot(radial_grad - g, tangential_grad)))
    d_r_g = (radial_grad - g) / rr
    delta_value, delta_source = _decay_exponent(model, delta)
    radial_decay_sup = float(np.nanmax(rr ** (1.0 + delta_value) * np.abs(d_r_g)))

    f_over_r2 = F / rr**2
    phase_over_r2 = (rr * radial_grad - phi) / rr**2
    f_identity_gap = float(np.nanmax(np.abs(f_over_r2 - phase_over_r2)))

    g_inf = g[-1]
    dtheta = 2.0 * np.pi / theta_samples
    dg = (np.roll(g_inf, -1) - np.roll(g_inf, 1)) / (2.0 * dtheta)
    d3g = (np.roll(g_inf, -2) - 2.0 * np.roll(g_inf, -1) + 2.0 * np.roll(g_inf, 1) - np.roll(g_inf, 2)) / (
        2.0 * dtheta**3
    )
    if model.limit is not None:
        n_inf = model.limit.eval(theta)
        dn_inf = model.limit.d1(theta)
    else:
        n_inf = model.n(radii[-1] * np.cos(theta), radii[-1] * np.sin(theta))
        dn_inf = (np.roll(n_inf, -1) - np.roll(n_inf, 1)) / (2.0 * dtheta)
    hjlim_residual = float(np.nanmax(np.abs(g_inf**2 + dg**2 - n_inf / lam)))

    resolved = np.abs(dg) > 1e-6
    ratio_bounds = None
    if np.any(resolved):
        ratio = np.abs(dn_inf[resolved]) / np.abs(dg[resolved])
        ratio_bounds = (float(np.nanmin(ratio)), float(np.nanmax(ratio)))

    n_lattice = model.n(rr * c, rr * s)
    hj_residual = float(np.nanmax(np.abs(p1**2 + p2**2 - n_lattice / lam)))
    tangential_gap = float(np.nanmax(np.abs(np.abs(tangential_grad[-1]) - np.abs(dg))))

    f_table = [
        (float(r), float(np.nanmax(np.abs(f_over_r2[i]))), float(np.nanmax(np.abs(phase_over_r2[i]))),
         float(np.nanmax(np.abs(d_r_g[i]))))
        for i, r in enumerate(radii)
    ]
    report = HJReport(
        g_min=g_min,
        g_max=g_max,
        g_bounds=bounds,
        within_bounds=bool(bounds[0] - slack <= g_min and g_max <= bounds[1] + slack),
        gradient_sup=gradient_sup,
        radial_decay_sup=radial_decay_sup,
        delta=delta_value,
        delta_source=delta_source,
        g_inf=g_inf.tolist(),
        theta=theta.tolist(),
        hjlim_residual=hjlim_residual,
        ratio_bounds=ratio_bounds,
        hj_residual=hj_residual,
        tangential_gap=tangential_gap,
        f_identity_gap=f_identity_gap,
        third_derivative_proxy=float(np.nanmax(np.abs(d3g))),
        f_table=f_table,
        failures=result.failures(),
    )
    logger.info(
        f"HJ report: g in [{g_min:.6f}, {g_max:.6f}], limit residual {hjlim_residual:.3e}, "
        f"delta {delta_value:g} ({delta_source})"
    )
    return report
