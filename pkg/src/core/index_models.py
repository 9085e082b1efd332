#!/usr/bin/env python3
# src/core/index_models.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/index_models.py
Refraction-index models n(x) = lambda + p(x) with analytic gradients, their
angular limits n_inf(theta) at infinity, and sampled checks of the structural
assumptions the estimates rely on.

All evaluators are vectorized over numpy arrays of Cartesian coordinates.
Models whose perturbation is singular at the origin are mollified: inside
``r_moll`` the perturbation is blended (quintic smoothstep on
[r_moll/2, r_moll]) to its angular mean on the circle |x| = r_moll, so n is C^2
everywhere and constant near the origin.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .config import ModelConfig, ProfileConfig
from .errors import PreconditionError
from .waveguide import soliton

logger = logging.getLogger(__name__)

Array = np.ndarray
TestField = Callable[[Array, Array], Tuple[Array, Array, Array]]

_MEAN_SAMPLES = 256


# ---------------------------------------------------------------------------
# Angular profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularProfile:
    """n_inf(theta) = mean + sum_k (cos[k-1] cos k theta + sin[k-1] sin k theta).

    ``n0`` defaults to mean - sum(|a_k| + |b_k|), a guaranteed lower bound.
    """

    mean: float
    cos: Tuple[float, ...] = ()
    sin: Tuple[float, ...] = ()
    n0: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))
        bound = self.n0
        if math.isnan(bound):
            bound = self.mean - sum(abs(c) for c in self.cos + self.sin)
            object.__setattr__(self, "n0", bound)
        if not bound > 0.0:
            raise PreconditionError(f"angular profile must be positive, lower bound n0 = {bound}")

    @classmethod
    def constant(cls, value: float) -> "AngularProfile":
        return cls(mean=float(value))

    @classmethod
    def from_config(cls, config: ProfileConfig) -> "AngularProfile":
        return cls(
            mean=config.mean,
            cos=tuple(config.cos),
            sin=tuple(config.sin),
            n0=float("nan") if config.n0 is None else config.n0,
        )

    @property
    def is_constant(self) -> bool:
        return not any(self.cos) and not any(self.sin)

    def derivative(self, theta, order: int = 0) -> Array:
        """Analytic derivative of the given order (0..3) in theta."""
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.mean if order == 0 else 0.0)
        terms = max(len(self.cos), len(self.sin))
        for k in range(1, terms + 1):
            a = self.cos[k - 1] if k <= len(self.cos) else 0.0
            b = self.sin[k - 1] if k <= len(self.sin) else 0.0
            c, s = np.cos(k * theta), np.sin(k * theta)
            if order == 0:
                out = out + a * c + b * s
            elif order == 1:
                out = out + k * (b * c - a * s)
            elif order == 2:
                out = out - k**2 * (a * c + b * s)
            elif order == 3:
                out = out + k**3 * (a * s - b * c)
            else:
                raise ValueError(f"derivative order must be 0..3, got {order}")
        return out

    def eval(self, theta) -> Array:
        return self.derivative(theta, 0)

    def d1(self, theta) -> Array:
        return self.derivative(theta, 1)

    def d2(self, theta) -> Array:
        return self.derivative(theta, 2)

    def d3(self, theta) -> Array:
        return self.derivative(theta, 3)

    def critical_angles(self, samples: int = 4096) -> Array:
        """Zeros of d1 on [0, 2 pi), located by sign change and refined by secant."""
        if self.is_constant:
            return np.empty(0)
        theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
        d = self.d1(theta)
        nxt = np.roll(d, -1)
        idx = np.nonzero((d == 0.0) | (d * nxt < 0.0))[0]
        step = 2.0 * np.pi / samples
        roots = []
        for i in idx:
            if d[i] == 0.0:
                roots.append(theta[i])
                continue
            lo, hi = theta[i], theta[i] + step
            flo, fhi = d[i], nxt[i]
            for _ in range(60):
                mid = lo - flo * (hi - lo) / (fhi - flo)
                fm = float(self.d1(mid))
                if fm == 0.0 or abs(hi - lo) < 1e-15:
                    break
                if flo * fm < 0.0:
                    hi, fhi = mid, fm
                else:
                    lo, flo = mid, fm
            roots.append(mid % (2.0 * np.pi))
        return np.sort(np.asarray(roots))


def angular_eval(profile: AngularProfile, theta: float) -> Tuple[float, float, float]:
    """(n_inf, d n_inf, d^2 n_inf) at theta."""
    return (
        float(profile.eval(theta)),
        float(profile.d1(theta)),
        float(profile.d2(theta)),
    )


# ---------------------------------------------------------------------------
# Index models
# ---------------------------------------------------------------------------

def _blend(r: Array, a: float, b: float) -> Tuple[Array, Array]:
    """Quintic smoothstep on [a, b] and its radial derivative."""
    s = np.clip((r - a) / (b - a), 0.0, 1.0)
    chi = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    dchi = 30.0 * s**2 * (1.0 - s) ** 2 / (b - a)
    return chi, dchi


class IndexModel(ABC):
    """n(x) = lam + p(x) with analytic gradient.

    Subclasses implement ``_raw`` (the unmollified perturbation and gradient,
    evaluated at points with radius ``r > 0``).
    """

    name = "index"

    def __init__(
        self,
        lam: float,
        r_moll: float = 0.0,
        gamma: float = 0.0,
        delta: Optional[float] = None,
        n1_share: float = 0.0,
        limit: Optional[AngularProfile] = None,
    ):
        if not lam > 0.0:
            raise PreconditionError(f"lambda must be positive, got {lam}")
        if r_moll < 0.0:
            raise PreconditionError(f"r_moll must be >= 0, got {r_moll}")
        if not 0.0 <= n1_share <= 1.0:
            raise PreconditionError(f"n1_share must lie in [0, 1], got {n1_share}")
        self.lam = float(lam)
        self.r_moll = float(r_moll)
        self.gamma = float(gamma)
        self.delta = None if delta is None else float(delta)
        self.n1_share = float(n1_share)
        self.limit = limit

    def __repr__(self) -> str:
        return f"{type(self).__name__}(lam={self.lam}, r_moll={self.r_moll})"

    @abstractmethod
    def _raw(self, x1: Array, x2: Array, r: Array) -> Tuple[Array, Array, Array]:
        """Unmollified (p, dp/dx1, dp/dx2)."""

    @cached_property
    def _p_mean(self) -> float:
        theta = 2.0 * np.pi * np.arange(_MEAN_SAMPLES) / _MEAN_SAMPLES
        x1 = self.r_moll * np.cos(theta)
        x2 = self.r_moll * np.sin(theta)
        p, _, _ = self._raw(x1, x2, np.full_like(x1, self.r_moll))
        return float(np.mean(p))

    def perturbation(self, x1, x2) -> Tuple[Array, Array, Array]:
        """Mollified (p, dp/dx1, dp/dx2)."""
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        r = np.hypot(x1, x2)
        if self.r_moll <= 0.0:
            return self._raw(x1, x2, np.where(r > 0.0, r, 1.0))

        inner = 0.5 * self.r_moll
        core = r < inner
        e1 = np.where(core, self.r_moll, x1)
        e2 = np.where(core, 0.0, x2)
        re = np.where(core, self.r_moll, r)
        p, d1, d2 = self._raw(e1, e2, re)

        chi, dchi = _blend(re, inner, self.r_moll)
        dev = p - self._p_mean
        zone = (re < self.r_moll) & ~core
        p = np.where(zone, self._p_mean + chi * dev, p)
        d1 = np.where(zone, chi * d1 + dchi * dev * e1 / re, d1)
        d2 = np.where(zone, chi * d2 + dchi * dev * e2 / re, d2)

        p = np.where(core, self._p_mean, p)
        d1 = np.where(core, 0.0, d1)
        d2 = np.where(core, 0.0, d2)
        return p, d1, d2

    def evaluate(self, x1, x2) -> Tuple[Array, Array, Array]:
        """(n, dn/dx1, dn/dx2) at the given points."""
        p, d1, d2 = self.perturbation(x1, x2)
        return self.lam + p, d1, d2

    def n(self, x1, x2) -> Array:
        return self.evaluate(x1, x2)[0]

    def eval(self, x: Sequence[float]) -> Tuple[float, Array]:
        n, g1, g2 = self.evaluate(x[0], x[1])
        return float(n), np.array([float(g1), float(g2)])

    def split(self, x1, x2) -> Tuple[Array, Array]:
        """(n1, n2) with n1 = n1_share * n and n2 the rest."""
        n = self.n(x1, x2)
        n1 = self.n1_share * n
        return n1, n - n1

    def lower_bound(self) -> float:
        """A positive n0 with n >= n0 everywhere."""
        return float(self.limit.n0) if self.limit is not None else self._sampled_range()[0] + self.lam

    def perturbation_bounds(self) -> Tuple[float, float]:
        """(min p, max p) over the plane."""
        return self._sampled_range()

    def decay_exponent(self) -> Optional[float]:
        """Declared delta with |d_r p| <= C r^(-1-delta), if any."""
        return self.delta

    def _sampled_range(self) -> Tuple[float, float]:
        radii = np.concatenate([[0.0], np.geomspace(max(self.r_moll, 1e-3) * 0.5, 1e4, 160)])
        theta = 2.0 * np.pi * np.arange(256) / 256
        rr, tt = np.meshgrid(radii, theta, indexing="ij")
        p, _, _ = self.perturbation(rr * np.cos(tt), rr * np.sin(tt))
        return float(p.min()), float(p.max())


class ConstantIndex(IndexModel):
    """n = lam everywhere."""

    name = "constant"

    def __init__(self, lam: float = 1.0, n1_share: float = 0.0):
        super().__init__(lam, n1_share=n1_share, limit=AngularProfile.constant(lam))

    def _raw(self, x1, x2, r):
        zero = np.zeros_like(r)
        return zero, zero.copy(), zero.copy()

    def lower_bound(self) -> float:
        return self.lam

    def perturbation_bounds(self) -> Tuple[float, float]:
        return 0.0, 0.0


class TiltIndex(IndexModel):
    """n = lam - x1/|x|, a purely angular tilt with limit lam - cos(theta).

    The eikonal problem |grad phi|^2 = 1 + p/lam has the exact solution
    phi = a|x| - b x1 which ``closed_form_phase`` returns.
    """

    name = "saito_tilt"

    def __init__(self, lam: float = 10.0, r_moll: float = 0.1, n1_share: float = 0.0):
        if not lam > 1.0:
            raise PreconditionError(f"tilt model needs lambda > 1 to keep n positive, got {lam}")
        if not r_moll > 0.0:
            raise PreconditionError("tilt model is singular at the origin and needs r_moll > 0")
        super().__init__(
            lam, r_moll=r_moll, n1_share=n1_share, limit=AngularProfile(mean=lam, cos=(-1.0,))
        )

    def _raw(self, x1, x2, r):
        r3 = r**3
        return -x1 / r, -(x2**2) / r3, x1 * x2 / r3

    def lower_bound(self) -> float:
        return self.lam - 1.0

    def perturbation_bounds(self) -> Tuple[float, float]:
        return -1.0, 1.0

    def closed_form_coefficients(self) -> Tuple[float, float]:
        plus = math.sqrt(1.0 + 1.0 / self.lam)
        minus = math.sqrt(1.0 - 1.0 / self.lam)
        return 0.5 * (plus + minus), 0.5 * (plus - minus)

    def closed_form_phase(self, x1, x2) -> Tuple[Array, Array, Array]:
        """(phi, dphi/dx1, dphi/dx2) of phi = a|x| - b x1, for x != 0."""
        a, b = self.closed_form_coefficients()
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        r = np.hypot(x1, x2)
        return a * r - b * x1, a * x1 / r - b, a * x2 / r


class AngularLimitIndex(IndexModel):
    """n = n_inf(theta) (1 + gamma |x|^-delta); lam is the profile mean."""

    name = "angular_limit"

    def __init__(
        self,
        profile: AngularProfile,
        gamma: float = 0.0,
        delta: float = 1.0,
        r_moll: float = 0.1,
        n1_share: float = 0.0,
    ):
        if gamma < 0.0:
            raise PreconditionError(f"gamma must be >= 0, got {gamma}")
        if not delta > 0.0:
            raise PreconditionError(f"delta must be positive, got {delta}")
        needs_mollifier = gamma > 0.0 or not profile.is_constant
        if needs_mollifier and not r_moll > 0.0:
            raise PreconditionError("angular model is singular at the origin and needs r_moll > 0")
        super().__init__(
            profile.mean,
            r_moll=r_moll,
            gamma=gamma,
            delta=delta,
            n1_share=n1_share,
            limit=profile,
        )

    def _raw(self, x1, x2, r):
        profile = self.limit
        theta = np.arctan2(x2, x1)
        ninf = profile.eval(theta)
        dninf = profile.d1(theta)
        radial = 1.0 + self.gamma * r ** (-self.delta)
        dradial = -self.delta * self.gamma * r ** (-self.delta - 1.0)
        n = ninf * radial
        # grad n = (d_theta n_inf) theta_hat / r * radial + n_inf * radial' * x_hat
        tang = dninf * radial / r
        rad = ninf * dradial
        g1 = -tang * x2 / r + rad * x1 / r
        g2 = tang * x1 / r + rad * x2 / r
        return n - self.lam, g1, g2

    def decay_exponent(self) -> Optional[float]:
        return self.delta if self.gamma > 0.0 else None


class WaveguideIndex(IndexModel):
    """n = lam_g^2 Q(lam_g y)^2 + 1 - lam_g^2/2 with Q = sech(s/sqrt 2).

    ``lam`` is 1 and the angular limit is the constant 1 - lam_g^2/2.
    """

    name = "waveguide"

    def __init__(self, guide_lambda: float = 0.3, n1_share: float = 0.0):
        if not 0.0 < guide_lambda < 0.5:
            raise PreconditionError(
                f"waveguide lambda must lie in (0, 1/2), got {guide_lambda}"
            )
        self.guide_lambda = float(guide_lambda)
        floor = 1.0 - 0.5 * guide_lambda**2
        super().__init__(1.0, n1_share=n1_share, limit=AngularProfile.constant(floor))

    def _raw(self, x1, x2, r):
        lg = self.guide_lambda
        q, dq, _ = soliton(lg * x2)
        p = lg**2 * (q**2 - 0.5)
        return p, np.zeros_like(p), 2.0 * lg**3 * q * dq

    def lower_bound(self) -> float:
        return 1.0 - 0.5 * self.guide_lambda**2

    def perturbation_bounds(self) -> Tuple[float, float]:
        half = 0.5 * self.guide_lambda**2
        return -half, half


def build_model(config: ModelConfig) -> IndexModel:
    """Instantiate a catalog model from its configuration."""
    profile = AngularProfile.from_config(config.profile) if config.profile is not None else None
    if config.id == "constant":
        return ConstantIndex(lam=config.lam if config.lam is not None else 1.0, n1_share=config.n1_share)
    if config.id == "saito_tilt":
        return TiltIndex(
            lam=config.lam if config.lam is not None else 10.0,
            r_moll=config.r_moll,
            n1_share=config.n1_share,
        )
    if config.id == "angular_limit":
        if profile is None:
            raise PreconditionError("angular_limit model needs a profile")
        return AngularLimitIndex(
            profile,
            gamma=config.gamma,
            delta=config.delta if config.delta is not None else 1.0,
            r_moll=config.r_moll,
            n1_share=config.n1_share,
        )
    if config.id == "waveguide":
        return WaveguideIndex(
            guide_lambda=config.lam if config.lam is not None else 0.3,
            n1_share=config.n1_share,
        )
    raise PreconditionError(f"unknown model id '{config.id}'")


# ---------------------------------------------------------------------------
# Structural assumption checks
# ---------------------------------------------------------------------------

def _annulus_lattice(j: int, samples: int) -> Tuple[Array, Array]:
    """Nested polar lattice of {2^j <= |x| <= 2^(j+1)}; doubling samples refines it."""
    radii = 2.0 ** (j + np.arange(samples + 1) / samples)
    theta = 2.0 * np.pi * np.arange(samples) / samples
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    return rr * np.cos(tt), rr * np.sin(tt)


def beta_table(
    model: IndexModel, j_min: int, j_max: int, samples_per_annulus: int = 64
) -> List[Tuple[int, float]]:
    """Per-annulus sup of (x . grad n)_- / n on the lattice."""
    if j_min > j_max:
        raise PreconditionError(f"j_min ({j_min}) must not exceed j_max ({j_max})")
    if samples_per_annulus < 64:
        raise PreconditionError(f"samples_per_annulus must be >= 64, got {samples_per_annulus}")
    table = []
    for j in range(j_min, j_max + 1):
        x1, x2 = _annulus_lattice(j, samples_per_annulus)
        n, g1, g2 = model.evaluate(x1, x2)
        if np.any(n <= 0.0):
            raise PreconditionError(f"index is not positive on annulus j={j}")
        negative = np.maximum(-(x1 * g1 + x2 * g2), 0.0)
        table.append((j, float(np.max(negative / n))))
    return table


def beta_coefficient(
    model: IndexModel, j_min: int, j_max: int, samples_per_annulus: int = 64
) -> float:
    """2 * sum_j sup_{C(j)} (x . grad n)_- / n, truncated to [j_min, j_max]."""
    table = beta_table(model, j_min, j_max, samples_per_annulus)
    return 2.0 * math.fsum(value for _, value in table)


def default_test_fields() -> List[TestField]:
    """Twenty smooth compactly concentrated fields (u, du/dx1, du/dx2)."""
    fields: List[TestField] = []
    for k in range(20):
        angle = 2.0 * np.pi * k / 20
        center = (1.5 * (k % 3) * np.cos(angle), 1.5 * (k % 3) * np.sin(angle))
        width = 0.6 + 0.1 * (k % 5)
        wave = (0.5 * (k % 4) * np.cos(3 * angle), 0.5 * (k % 4) * np.sin(3 * angle))
        fields.append(_gaussian_wave(center, width, wave))
    return fields


def _gaussian_wave(center, width, wave) -> TestField:
    c1, c2 = center
    k1, k2 = wave

    def field(x1: Array, x2: Array) -> Tuple[Array, Array, Array]:
        d1, d2 = x1 - c1, x2 - c2
        u = np.exp(-(d1**2 + d2**2) / width**2 + 1j * (k1 * x1 + k2 * x2))
        return u, u * (-2.0 * d1 / width**2 + 1j * k1), u * (-2.0 * d2 / width**2 + 1j * k2)

    return field


@dataclass
class AssumptionReport:
    beta: float
    beta_table: List[Tuple[int, float]]
    j_range: Tuple[int, int]
    c0_estimate: float
    gamma_fit: float
    delta_fit: Optional[float]
    a8_margin: float  # min over the lattice of the tangential-control slack
    p_gradient_constant: float
    n_sup: float
    n_inf: float
    fields_used: int

    def to_dict(self) -> dict:
        data = asdict(self)
        data["beta_table"] = [{"j": j, "sup": v} for j, v in self.beta_table]
        data["j_range"] = list(self.j_range)
        return data


def assumption_report(
    model: IndexModel,
    profile: Optional[AngularProfile] = None,
    radii: Sequence[float] = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0),
    test_fields: Optional[Sequence[TestField]] = None,
    theta_samples: int = 256,
    beta_tilde: float = 0.5,
    samples_per_annulus: int = 64,
) -> AssumptionReport:
    """Measure the structural constants of ``model`` on a polar lattice."""
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(np.diff(radii) <= 0.0) or radii[0] <= 0.0:
        raise PreconditionError("radii must be non-empty, positive and increasing")
    profile = profile or model.limit
    if profile is None:
        raise PreconditionError("assumption report needs an angular limit profile")

    theta = 2.0 * np.pi * np.arange(theta_samples) / theta_samples
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    x1, x2 = rr * np.cos(tt), rr * np.sin(tt)
    n, g1, g2 = model.evaluate(x1, x2)
    ninf = profile.eval(tt)

    deviation = np.abs(n - ninf) / ninf
    gamma_fit = float(np.max(deviation * rr))
    shell_dev = deviation.max(axis=1)
    delta_fit: Optional[float] = None
    usable = shell_dev > 1e-300
    if np.count_nonzero(usable) >= 2:
        slope, _ = np.polyfit(np.log(radii[usable]), np.log(shell_dev[usable]), 1)
        delta_fit = float(-slope)

    # angular derivatives: d_theta n = -x2 dn/dx1 + x1 dn/dx2
    dtheta_n = -x2 * g1 + x1 * g2
    dtheta_ninf = profile.d1(tt)
    decay = delta_fit if delta_fit is not None else (model.decay_exponent() or 1.0)
    cross = np.minimum((dtheta_n - dtheta_ninf) * dtheta_ninf, 0.0)
    margin = beta_tilde * dtheta_ninf**2 + n * gamma_fit / rr**decay + cross
    a8_margin = float(np.min(margin))

    _, dp1, dp2 = model.perturbation(x1, x2)
    p_gradient_constant = float(np.max(rr * np.hypot(dp1, dp2)))

    j_min = int(math.floor(math.log2(radii[0])))
    j_max = max(j_min, int(math.floor(math.log2(radii[-1]))) - 1)
    table = beta_table(model, j_min, j_max, samples_per_annulus)
    beta = 2.0 * math.fsum(v for _, v in table)

    c0, used = _c0_estimate(model, test_fields if test_fields is not None else default_test_fields())

    report = AssumptionReport(
        beta=beta,
        beta_table=table,
        j_range=(j_min, j_max),
        c0_estimate=c0,
        gamma_fit=gamma_fit,
        delta_fit=delta_fit,
        a8_margin=a8_margin,
        p_gradient_constant=p_gradient_constant,
        n_sup=float(n.max()),
        n_inf=float(n.min()),
        fields_used=used,
    )
    logger.debug(f"Assumption report for {model!r}: beta={beta:.4e}, gamma_fit={gamma_fit:.4e}")
    return report


def _c0_estimate(model: IndexModel, fields: Sequence[TestField]) -> Tuple[float, int]:
    """1 - max ||n1^(1/2) u|| / ||grad u|| over the test fields (advisory)."""
    axis = np.linspace(-8.0, 8.0, 257)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    n1, _ = model.split(x1, x2)
    worst = 0.0
    used = 0
    for field_fn in fields:
        u, ux, uy = field_fn(x1, x2)
        grad = math.sqrt(float(np.sum(np.abs(ux) ** 2 + np.abs(uy) ** 2)))
        if grad == 0.0:
            logger.warning("Skipping test field with vanishing gradient")
            continue
        used += 1
        weighted = math.sqrt(float(np.sum(n1 * np.abs(u) ** 2)))
        worst = max(worst, weighted / grad)
    return 1.0 - worst, used
