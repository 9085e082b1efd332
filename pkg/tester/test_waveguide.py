#!/usr/bin/env python3
# tester/test_waveguide.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""Tests for the closed-form waveguide field and its quadratures."""

import math

import numpy as np
import pytest

from src.core.errors import PreconditionError, QuadratureUnderResolved
from src.core.waveguide import (
    WaveguideParams,
    bump,
    conjugated_energy,
    coulomb_ratio,
    field_gradient,
    fields,
    fit_blowup,
    gauss_panels,
    pde_residual,
    phase_diagnostic,
    refined_tangential_integral,
    soliton,
    source_besov_norm,
    source_norms,
    tangential_blowup,
)


def test_soliton_values():
    q, dq, d2q = soliton(0.0)
    assert q == 1.0
    assert dq == 0.0
    assert d2q == pytest.approx(-0.5)


def test_soliton_solves_profile_equation():
    y = np.linspace(-30.0, 30.0, 601)
    q, _, d2q = soliton(y)
    np.testing.assert_allclose(d2q + (q**2 - 0.5) * q, 0.0, atol=1e-14)


def test_soliton_derivative_matches_finite_differences():
    y = np.linspace(-5.0, 5.0, 41)
    h = 1e-6
    fd = (soliton(y + h)[0] - soliton(y - h)[0]) / (2 * h)
    np.testing.assert_allclose(soliton(y)[1], fd, atol=1e-9)


def test_soliton_tail_is_negligible():
    q, _, _ = soliton(np.array([-40.0, 40.0]))
    assert np.all(q <= 2e-12)
    assert np.all(np.isfinite(soliton(np.array([1e4]))[0]))


def test_bump_profile():
    theta, dtheta, d2theta = bump(np.array([0.5, 1.0, 1.5, 2.0, 3.0]))
    np.testing.assert_allclose(theta, [0.0, 0.0, 0.5, 1.0, 1.0], atol=1e-15)
    assert dtheta[0] == dtheta[-1] == 0.0
    assert d2theta[0] == d2theta[-1] == 0.0
    s = np.linspace(1.1, 1.9, 9)
    h = 1e-6
    np.testing.assert_allclose(bump(s)[1], (bump(s + h)[0] - bump(s - h)[0]) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(bump(s)[2], (bump(s + h)[1] - bump(s - h)[1]) / (2 * h), atol=1e-5)


def test_params_window():
    with pytest.raises(PreconditionError, match="admissible window"):
        WaveguideParams(lam=0.5)
    with pytest.raises(PreconditionError):
        WaveguideParams(epsilon=1.0)
    params = WaveguideParams(lam=0.25, epsilon=0.01)
    assert params.x_extent == pytest.approx(2000.0)
    assert params.y_extent == pytest.approx(160.0)
    assert params.kappa.imag > 0.0
    assert params.kappa**2 == pytest.approx(1.0 + 0.01j)
    assert params.to_dict()["lambda"] == 0.25


def test_pde_residual_vanishes():
    params = WaveguideParams(lam=0.3, epsilon=0.05)
    x, y = np.meshgrid(np.linspace(-6.0, 6.0, 97), np.linspace(-20.0, 20.0, 81), indexing="ij")
    assert float(np.max(pde_residual(params, x, y))) <= 1e-10


def test_source_supported_on_bump_region():
    params = WaveguideParams(epsilon=0.05)
    x = np.array([0.0, 0.5, 0.99, 2.0, 2.5, -3.0, 40.0])
    _, f, _ = fields(params, x, np.zeros_like(x))
    np.testing.assert_array_equal(f, 0.0)
    _, f_in, _ = fields(params, np.array([1.5]), np.array([0.0]))
    assert abs(f_in[0]) > 0.0


def test_field_is_plane_wave_far_out():
    params = WaveguideParams(epsilon=1e-6)
    u, _, n = fields(params, 5.0, 0.0)
    assert complex(u) == pytest.approx(complex(np.exp(5j)), abs=1e-5)
    assert float(n) == pytest.approx(1.0 + 0.5 * params.lam**2)


def test_field_gradient_matches_finite_differences():
    params = WaveguideParams(epsilon=0.05)
    x, y, h = np.array([1.3, -1.7, 3.0]), np.array([0.4, -2.0, 5.0]), 1e-6
    ux, uy = field_gradient(params, x, y)
    fx = (fields(params, x + h, y)[0] - fields(params, x - h, y)[0]) / (2 * h)
    fy = (fields(params, x, y + h)[0] - fields(params, x, y - h)[0]) / (2 * h)
    np.testing.assert_allclose(ux, fx, atol=1e-7)
    np.testing.assert_allclose(uy, fy, atol=1e-7)


def test_phase_is_not_an_eikonal_solution():
    solves, gap = phase_diagnostic(WaveguideParams(epsilon=0.01))
    assert not solves
    assert gap > 1.0


def test_coulomb_ratio_below_lambda_squared():
    params = WaveguideParams(lam=0.3)
    value, reference = coulomb_ratio(params)
    assert reference == pytest.approx(0.09)
    assert 0.5 * reference < value < reference


def test_gauss_panels_integrate_polynomials():
    xs, ws = gauss_panels([0.0, 1.0, 3.0], 4)
    assert xs.shape == ws.shape == (8,)
    assert float(ws @ xs**5) == pytest.approx(3.0**6 / 6.0)


def test_conjugated_energy_independent_of_epsilon():
    first = conjugated_energy(WaveguideParams(epsilon=0.1), R_max=50.0, count=16)
    second = conjugated_energy(WaveguideParams(epsilon=1e-3), R_max=50.0, count=16)
    assert first.value == second.value
    assert first.envelope_energy == pytest.approx(0.3 * math.sqrt(2.0) / 3.0)
    assert first.value > 0.0
    assert 1.0 <= first.radius <= 50.0
    assert first.value == pytest.approx(first.x_term + first.y_term)


def test_source_norm_stable_in_epsilon():
    params = WaveguideParams(lam=0.3, epsilon=0.1)
    norms = source_norms(params, [0.1, 0.03, 0.01, 0.003, 0.001], R_max=20.0)
    assert norms.stability_ratio <= 1.1
    assert len(norms.triple_u) == 5
    assert source_besov_norm(params) == pytest.approx(norms.besov[0])


def test_fit_blowup_recovers_line():
    eps = [1e-1, 1e-2, 1e-3]
    T = [2.0 * math.log(1.0 / e) + 1.0 for e in eps]
    report = fit_blowup(eps, T)
    assert report.slope == pytest.approx(2.0)
    assert report.intercept == pytest.approx(1.0)
    assert report.r2 == pytest.approx(1.0)
    assert report.monotone
    assert report.flags["fit_quality"]


def test_tangential_blowup_preconditions():
    params = WaveguideParams()
    with pytest.raises(PreconditionError):
        tangential_blowup(params, [0.01, 0.1])
    with pytest.raises(PreconditionError):
        tangential_blowup(WaveguideParams(x_max=100.0), [0.1, 0.01])


def test_refinement_detects_coarse_quadrature():
    params = WaveguideParams(epsilon=0.01, nodes=2)
    with pytest.raises(QuadratureUnderResolved):
        refined_tangential_integral(params, tolerance=1e-12)


@pytest.mark.slow
def test_tangential_energy_grows_like_log():
    report = tangential_blowup(WaveguideParams(lam=0.3), [0.1, 0.03, 0.01])
    assert report.monotone
    assert report.slope > 0.0
    assert all(t > 0 for t in report.T)
