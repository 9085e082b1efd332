#!/usr/bin/env python3
# tester/test_index_models.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""Tests for index models, angular profiles and assumption checks."""

import math

import numpy as np
import pytest

from src.core.config import ModelConfig, ProfileConfig
from src.core.errors import PreconditionError
from src.core.index_models import (
    AngularLimitIndex,
    AngularProfile,
    ConstantIndex,
    TiltIndex,
    WaveguideIndex,
    assumption_report,
    beta_coefficient,
    beta_table,
    build_model,
)


def _fd_gradient(model, x1, x2, h=1e-6):
    n = model.n
    return (
        (n(x1 + h, x2) - n(x1 - h, x2)) / (2 * h),
        (n(x1, x2 + h) - n(x1, x2 - h)) / (2 * h),
    )


def test_profile_lower_bound_default(cosine_profile):
    assert cosine_profile.n0 == pytest.approx(0.8)
    assert not cosine_profile.is_constant
    assert AngularProfile.constant(2.0).is_constant


def test_profile_must_be_positive():
    with pytest.raises(PreconditionError):
        AngularProfile(mean=0.5, cos=(0.3, 0.3))


def test_profile_derivatives_match_finite_differences():
    profile = AngularProfile(mean=1.0, cos=(0.1, -0.05), sin=(0.07,))
    theta = np.linspace(0.0, 2 * np.pi, 37)
    h = 1e-5
    for order in range(3):
        fd = (profile.derivative(theta + h, order) - profile.derivative(theta - h, order)) / (2 * h)
        np.testing.assert_allclose(fd, profile.derivative(theta, order + 1), atol=1e-8)


def test_profile_rejects_fourth_derivative(cosine_profile):
    with pytest.raises(ValueError):
        cosine_profile.derivative(0.0, 4)


def test_critical_angles(cosine_profile):
    np.testing.assert_allclose(cosine_profile.critical_angles(), [0.0, math.pi], atol=1e-9)
    assert AngularProfile.constant(1.0).critical_angles().size == 0


def test_constant_model(constant_model):
    n, g1, g2 = constant_model.evaluate(np.array([0.0, 3.0]), np.array([0.0, -4.0]))
    np.testing.assert_array_equal(n, [1.0, 1.0])
    np.testing.assert_array_equal(g1, 0.0)
    np.testing.assert_array_equal(g2, 0.0)
    assert constant_model.lower_bound() == 1.0


def test_tilt_values_outside_mollifier(tilt_model):
    n, g = tilt_model.eval([3.0, 4.0])
    assert n == pytest.approx(10.0 - 0.6)
    np.testing.assert_allclose(g, [-16.0 / 125.0, 12.0 / 125.0])


def test_tilt_is_mean_value_at_origin(tilt_model):
    n, g = tilt_model.eval([0.0, 0.0])
    assert n == pytest.approx(10.0, abs=1e-12)
    np.testing.assert_array_equal(g, [0.0, 0.0])


@pytest.mark.parametrize("point", [(0.35, 0.15), (-0.2, 0.36), (0.1, -0.45), (2.0, 1.0)])
def test_tilt_gradient_matches_finite_differences(tilt_model, point):
    fd = _fd_gradient(tilt_model, *point)
    _, g = tilt_model.eval(point)
    np.testing.assert_allclose(g, fd, atol=1e-6)


def test_tilt_requires_lambda_above_one():
    with pytest.raises(PreconditionError):
        TiltIndex(lam=0.9)
    with pytest.raises(PreconditionError):
        TiltIndex(lam=10.0, r_moll=0.0)


def test_tilt_closed_form_solves_eikonal(tilt_model):
    a, b = tilt_model.closed_form_coefficients()
    assert a**2 + b**2 == pytest.approx(1.0)
    assert 2 * a * b == pytest.approx(1.0 / tilt_model.lam)
    x1, x2 = np.array([3.0, -5.0, 0.5]), np.array([4.0, 1.0, -7.0])
    _, g1, g2 = tilt_model.closed_form_phase(x1, x2)
    r = np.hypot(x1, x2)
    np.testing.assert_allclose(g1**2 + g2**2, 1.0 - x1 / r / tilt_model.lam, rtol=1e-12)


def test_angular_limit_gradient(cosine_profile):
    model = AngularLimitIndex(cosine_profile, gamma=0.5, delta=1.0, r_moll=0.5)
    for point in [(1.2, 0.7), (-3.0, 2.0), (0.3, 0.2)]:
        _, g = model.eval(point)
        np.testing.assert_allclose(g, _fd_gradient(model, *point), atol=1e-6)
    assert model.decay_exponent() == 1.0
    assert AngularLimitIndex(cosine_profile, gamma=0.0).decay_exponent() is None


def test_angular_limit_approaches_profile(cosine_profile):
    model = AngularLimitIndex(cosine_profile, gamma=0.5, delta=1.0, r_moll=0.5)
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    R = 1e4
    n = model.n(R * np.cos(theta), R * np.sin(theta))
    np.testing.assert_allclose(n, cosine_profile.eval(theta) * (1 + 0.5 / R), rtol=1e-12)


def test_waveguide_index_range():
    model = WaveguideIndex(0.3)
    assert model.n(0.0, 0.0) == pytest.approx(1.0 + 0.045)
    assert model.n(0.0, 500.0) == pytest.approx(1.0 - 0.045)
    assert model.lower_bound() == pytest.approx(0.955)
    _, g = model.eval([1.0, 2.0])
    np.testing.assert_allclose(g, _fd_gradient(model, 1.0, 2.0), atol=1e-8)
    with pytest.raises(PreconditionError):
        WaveguideIndex(0.5)


def test_split_shares_index(tilt_model):
    model = TiltIndex(lam=10.0, r_moll=0.5, n1_share=0.25)
    n1, n2 = model.split(3.0, 4.0)
    assert n1 == pytest.approx(0.25 * 9.4)
    assert n1 + n2 == pytest.approx(9.4)


@pytest.mark.parametrize(
    "config, cls",
    [
        (ModelConfig(id="constant", lam=2.0), ConstantIndex),
        (ModelConfig(id="saito_tilt"), TiltIndex),
        (ModelConfig(id="angular_limit", profile=ProfileConfig(mean=1.0, cos=[0.2])), AngularLimitIndex),
        (ModelConfig(id="waveguide", lam=0.2), WaveguideIndex),
    ],
)
def test_build_model(config, cls):
    assert isinstance(build_model(config), cls)


def test_build_model_rejects_unknown():
    with pytest.raises(PreconditionError):
        build_model(ModelConfig(id="cubic"))
    with pytest.raises(PreconditionError):
        build_model(ModelConfig(id="angular_limit"))


def test_beta_vanishes_for_homogeneous_tilt(tilt_model):
    assert beta_coefficient(tilt_model, 0, 5) == pytest.approx(0.0, abs=1e-12)


def test_beta_positive_for_decaying_index(cosine_profile):
    model = AngularLimitIndex(cosine_profile, gamma=0.5, delta=1.0, r_moll=0.5)
    table = beta_table(model, 0, 3)
    assert [j for j, _ in table] == [0, 1, 2, 3]
    values = [v for _, v in table]
    assert all(v > 0 for v in values)
    assert values == sorted(values, reverse=True)


def test_beta_preconditions(constant_model):
    with pytest.raises(PreconditionError):
        beta_table(constant_model, 3, 1)
    with pytest.raises(PreconditionError):
        beta_table(constant_model, 0, 1, samples_per_annulus=32)


def test_assumption_report_for_tilt(tilt_model):
    report = assumption_report(tilt_model)
    assert report.gamma_fit < 1e-12
    assert report.p_gradient_constant == pytest.approx(1.0, abs=1e-12)
    assert report.n_sup == pytest.approx(11.0)
    assert report.n_inf == pytest.approx(9.0)
    assert report.c0_estimate == 1.0
    assert report.fields_used == 20
    assert report.beta == pytest.approx(0.0, abs=1e-12)
    # tilt has n = n_inf outside the mollifier, so the slack is 0.5 (d_theta n_inf)^2 with minimum 0 at theta = 0
    assert report.a8_margin == pytest.approx(0.0, abs=1e-9)
    data = report.to_dict()
    assert data["beta_table"][0] == {"j": 0, "sup": report.beta_table[0][1]}
    assert data["a8_margin"] == report.a8_margin
    assert "tangential_margin" not in data


def test_assumption_report_rejects_bad_radii(tilt_model):
    with pytest.raises(PreconditionError):
        assumption_report(tilt_model, radii=[4.0, 2.0])
