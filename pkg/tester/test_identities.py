#!/usr/bin/env python3
# tester/test_identities.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""Tests for the multiplier identities on analytic and solved fields."""

import math

import numpy as np
import pytest

from src.core.errors import PreconditionError
from src.core.helmholtz_fd import BoundaryCondition, ComplexField, PolarGrid, assemble, gaussian_source, solve
from src.core.identities import (
    Multiplier,
    angular_weight,
    ball_weight,
    check_flux,
    check_morawetz,
    check_variational,
    constant_weight,
    gaussian_weight,
    kinked_potential,
    multiplier_from_name,
    profile_potential,
    psi_q_decomposition,
    quadratic_potential,
    transition,
)
from src.core.index_models import AngularLimitIndex, AngularProfile, ConstantIndex

EPSILON = 0.3
L = 6.0


def _analytic_pair(N, model, epsilon=EPSILON):
    """u = exp(-r^2/2 + i x1) and f with Laplace(u) + (n + i eps) u = -f."""
    grid = PolarGrid(N, N, L)
    x1, x2 = grid.cartesian
    r2 = x1**2 + x2**2
    u = np.exp(-0.5 * r2 + 1j * x1)
    g = u * (r2 - 3.0 - 2j * x1 + model.n(x1, x2) + 1j * epsilon)
    return ComplexField(grid, u), ComplexField(grid, -g, "source")


def _order(residuals, sizes):
    h = [2.0 * L / (2 * N - 1) for N in sizes]
    return math.log(residuals[-2] / residuals[-1]) / math.log(h[-2] / h[-1])


def test_transition_is_c2():
    q, dq, d2q, _ = transition(np.array([0.5, 1.0, 2.0, 3.0]))
    np.testing.assert_allclose(q, [0.0, 0.0, 2.0, 3.0])
    np.testing.assert_allclose(dq, [0.0, 0.0, 1.0, 1.0])
    np.testing.assert_allclose(d2q, [0.0, 0.0, 0.0, 0.0], atol=1e-12)
    s = np.linspace(1.05, 1.95, 10)
    h = 1e-6
    np.testing.assert_allclose(transition(s)[1], (transition(s + h)[0] - transition(s - h)[0]) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(transition(s)[3], (transition(s + h)[2] - transition(s - h)[2]) / (2 * h), atol=1e-4)


def test_multiplier_kind_checked():
    with pytest.raises(PreconditionError):
        Multiplier("cubic", np.hypot, np.hypot)


def test_multiplier_from_name():
    grid = PolarGrid(16, 16, 8.0)
    assert multiplier_from_name("quadratic", grid, None, None).kind == "custom_smooth"
    kinked = multiplier_from_name("kinked", grid, None, None)
    assert kinked.jumps == ((4.0, -0.25),)
    assert multiplier_from_name("profile", grid, AngularProfile.constant(1.0), 2.0).kind == "vector_Psi_q"
    with pytest.raises(PreconditionError):
        multiplier_from_name("profile", grid, None, 2.0)
    with pytest.raises(PreconditionError):
        multiplier_from_name("cubic", grid, None, None)


@pytest.mark.parametrize("factory", [lambda: kinked_potential(1.5), lambda: profile_potential(1.5, AngularProfile(1.0, (0.2,), (0.1,)))])
def test_potential_derivatives_match_finite_differences(factory):
    Psi = factory()
    x1 = np.array([0.7, 2.3, -3.1, 0.4])
    x2 = np.array([0.2, 1.1, 1.9, -2.8])
    h = 1e-6
    g1, g2 = Psi.gradient(x1, x2)
    np.testing.assert_allclose(g1, (Psi.value(x1 + h, x2) - Psi.value(x1 - h, x2)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(g2, (Psi.value(x1, x2 + h) - Psi.value(x1, x2 - h)) / (2 * h), atol=1e-6)
    h11, h12, h22 = Psi.hessian(x1, x2)
    np.testing.assert_allclose(h11 + h22, Psi.laplacian(x1, x2), atol=1e-10)
    np.testing.assert_allclose(h11, (Psi.gradient(x1 + h, x2)[0] - Psi.gradient(x1 - h, x2)[0]) / (2 * h), atol=1e-5)
    np.testing.assert_allclose(h12, (Psi.gradient(x1, x2 + h)[0] - Psi.gradient(x1, x2 - h)[0]) / (2 * h), atol=1e-5)
    l1, l2 = Psi.grad_laplacian(x1, x2)
    np.testing.assert_allclose(l1, (Psi.laplacian(x1 + h, x2) - Psi.laplacian(x1 - h, x2)) / (2 * h), atol=1e-5)
    np.testing.assert_allclose(l2, (Psi.laplacian(x1, x2 + h) - Psi.laplacian(x1, x2 - h)) / (2 * h), atol=1e-5)


def test_flux_identity_exact_on_closed_solve():
    grid = PolarGrid(32, 32, 8.0)
    model = ConstantIndex(1.0)
    system = assemble(grid, model, 0.2, BoundaryCondition.dirichlet0())
    f = gaussian_source(grid, (1.0, 0.5), 0.6)
    u = solve(system, f).u
    report = check_flux(u, f, 0.2, constant_weight(1.0))
    assert report.rel_residual <= 1e-10
    assert report.terms["absorption"] > 0.0
    assert set(report.to_dict()["terms"]) == {"absorption", "weight_flux", "weight_jump", "boundary_flux", "source"}


def test_variational_identity_converges():
    model = ConstantIndex(1.0)
    sizes = [32, 64, 128]
    residuals = []
    for N in sizes:
        u, f = _analytic_pair(N, model)
        residuals.append(check_variational(u, f, model, gaussian_weight(1.0)).abs_residual)
    assert residuals[0] > residuals[1] > residuals[2]
    assert 1.8 <= _order(residuals, sizes) <= 2.2


def test_morawetz_identity_converges():
    model = ConstantIndex(1.0)
    sizes = [32, 64, 128]
    residuals = []
    for N in sizes:
        u, f = _analytic_pair(N, model)
        report = check_morawetz(u, f, model, EPSILON, quadratic_potential())
        residuals.append(report.abs_residual)
    assert report.terms["laplacian_gradient"] == 0.0
    assert report.terms["index_gradient"] == 0.0
    assert residuals[0] > residuals[1] > residuals[2]
    assert 1.8 <= _order(residuals, sizes) <= 2.2


def test_flux_identity_with_angular_weight_converges():
    model = ConstantIndex(1.0)
    psi = angular_weight(AngularProfile(mean=1.0, cos=(0.2,)))
    residuals = []
    for N in (32, 128):
        u, f = _analytic_pair(N, model)
        residuals.append(check_flux(u, f, EPSILON, psi).rel_residual)
    assert residuals[1] < residuals[0]
    assert residuals[1] <= 1e-2


def test_ball_weight_identity():
    model = ConstantIndex(1.0)
    u, f = _analytic_pair(128, model)
    report = check_variational(u, f, model, ball_weight(2.0))
    assert report.terms["weight_jump"] != 0.0
    assert report.rel_residual <= 0.1


@pytest.mark.slow
def test_kinked_potential_identity():
    model = ConstantIndex(1.0)
    reports = []
    for N in (32, 128):
        u, f = _analytic_pair(N, model)
        reports.append(check_morawetz(u, f, model, EPSILON, kinked_potential(1.0)))
    assert reports[1].terms["laplacian_jump"] != 0.0
    assert reports[1].rel_residual < reports[0].rel_residual
    assert reports[1].rel_residual <= 0.1


def test_morawetz_needs_second_derivatives():
    model = ConstantIndex(1.0)
    u, f = _analytic_pair(16, model)
    with pytest.raises(PreconditionError):
        check_morawetz(u, f, model, EPSILON, gaussian_weight(1.0))


def test_grid_mismatch_rejected():
    model = ConstantIndex(1.0)
    u, _ = _analytic_pair(16, model)
    _, f = _analytic_pair(32, model)
    with pytest.raises(PreconditionError):
        check_variational(u, f, model, gaussian_weight())


def test_profile_decomposition_matches_direct():
    profile = AngularProfile(mean=1.0, cos=(0.2,), sin=(0.1,))
    model = AngularLimitIndex(profile, gamma=0.5, delta=1.0, r_moll=0.5)
    u, _ = _analytic_pair(64, model)
    report = psi_q_decomposition(u, model, profile, 1.0)
    assert report.index_rel_error <= 1e-8
    assert report.hessian_rel_error <= 1e-8
    assert set(report.hessian_terms) == {"radial", "tangential", "cross", "angular_hessian"}


def test_profile_decomposition_without_radial_decay():
    profile = AngularProfile(mean=1.0, cos=(0.2,))
    model = AngularLimitIndex(profile, gamma=0.0, r_moll=0.5)
    u, _ = _analytic_pair(64, model)
    report = psi_q_decomposition(u, model, profile, 1.0)
    scale = abs(report.index_terms["angular_limit"])
    assert scale > 0.0
    assert abs(report.index_terms["radial_index"]) <= 1e-10 * scale
    assert abs(report.index_terms["angular_remainder"]) <= 1e-10 * scale
