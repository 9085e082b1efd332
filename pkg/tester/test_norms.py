#!/usr/bin/env python3
# tester/test_norms.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""Tests for weighted norms, radiation residuals and flux balances."""

import math

import numpy as np
import pytest

from src.core.errors import PreconditionError
from src.core.helmholtz_fd import BoundaryCondition, ComplexField, PolarGrid, assemble, ring_source, solve
from src.core.index_models import AngularProfile, ConstantIndex
from src.core.norms import (
    ScalarPhase,
    VectorPhase,
    annulus_mass,
    besov_norm,
    concentration_integral,
    duality_check,
    dyadic_decomposition,
    flux_report,
    gradient_energy,
    morawetz_report,
    sommerfeld_liminf,
    sommerfeld_residual,
    tangential_energy,
    triple_norm,
    weighted_integral,
    weighted_source_norm,
)


def _indicator(grid, lower, upper):
    return ComplexField.from_function(
        grid, lambda x1, x2: ((np.hypot(x1, x2) >= lower) & (np.hypot(x1, x2) <= upper)).astype(complex), "source"
    )


def test_triple_norm_of_constant():
    grid = PolarGrid(64, 16, 2.0)
    one = ComplexField.from_function(grid, lambda x1, x2: np.ones_like(x1))
    assert triple_norm(one) == pytest.approx(2.0 * math.pi, abs=1e-3)
    assert triple_norm(ComplexField.zeros(grid)) == 0.0
    with pytest.raises(PreconditionError):
        triple_norm(one, R0=2.0)


def test_triple_norm_homogeneous():
    grid = PolarGrid(32, 16, 5.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(-(x1**2) + 1j * x2))
    assert triple_norm(u.scaled(3.0 - 4.0j), 1.0) == pytest.approx(25.0 * triple_norm(u, 1.0), rel=1e-12)


def test_triple_norm_index_weight_scales():
    grid = PolarGrid(32, 16, 5.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(-(x1**2 + x2**2)))
    x1, x2 = grid.cartesian
    small = triple_norm(u, 0.5, weight=ConstantIndex(1.0).n(x1, x2))
    large = triple_norm(u, 0.5, weight=ConstantIndex(9.0).n(x1, x2))
    assert large == pytest.approx(9.0 * small, rel=1e-12)


def test_besov_single_annulus():
    grid = PolarGrid(400, 8, 4.0)
    f = _indicator(grid, 1.0, 2.0)
    assert besov_norm(f) == pytest.approx(math.sqrt(6.0 * math.pi), rel=1e-2)
    assert besov_norm(ComplexField.zeros(grid, "source")) == 0.0


def test_besov_two_annuli():
    grid = PolarGrid(600, 8, 6.0)
    f = _indicator(grid, 1.0, 4.0)
    expected = math.sqrt(6.0 * math.pi) + math.sqrt(48.0 * math.pi)
    assert besov_norm(f) == pytest.approx(expected, rel=1e-2)


def test_besov_homogeneous_and_monotone():
    grid = PolarGrid(64, 16, 8.0)
    f = ComplexField.from_function(grid, lambda x1, x2: np.exp(-0.1 * (x1**2 + x2**2)) * (1 + 0.5j), "source")
    bigger = ComplexField(grid, f.values * (1.0 + np.abs(np.sin(grid.cartesian[0]))), "source")
    assert besov_norm(f.scaled(-2.0)) == pytest.approx(2.0 * besov_norm(f), rel=1e-12)
    assert besov_norm(bigger, 1.5) >= besov_norm(f, 1.5)


def test_dyadic_decomposition_flags_clipping():
    grid = PolarGrid(64, 16, 6.0)
    f = ComplexField.from_function(grid, lambda x1, x2: np.ones_like(x1), "source")
    decomposition = dyadic_decomposition(f, R0=1.0)
    assert [t.j for t in decomposition.terms] == [1, 2]
    assert decomposition.clipped == [2]
    assert decomposition.head > 0.0
    assert decomposition.total == pytest.approx(decomposition.head + sum(t.value for t in decomposition.terms))
    with pytest.raises(PreconditionError):
        dyadic_decomposition(f, R0=-1.0)


def test_duality_holds_on_random_fields():
    grid = PolarGrid(48, 32, 10.0)
    rng = np.random.default_rng(20240101)
    for _ in range(20):
        f = ComplexField(grid, rng.normal(size=grid.shape) * np.exp(2j * np.pi * rng.random(grid.shape)), "source")
        u = ComplexField(grid, rng.normal(size=grid.shape) * np.exp(2j * np.pi * rng.random(grid.shape)))
        check = duality_check(f, u)
        assert check.ok
        assert check.lhs <= check.rhs * (1 + 1e-12)
    zero = duality_check(ComplexField.zeros(grid, "source"), u)
    assert zero.lhs == 0.0 and zero.ok


def test_weighted_source_norm_of_constant():
    grid = PolarGrid(64, 16, 2.0)
    f = ComplexField.from_function(grid, lambda x1, x2: np.ones_like(x1), "source")
    assert weighted_source_norm(f, a=0.0) == pytest.approx(math.pi * (4.0 - grid.r_inner**2))


def test_morawetz_report_sums_parts():
    grid = PolarGrid(64, 32, 8.0)
    model = ConstantIndex(4.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(-(x1**2 + x2**2) / 4 + 1j * x1))
    report = morawetz_report(u, model)
    assert report.R0 == pytest.approx(0.5)
    assert report.M2 == report.triple_u + report.triple_nu + report.tangential_energy
    assert min(report.triple_u, report.triple_nu, report.tangential_energy) > 0.0
    empty = morawetz_report(ComplexField.zeros(grid), model)
    assert empty.M2 == 0.0
    assert empty.to_dict()["unresolved_disk_radius"] == grid.r_inner


def test_tangential_energy_closed_form():
    grid = PolarGrid(200, 64, 6.0)
    u = ComplexField.from_function(grid, lambda x1, x2: (x1 + 1j * x2) * (x1**2 + x2**2) ** 0.5 * np.exp(-(x1**2 + x2**2)))
    sinc = math.sin(grid.dtheta) / grid.dtheta
    expected = 2.0 * math.pi * math.sqrt(2.0 * math.pi) / 16.0 * sinc**2
    assert tangential_energy(u) == pytest.approx(expected, rel=1e-3)


def test_tangential_energy_vanishes_for_radial_wave():
    grid = PolarGrid(64, 16, 8.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(1j * np.hypot(x1, x2)))
    assert tangential_energy(u) <= 1e-20


def test_concentration_integral():
    grid = PolarGrid(64, 64, 2.0)
    profile = AngularProfile(mean=2.0, cos=(0.0, 1.0))
    one = ComplexField.from_function(grid, lambda x1, x2: np.ones_like(x1))
    assert concentration_integral(one, profile, 1.0) == pytest.approx(4.0 * math.pi, rel=1e-2)
    assert concentration_integral(one, AngularProfile.constant(2.0), 1.0) == 0.0
    values = [concentration_integral(one, profile, R) for R in (0.5, 1.0, 1.5)]
    assert values == sorted(values, reverse=True)
    with pytest.raises(PreconditionError):
        concentration_integral(one, profile, 2.0)


def test_annulus_mass_of_constant():
    grid = PolarGrid(64, 16, 3.0)
    one = ComplexField.from_function(grid, lambda x1, x2: np.ones_like(x1))
    assert annulus_mass(one, 1.0, 2.0) == pytest.approx(2.0 * math.pi)


def test_sommerfeld_residual_of_outgoing_wave():
    grid = PolarGrid(128, 16, 10.0)
    model = ConstantIndex(1.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(1j * np.hypot(x1, x2)))
    energy = gradient_energy(u)
    outgoing = ScalarPhase.from_model(grid, model)
    assert sommerfeld_residual(u, outgoing) <= 1e-4 * energy
    incoming = ScalarPhase.from_model(grid, model, sign=-1.0)
    expected = weighted_integral(grid, 4.0 * u.abs2, "inverse")
    assert sommerfeld_residual(u, incoming) == pytest.approx(expected, rel=5e-3)
    assert sommerfeld_residual(ComplexField.zeros(grid), outgoing) == 0.0
    assert sommerfeld_liminf(u, outgoing) < sommerfeld_liminf(u, incoming)


def test_vector_phase_matches_scalar_for_radial_field():
    grid = PolarGrid(64, 16, 8.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(1j * np.hypot(x1, x2)))
    x1, x2 = grid.cartesian
    r = np.hypot(x1, x2)
    vector = VectorPhase.from_cartesian(grid, x1 / r, x2 / r)
    scalar = ScalarPhase.from_profile(grid, AngularProfile.constant(1.0))
    for weight in ("inverse", "shifted"):
        assert sommerfeld_residual(u, vector, weight) == pytest.approx(
            sommerfeld_residual(u, scalar, weight), rel=1e-9, abs=1e-14
        )


def test_vector_phase_must_be_finite():
    grid = PolarGrid(16, 8, 4.0)
    u = ComplexField.from_function(grid, lambda x1, x2: np.exp(1j * x1))
    bad = VectorPhase(np.full(grid.shape, np.nan), np.zeros(grid.shape))
    with pytest.raises(PreconditionError):
        sommerfeld_residual(u, bad)
    with pytest.raises(PreconditionError):
        sommerfeld_residual(u, ScalarPhase(np.ones(grid.shape)), weight="cubic")


def test_flux_report_closed_system():
    grid = PolarGrid(48, 32, 8.0)
    model = ConstantIndex(1.0)
    system = assemble(grid, model, 0.5, BoundaryCondition.dirichlet0())
    f = ring_source(grid)
    u = solve(system, f).u
    rows = flux_report(u, f, model, model.limit, [4.0, 8.0])
    assert rows[-1].R == 8.0
    assert rows[-1].surface_flux == pytest.approx(rows[-1].minus_surface_energy, abs=1e-12)
    assert all(len(row.as_tuple()) == 5 for row in rows)
    with pytest.raises(PreconditionError):
        flux_report(u, f, model, model.limit, [9.0])
