#!/usr/bin/env python3
# src/core/errors.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/errors.py
Exception hierarchy for hlab. Every class carries the process exit code the
command line reports when it escapes an experiment.
"""

from __future__ import annotations

from typing import Optional, Sequence


class HlabError(Exception):
    """Base class for all hlab failures."""

    exit_code: int = 1


class ConfigValidationError(HlabError):
    """Experiment configuration failed validation."""

    exit_code = 2


class PreconditionError(HlabError, ValueError):
    """An operation was called outside its domain of definition."""

    exit_code = 2


class NonConvergence(HlabError):
    """Iterative solve stopped before reaching its tolerance."""

    exit_code = 3

    def __init__(self, iterations: int, residual: float, message: Optional[str] = None):
        self.iterations = int(iterations)
        self.residual = float(residual)
        super().__init__(
            message
            or f"no convergence after {self.iterations} iterations (residual {self.residual:.3e})"
        )


class NoConvergence(NonConvergence):
    """Newton inversion of the ray map did not converge."""


class CausticSuspected(HlabError):
    """The ray map Jacobian lost positivity during inversion."""

    exit_code = 4

    def __init__(self, point: Sequence[float], jacobian: float):
        self.point = tuple(float(v) for v in point)
        self.jacobian = float(jacobian)
        super().__init__(
            f"caustic suspected near x={self.point}: ray-map Jacobian {self.jacobian:.3e} <= 0"
        )


class QuadratureUnderResolved(HlabError):
    """Doubling the quadrature changed the integral beyond tolerance."""

    def __init__(self, value: float, refined: float, tolerance: float):
        self.value = float(value)
        self.refined = float(refined)
        self.tolerance = float(tolerance)
        change = abs(refined - value) / max(abs(refined), 1e-300)
        super().__init__(
            f"quadrature under-resolved: {value:.6e} -> {refined:.6e} "
            f"(relative change {change:.2e} > {tolerance:.2e})"
        )


class SafetyRadiusExceeded(HlabError):
    """A ray left the configured safety radius."""
