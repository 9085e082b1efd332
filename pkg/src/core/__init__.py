#!/usr/bin/env python3
# src/core/__init__.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/__init__.py
Numerical core: index models, the polar solver, norms, identities, rays and the waveguide.
"""

from .config import ExperimentConfig, HlabSettings, get_config, get_config_manager, load_experiment_config
from .errors import (
    CausticSuspected,
    ConfigValidationError,
    HlabError,
    NoConvergence,
    NonConvergence,
    PreconditionError,
    QuadratureUnderResolved,
    SafetyRadiusExceeded,
)
from .index_models import AngularProfile, IndexModel, assumption_report, build_model
from .helmholtz_fd import BoundaryCondition, ComplexField, PolarGrid, assemble, solve
from .waveguide import WaveguideParams

__all__ = [
    "ExperimentConfig",
    "HlabSettings",
    "get_config",
    "get_config_manager",
    "load_experiment_config",
    "HlabError",
    "ConfigValidationError",
    "PreconditionError",
    "NonConvergence",
    "NoConvergence",
    "CausticSuspected",
    "QuadratureUnderResolved",
    "SafetyRadiusExceeded",
    "AngularProfile",
    "IndexModel",
    "assumption_report",
    "build_model",
    "BoundaryCondition",
    "ComplexField",
    "PolarGrid",
    "assemble",
    "solve",
    "WaveguideParams",
]
