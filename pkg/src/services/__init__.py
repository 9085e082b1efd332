#!/usr/bin/env python3
# src/services/__init__.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/services/__init__.py
Experiment services for hlab
"""

from .experiments import ExperimentService, RunResult, run

__all__ = [
    "ExperimentService",
    "RunResult",
    "run",
]
