#!/usr/bin/env python3
# src/__init__.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/__init__.py
hlab main package
"""

__version__ = "0.1.0"
__author__ = "hlab developers"
__description__ = "Numerical laboratory for the high-frequency Helmholtz equation with variable index"

from .core.config import get_config, get_config_manager, load_experiment_config
from .core.errors import HlabError

__all__ = [
    "get_config",
    "get_config_manager",
    "load_experiment_config",
    "HlabError",
    "__version__",
    "__author__",
    "__description__",
]
