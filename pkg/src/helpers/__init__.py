#!/usr/bin/env python3
# src/helpers/__init__.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/helpers/__init__.py
Helper utilities for hlab
"""

from .utils import ArtifactWriter, config_hash, mapper, ordered_map, provenance

__all__ = [
    "ArtifactWriter",
    "config_hash",
    "mapper",
    "ordered_map",
    "provenance",
]
