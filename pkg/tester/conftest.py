#!/usr/bin/env python3
# tester/conftest.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""Shared fixtures for the hlab test suite."""

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.core.index_models import AngularProfile, ConstantIndex, TiltIndex  # noqa: E402


@pytest.fixture
def constant_model():
    return ConstantIndex(lam=1.0)


@pytest.fixture
def tilt_model():
    return TiltIndex(lam=10.0, r_moll=0.5)


@pytest.fixture
def cosine_profile():
    return AngularProfile(mean=1.0, cos=(0.2,))


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment document to tmp_path and return its path."""

    def _write(data, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
