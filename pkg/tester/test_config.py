#!/usr/bin/env python3
# tester/test_config.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""Tests for application settings and experiment configuration loading."""

from pathlib import Path

import pytest

from src.core.config import (
    ConfigManager,
    ExperimentConfig,
    HlabSettings,
    apply_overrides,
    load_experiment_config,
)
from src.core.errors import ConfigValidationError

EXAMPLES = Path(__file__).resolve().parent.parent / "config" / "experiments"


def test_settings_from_project_config():
    settings = ConfigManager().load_config()
    assert isinstance(settings, HlabSettings)
    assert settings.logging.file == "logs/hlab.log"
    assert settings.output.root == "outputs"
    assert settings.ui.show_progress is True


def test_settings_default_when_file_missing(tmp_path):
    settings = ConfigManager(tmp_path / "missing.yml").load_config()
    assert settings == HlabSettings()


def test_settings_partial_file(tmp_path):
    path = tmp_path / "config.yml"
    path.write_text("logging:\n  level: DEBUG\nui:\n  show_progress: false\n", encoding="utf-8")
    settings = ConfigManager(path).load_config()
    assert settings.logging.level == "DEBUG"
    assert settings.ui.show_progress is False
    assert settings.output.root == "outputs"


@pytest.mark.parametrize("path", sorted(EXAMPLES.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_examples_validate(path):
    config = load_experiment_config(path)
    assert config.experiment.replace("-", "_") == path.stem


def test_defaults_validate(write_config):
    config = load_experiment_config(write_config({}))
    assert config.experiment == "solve"
    assert config.grid.Nr == 128
    assert config.bc == "outgoing"
    assert config.solver.method is None


def test_lambda_key_round_trips(write_config):
    config = load_experiment_config(write_config({"model": {"id": "saito_tilt", "lambda": 12.0}}))
    assert config.model.lam == 12.0
    data = config.to_dict()
    assert data["model"]["lambda"] == 12.0
    assert "lam" not in data["model"]
    assert ExperimentConfig.from_dict(data).model.lam == 12.0


def test_unknown_key_rejected(write_config):
    with pytest.raises(ConfigValidationError, match="unknown configuration keys: colour"):
        load_experiment_config(write_config({"colour": "red"}))


def test_malformed_value_rejected(write_config):
    with pytest.raises(ConfigValidationError, match="malformed"):
        load_experiment_config(write_config({"grid": {"Nr": "many"}}))


def test_unparseable_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigValidationError, match="cannot parse"):
        load_experiment_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigValidationError, match="cannot read"):
        load_experiment_config(tmp_path / "absent.json")


def test_yaml_documents_accepted(tmp_path):
    path = tmp_path / "run.yml"
    path.write_text("experiment: norms\nepsilon: 0.2\ngrid:\n  L: 12\n", encoding="utf-8")
    config = load_experiment_config(path)
    assert config.experiment == "norms"
    assert config.grid.L == 12.0


def test_overrides_parse_json_values():
    data = apply_overrides({"grid": {"L": 20}}, ["grid.L=30", "epsilon=0.5", "bc=dirichlet0", "notes.tag=x"])
    assert data["grid"]["L"] == 30
    assert data["epsilon"] == 0.5
    assert data["bc"] == "dirichlet0"
    assert data["notes"] == {"tag": "x"}


def test_overrides_do_not_mutate_input():
    original = {"grid": {"L": 20}}
    apply_overrides(original, ["grid.L=40"])
    assert original["grid"]["L"] == 20


@pytest.mark.parametrize("item", ["gridL30", "=3"])
def test_malformed_override(item):
    with pytest.raises(ConfigValidationError):
        apply_overrides({}, [item])


def test_override_through_scalar_rejected():
    with pytest.raises(ConfigValidationError, match="not a section"):
        apply_overrides({"epsilon": 0.1}, ["epsilon.value=2"])


def test_experiment_argument_wins(write_config):
    config = load_experiment_config(write_config({"experiment": "solve"}), experiment="norms")
    assert config.experiment == "norms"


@pytest.mark.parametrize(
    "data, message",
    [
        ({"experiment": "fly"}, "experiment must be one of"),
        ({"model": {"id": "cubic"}}, "model.id"),
        ({"grid": {"Ntheta": 7}}, "Ntheta"),
        ({"epsilon": -1.0}, "epsilon"),
        ({"solver": {"method": "gmres"}}, "solver.method"),
        ({"epsilon": 0.0, "bc": "dirichlet0"}, "requires bc = outgoing"),
        ({"model": {"id": "saito_tilt", "lambda": 0.5}}, "lambda > 1"),
        ({"model": {"id": "angular_limit"}}, "needs model.profile"),
        ({"model": {"id": "constant", "profile": {"mean": 0.1, "cos": [0.5]}}}, "positive"),
        ({"norms": {"R0": 50.0}}, "norms.R0"),
        ({"rays": {"radii": [10.0, 5.0]}}, "increasing"),
        ({"identities": {"Psi": "cubic"}}, "identities.Psi"),
        ({"experiment": "eps-sweep", "epsilon_list": [0.1, 0.05]}, "at least 3"),
        ({"experiment": "eps-sweep", "epsilon_list": [0.1, 0.2, 0.05]}, "decreasing"),
        ({"experiment": "concentration"}, "needs model.profile"),
    ],
)
def test_validation_names_the_field(write_config, data, message):
    with pytest.raises(ConfigValidationError, match=message):
        load_experiment_config(write_config(data))


def test_waveguide_window_message(write_config):
    data = {"experiment": "waveguide", "waveguide": {"lambda": 0.6}}
    with pytest.raises(ConfigValidationError) as info:
        load_experiment_config(write_config(data))
    assert "waveguide.lambda = 0.6 violates the admissible window" in str(info.value)
    assert info.value.exit_code == 2
