#!/usr/bin/env python3
# src/core/config.py
#
# This file is part of the hlab package.
#
# For the full copyright and license information, please view the LICENSE
# file that was distributed with this source code.
#
"""
src/core/config.py
Configuration management for hlab.

Two layers live here: the application settings read from ``config/config.yml``
(logging, output location, progress display) and the experiment configuration,
a JSON document describing one run of the laboratory.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import yaml

from .errors import ConfigValidationError

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "solve",
    "norms",
    "rays",
    "identities",
    "waveguide",
    "concentration",
    "sommerfeld-compare",
    "eps-sweep",
)
MODEL_IDS = ("constant", "saito_tilt", "angular_limit", "waveguide")
BOUNDARY_CONDITIONS = ("outgoing", "dirichlet0")
SOLVER_METHODS = ("direct", "bicgstab")
SOURCE_KINDS = ("ring", "gaussian", "file")
SOMMERFELD_WEIGHTS = ("inverse", "shifted")
PSI_MULTIPLIERS = ("quadratic", "kinked", "profile")


# ---------------------------------------------------------------------------
# Application settings (config/config.yml)
# ---------------------------------------------------------------------------

@dataclass
class LoggingConfig:
    """Logging configuration."""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: str = "logs/hlab.log"


@dataclass
class OutputConfig:
    """Where experiment artifacts go when --out is not given."""
    root: str = "outputs"


@dataclass
class UIConfig:
    """UI configuration."""
    show_progress: bool = True


@dataclass
class HlabSettings:
    """Main application settings."""
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    ui: UIConfig = field(default_factory=UIConfig)


class ConfigManager:
    """Configuration manager for hlab application settings."""

    def __init__(self, config_path: Optional[Path] = None):
        self.config_path = config_path or self._get_default_config_path()
        self._config: Optional[HlabSettings] = None

    def _get_default_config_path(self) -> Path:
        """Get default configuration file path."""
        current_dir = Path(__file__).parent.parent.parent
        config_file = current_dir / "config" / "config.yml"

        if config_file.exists():
            return config_file

        return Path.cwd() / "config" / "config.yml"

    def load_config(self) -> HlabSettings:
        """Load configuration from YAML file."""
        if self._config is not None:
            return self._config

        if not self.config_path.exists():
            logger.warning(f"Config file not found: {self.config_path}. Using defaults.")
            self._config = HlabSettings()
            return self._config

        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                config_data = yaml.safe_load(f) or {}

            self._config = self._parse_config(config_data)
            logger.debug(f"Configuration loaded from: {self.config_path}")
            return self._config

        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Error loading config file {self.config_path}: {e}")
            logger.info("Using default configuration")
            self._config = HlabSettings()
            return self._config

    def _parse_config(self, config_data: Dict[str, Any]) -> HlabSettings:
        """Parse configuration data into HlabSettings object."""
        config = HlabSettings()

        if "logging" in config_data:
            logging_data = config_data["logging"]
            config.logging = LoggingConfig(
                level=logging_data.get("level", "INFO"),
                format=logging_data.get("format", LoggingConfig.format),
                file=logging_data.get("file", "logs/hlab.log"),
            )

        if "output" in config_data:
            config.output = OutputConfig(root=config_data["output"].get("root", "outputs"))

        if "ui" in config_data:
            config.ui = UIConfig(show_progress=bool(config_data["ui"].get("show_progress", True)))

        return config


# Global config manager instance
_config_manager: Optional[ConfigManager] = None


def get_config_manager() -> ConfigManager:
    """Get global config manager instance."""
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager


def get_config() -> HlabSettings:
    """Get current application settings."""
    return get_config_manager().load_config()


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

def _floats(values: Iterable[Any]) -> List[float]:
    return [float(v) for v in values]


def _optional_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


@dataclass
class ProfileConfig:
    """Fourier coefficients of an angular limit profile."""
    mean: float = 1.0
    cos: List[float] = field(default_factory=list)
    sin: List[float] = field(default_factory=list)
    n0: Optional[float] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProfileConfig":
        return cls(
            mean=float(data.get("mean", 1.0)),
            cos=_floats(data.get("cos", [])),
            sin=_floats(data.get("sin", [])),
            n0=_optional_float(data.get("n0")),
        )


@dataclass
class ModelConfig:
    """Index model selection; ``lam`` is serialized as ``lambda``."""
    id: str = "constant"
    lam: Optional[float] = None
    r_moll: float = 0.1
    gamma: float = 0.0
    delta: Optional[float] = None
    n1_share: float = 0.0
    profile: Optional[ProfileConfig] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        profile = data.get("profile")
        return cls(
            id=str(data.get("id", "constant")),
            lam=_optional_float(data.get("lambda")),
            r_moll=float(data.get("r_moll", 0.1)),
            gamma=float(data.get("gamma", 0.0)),
            delta=_optional_float(data.get("delta")),
            n1_share=float(data.get("n1_share", 0.0)),
            profile=ProfileConfig.from_dict(profile) if profile is not None else None,
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


@dataclass
class GridConfig:
    Nr: int = 128
    Ntheta: int = 64
    L: float = 20.0

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridConfig":
        return cls(
            Nr=int(data.get("Nr", 128)),
            Ntheta=int(data.get("Ntheta", 64)),
            L=float(data.get("L", 20.0)),
        )


@dataclass
class SolverConfig:
    """method None picks direct up to 256x256 nodes and bicgstab above."""
    method: Optional[str] = None
    tol: float = 1e-10
    max_iter: int = 2000
    preconditioner: bool = True

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverConfig":
        return cls(
            method=None if data.get("method") is None else str(data["method"]),
            tol=float(data.get("tol", 1e-10)),
            max_iter=int(data.get("max_iter", 2000)),
            preconditioner=bool(data.get("preconditioner", True)),
        )


@dataclass
class SourceConfig:
    """ring(r0, width, amplitude) | gaussian(center, sigma, amplitude) | file(path)."""
    kind: str = "ring"
    r0: float = 3.0
    width: float = 0.5
    amplitude: float = 1.0
    center: List[float] = field(default_factory=lambda: [0.0, 0.0])
    sigma: float = 0.5
    path: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SourceConfig":
        return cls(
            kind=str(data.get("kind", "ring")),
            r0=float(data.get("r0", 3.0)),
            width=float(data.get("width", 0.5)),
            amplitude=float(data.get("amplitude", 1.0)),
            center=_floats(data.get("center", [0.0, 0.0])),
            sigma=float(data.get("sigma", 0.5)),
            path=data.get("path"),
        )


@dataclass
class NormConfig:
    R0: Optional[float] = None
    a: float = 1.0
    radii: List[float] = field(default_factory=list)
    weight: str = "shifted"
    r_min: Optional[float] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormConfig":
        return cls(
            R0=_optional_float(data.get("R0")),
            a=float(data.get("a", 1.0)),
            radii=_floats(data.get("radii", [])),
            weight=str(data.get("weight", "shifted")),
            r_min=_optional_float(data.get("r_min")),
        )


@dataclass
class RayConfig:
    """Bicharacteristic settings; ``lam`` is serialized as ``lambda``."""
    lam: Optional[float] = None
    Nq: int = 720
    dt: float = 1e-3
    t_max: float = 20.0
    delta: Optional[float] = None
    radii: List[float] = field(default_factory=lambda: [5.0, 10.0, 20.0])
    theta_samples: int = 64
    queries: List[List[float]] = field(default_factory=list)
    safety_radius: float = 1e3
    tol: float = 1e-10
    sample_every: int = 20
    zone_substeps: int = 64

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RayConfig":
        return cls(
            lam=_optional_float(data.get("lambda")),
            Nq=int(data.get("Nq", 720)),
            dt=float(data.get("dt", 1e-3)),
            t_max=float(data.get("t_max", 20.0)),
            delta=_optional_float(data.get("delta")),
            radii=_floats(data.get("radii", [5.0, 10.0, 20.0])),
            theta_samples=int(data.get("theta_samples", 64)),
            queries=[_floats(q) for q in data.get("queries", [])],
            safety_radius=float(data.get("safety_radius", 1e3)),
            tol=float(data.get("tol", 1e-10)),
            sample_every=int(data.get("sample_every", 20)),
            zone_substeps=int(data.get("zone_substeps", 64)),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


@dataclass
class IdentityConfig:
    phi_scale: float = 1.0
    psi: str = "constant"
    Psi: str = "quadratic"
    R: Optional[float] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IdentityConfig":
        return cls(
            phi_scale=float(data.get("phi_scale", 1.0)),
            psi=str(data.get("psi", "constant")),
            Psi=str(data.get("Psi", "quadratic")),
            R=_optional_float(data.get("R")),
        )


@dataclass
class WaveguideConfig:
    """Waveguide counterexample; ``lam`` is serialized as ``lambda``."""
    lam: float = 0.3
    epsilon_list: List[float] = field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    x_max: Optional[float] = None
    y_max: float = 40.0
    nodes: int = 16
    R_max: float = 200.0
    refine_tol: float = 0.01

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WaveguideConfig":
        return cls(
            lam=float(data.get("lambda", 0.3)),
            epsilon_list=_floats(data.get("epsilon_list", [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])),
            x_max=_optional_float(data.get("x_max")),
            y_max=float(data.get("y_max", 40.0)),
            nodes=int(data.get("nodes", 16)),
            R_max=float(data.get("R_max", 200.0)),
            refine_tol=float(data.get("refine_tol", 0.01)),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


@dataclass
class ConcentrationConfig:
    L_list: List[float] = field(default_factory=lambda: [20.0, 30.0, 40.0])
    window_deg: float = 15.0
    flux_fraction: float = 0.8

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConcentrationConfig":
        return cls(
            L_list=_floats(data.get("L_list", [20.0, 30.0, 40.0])),
            window_deg=float(data.get("window_deg", 15.0)),
            flux_fraction=float(data.get("flux_fraction", 0.8)),
        )


@dataclass
class ExperimentConfig:
    """One laboratory run. ``notes`` is free-form and echoed unvalidated."""
    experiment: str = "solve"
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    epsilon: float = 0.1
    epsilon_list: List[float] = field(default_factory=list)
    bc: str = "outgoing"
    solver: SolverConfig = field(default_factory=SolverConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    norms: NormConfig = field(default_factory=NormConfig)
    rays: RayConfig = field(default_factory=RayConfig)
    identities: IdentityConfig = field(default_factory=IdentityConfig)
    waveguide: WaveguideConfig = field(default_factory=WaveguideConfig)
    concentration: ConcentrationConfig = field(default_factory=ConcentrationConfig)
    output_dir: Optional[str] = None
    workers: int = 1
    notes: Dict[str, Any] = field(default_factory=dict)

    _SECTIONS = {
        "model": ModelConfig,
        "grid": GridConfig,
        "solver": SolverConfig,
        "source": SourceConfig,
        "norms": NormConfig,
        "rays": RayConfig,
        "identities": IdentityConfig,
        "waveguide": WaveguideConfig,
        "concentration": ConcentrationConfig,
    }
    _SCALARS = ("experiment", "epsilon", "epsilon_list", "bc", "output_dir", "workers", "notes")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Build a config from its document form; unknown keys are rejected."""
        if not isinstance(data, dict):
            raise ConfigValidationError("experiment configuration must be a JSON object")
        unknown = sorted(set(data) - set(cls._SECTIONS) - set(cls._SCALARS))
        if unknown:
            raise ConfigValidationError(f"unknown configuration keys: {', '.join(unknown)}")

        try:
            sections = {
                name: section.from_dict(data.get(name) or {})
                for name, section in cls._SECTIONS.items()
            }
            return cls(
                experiment=str(data.get("experiment", "solve")),
                epsilon=float(data.get("epsilon", 0.1)),
                epsilon_list=_floats(data.get("epsilon_list", [])),
                bc=str(data.get("bc", "outgoing")),
                output_dir=data.get("output_dir"),
                workers=int(data.get("workers", 1)),
                notes=dict(data.get("notes") or {}),
                **sections,
            )
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigValidationError(f"malformed configuration value: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {name: copy.deepcopy(getattr(self, name)) for name in self._SCALARS}
        for name in self._SECTIONS:
            section = getattr(self, name)
            data[name] = section.to_dict() if hasattr(section, "to_dict") else asdict(section)
        return data

    # -- validation ---------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigValidationError naming the first offending field."""
        _require(self.experiment in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}")
        _require(self.model.id in MODEL_IDS, f"model.id must be one of {MODEL_IDS}")
        _require(self.bc in BOUNDARY_CONDITIONS, f"bc must be one of {BOUNDARY_CONDITIONS}")
        _require(self.workers >= 1, "workers must be >= 1")

        _positive("grid.L", self.grid.L)
        _require(self.grid.Nr >= 4, "grid.Nr must be >= 4")
        _require(
            self.grid.Ntheta >= 8 and self.grid.Ntheta % 2 == 0,
            "grid.Ntheta must be even and >= 8",
        )
        _require(
            math.isfinite(self.epsilon) and self.epsilon >= 0.0, "epsilon must be finite and >= 0"
        )
        _require(all(e > 0.0 for e in self.epsilon_list), "epsilon_list entries must be > 0")
        _require(
            not (self.epsilon == 0.0 and self.bc == "dirichlet0"),
            "epsilon = 0 requires bc = outgoing",
        )

        self._validate_model()

        _require(
            self.solver.method is None or self.solver.method in SOLVER_METHODS,
            f"solver.method must be one of {SOLVER_METHODS}",
        )
        _positive("solver.tol", self.solver.tol)
        _require(self.solver.max_iter >= 1, "solver.max_iter must be >= 1")

        _require(self.source.kind in SOURCE_KINDS, f"source.kind must be one of {SOURCE_KINDS}")
        if self.source.kind == "ring":
            _positive("source.width", self.source.width)
            _require(self.source.r0 >= 0.0, "source.r0 must be >= 0")
        elif self.source.kind == "gaussian":
            _positive("source.sigma", self.source.sigma)
            _require(len(self.source.center) == 2, "source.center must have two coordinates")
        else:
            _require(bool(self.source.path), "source.path is required for kind = file")

        if self.norms.R0 is not None:
            _require(0.0 <= self.norms.R0 < self.grid.L, "norms.R0 must lie in [0, grid.L)")
        _require(self.norms.weight in SOMMERFELD_WEIGHTS, f"norms.weight must be one of {SOMMERFELD_WEIGHTS}")
        _require(
            all(0.0 < R <= self.grid.L for R in self.norms.radii),
            "norms.radii must lie in (0, grid.L]",
        )

        rays = self.rays
        if rays.lam is not None:
            _positive("rays.lambda", rays.lam)
        _require(rays.Nq >= 8, "rays.Nq must be >= 8")
        _positive("rays.dt", rays.dt)
        _positive("rays.t_max", rays.t_max)
        _positive("rays.tol", rays.tol)
        _require(rays.theta_samples >= 8, "rays.theta_samples must be >= 8")
        _require(rays.sample_every >= 1, "rays.sample_every must be >= 1")
        _require(
            all(len(q) == 2 for q in rays.queries), "rays.queries entries must be [x1, x2] pairs"
        )
        _require(
            rays.radii == sorted(rays.radii) and all(r > 0 for r in rays.radii),
            "rays.radii must be positive and increasing",
        )

        _require(self.identities.Psi in PSI_MULTIPLIERS, f"identities.Psi must be one of {PSI_MULTIPLIERS}")
        _require(self.identities.psi in ("constant", "angular"), "identities.psi must be constant or angular")

        if self.experiment == "waveguide":
            wg = self.waveguide
            _require(
                0.0 < wg.lam < 0.5,
                f"waveguide.lambda = {wg.lam} violates the admissible window 0 < lambda < 1/2",
            )
            _require(
                len(wg.epsilon_list) >= 2 and all(1e-5 < e < 1.0 for e in wg.epsilon_list),
                "waveguide.epsilon_list needs >= 2 entries in (1e-5, 1)",
            )
            _require(
                all(a > b for a, b in zip(wg.epsilon_list, wg.epsilon_list[1:])),
                "waveguide.epsilon_list must be decreasing",
            )
            _require(wg.nodes >= 4, "waveguide.nodes must be >= 4")
            _require(wg.y_max >= 40.0, "waveguide.y_max must be >= 40")
            _require(wg.R_max > 2.0, "waveguide.R_max must exceed 2")

        if self.experiment == "eps-sweep":
            eps = self.epsilon_list
            _require(len(eps) >= 3, "eps-sweep needs at least 3 epsilon_list values")
            _require(all(a > b for a, b in zip(eps, eps[1:])), "epsilon_list must be decreasing")

        if self.experiment == "concentration":
            _require(len(self.concentration.L_list) >= 3, "concentration.L_list needs >= 3 sizes")
            _require(
                all(L > 0 for L in self.concentration.L_list),
                "concentration.L_list entries must be > 0",
            )
            _require(self.model.profile is not None, "concentration needs model.profile")

        return self

    def _validate_model(self) -> None:
        model = self.model
        if model.lam is not None:
            _positive("model.lambda", model.lam)
        _require(model.r_moll >= 0.0, "model.r_moll must be >= 0")
        _require(model.gamma >= 0.0, "model.gamma must be >= 0")
        if model.delta is not None:
            _positive("model.delta", model.delta)
        _require(0.0 <= model.n1_share <= 1.0, "model.n1_share must lie in [0, 1]")
        if model.id == "saito_tilt":
            _positive("model.r_moll", model.r_moll)
            lam = model.lam if model.lam is not None else 10.0
            _require(lam > 1.0, "saito_tilt needs lambda > 1 so that n stays positive")
        if model.id == "angular_limit":
            _require(model.profile is not None, "angular_limit needs model.profile")
        if model.id == "waveguide" and model.lam is not None:
            _require(
                0.0 < model.lam < 0.5,
                f"model.lambda = {model.lam} violates the admissible window 0 < lambda < 1/2",
            )
        if model.profile is not None:
            profile = model.profile
            bound = profile.n0
            if bound is None:
                bound = profile.mean - sum(abs(c) for c in profile.cos + profile.sin)
            _require(bound > 0.0, "model.profile must stay positive (n0 > 0)")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigValidationError(message)


def _positive(name: str, value: float) -> None:
    _require(math.isfinite(value) and value > 0.0, f"{name} must be > 0 (got {value})")


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigValidationError(f"override {key}: '{part}' is not a section")
        node = child
    node[parts[-1]] = value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``key=value`` overrides; values are JSON literals, else plain strings."""
    result = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigValidationError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigValidationError(f"override '{item}' has an empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_dotted(result, key, value)
    return result


def load_experiment_config(
    path: Path,
    overrides: Iterable[str] = (),
    experiment: Optional[str] = None,
) -> ExperimentConfig:
    """Read, override and validate an experiment configuration document."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigValidationError(f"cannot read config {path}: {e}") from e

    try:
        if path.suffix.lower() in (".yml", ".yaml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigValidationError(f"cannot parse config {path}: {e}") from e

    data = apply_overrides(data, overrides)
    if experiment is not None:
        data["experiment"] = experiment
    config = ExperimentConfig.from_dict(data).validate()
    logger.info(f"Experiment configuration loaded from: {path}")
    return config
