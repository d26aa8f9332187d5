from functools import lru_cache
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union
import logging

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from yaml.nodes import MappingNode, SequenceNode

from processing.estimator import EstimatorTuning
from processing.optics import (ClassicalCurveModel, DispersionProfile, QuantumCurveModel, SpectrumModel,
                               calibrate_beta2_length, calibrate_beta3_length)
from processing.scan import DualCoreScenario, NoiseConfig, ScanPlan, scaled_models
from utils.errors import ConfigError
from utils.helpers import SPEED_OF_LIGHT, write_text

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

SNAPSHOT_NAME = "config_snapshot.yaml"


class SpectrumSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    center_wavelength: float = Field(1560e-9, gt=0)
    fwhm_wavelength: float = Field(44e-9, gt=0)


class DispersionSection(BaseModel):
    """Sample dispersion per unit length; null coefficients are calibrated against the targets."""
    model_config = ConfigDict(extra="forbid")

    beta2: Optional[float] = Field(None, description="s^2/m; null = calibrate to target_classical_fwhm.")
    beta3: Optional[float] = Field(None, description="s^3/m; null = calibrate to target_dip_broadening.")
    extra_orders: List[Tuple[int, float]] = Field(default_factory=list, description="[order, beta_k] pairs, order >= 4.")
    target_classical_fwhm: float = Field(134e-6, gt=0)
    target_dip_broadening: float = Field(1.19, gt=1)

    @field_validator("extra_orders")
    @classmethod
    def check_orders(cls, v):
        orders = [k for k, _ in v]
        if any(k < 4 for k in orders) or len(set(orders)) != len(orders):
            raise ValueError("extra_orders must have distinct orders >= 4.")
        return v


class QuantumSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dip_visibility: float = Field(0.74, ge=0, le=1)
    fringe_visibility: float = Field(1.0, ge=0, le=1)
    fringe_envelope: bool = False
    pump_wavelength: Optional[float] = Field(None, gt=0, description="null = half the center wavelength.")


class ClassicalSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    visibility: float = Field(0.5, ge=0, le=1)
    carrier_wavelength: Optional[float] = Field(None, gt=0, description="null = the center wavelength.")


class BenchSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_trials: int = Field(70, ge=2)
    sweep_trials: int = Field(100, ge=2)
    bin_count: int = Field(12, ge=1)
    n_jobs: int = 1
    max_failure_fraction: float = Field(0.05, ge=0, le=1)
    point_counts: List[int] = Field(default_factory=lambda: [2000, 1000, 500, 250, 100])
    beta2_length_values: Optional[List[float]] = Field(None, description="beta2*L values (s^2); null = 0 .. calibrated in 5 steps.")
    drift_sigma_values: Optional[List[float]] = Field(None, description="Drift stds (m); null = 0 .. twice the configured value in 5 steps.")
    database_url: Optional[str] = None

    @field_validator("point_counts")
    @classmethod
    def check_point_counts(cls, v):
        if not v or any(n < 50 for n in v):
            raise ValueError("point_counts must be a non-empty list of counts >= 50.")
        return v


class RunConfig(BaseModel):
    """Complete, strictly parsed description of a simulation/benchmark run. SI units throughout."""
    model_config = ConfigDict(extra="forbid")

    spectrum: SpectrumSection = SpectrumSection()
    dispersion: DispersionSection = DispersionSection()
    quantum: QuantumSection = QuantumSection()
    classical: ClassicalSection = ClassicalSection()
    scan: ScanPlan = ScanPlan()
    noise: NoiseConfig = NoiseConfig()
    scenario: DualCoreScenario = DualCoreScenario()
    estimator: EstimatorTuning = EstimatorTuning()
    bench: BenchSection = BenchSection()
    root_seed: int = Field(20221201, ge=0)
    output_dir: str = "outputs"

    def spectrum_model(self) -> SpectrumModel:
        return SpectrumModel(**self.spectrum.model_dump())

    def resolve(self) -> "RunConfig":
        """Returns a copy with null dispersion coefficients replaced by their calibrated values."""
        if self.dispersion.beta2 is not None and self.dispersion.beta3 is not None:
            return self
        beta2, beta3 = _calibrated_coefficients(self.spectrum_model(), self.scenario.sample_length,
                                                self.dispersion.beta2, self.dispersion.beta3,
                                                tuple(map(tuple, self.dispersion.extra_orders)),
                                                self.dispersion.target_classical_fwhm,
                                                self.dispersion.target_dip_broadening)
        dispersion = self.dispersion.model_copy(update={"beta2": beta2, "beta3": beta3})
        return self.model_copy(update={"dispersion": dispersion})

    def dispersion_profile(self) -> DispersionProfile:
        section = self.resolve().dispersion
        coefficients = [(2, section.beta2), (3, section.beta3)] + [tuple(p) for p in section.extra_orders]
        return DispersionProfile(sample_length=self.scenario.sample_length, phase_coefficients=tuple(coefficients))

    def models(self) -> Tuple[QuantumCurveModel, ClassicalCurveModel]:
        """Quantum and classical curve models with rates set from the noise budget."""
        spectrum = self.spectrum_model()
        dispersion = self.dispersion_profile()
        pump = None if self.quantum.pump_wavelength is None else 2 * np.pi * SPEED_OF_LIGHT / self.quantum.pump_wavelength
        carrier = None if self.classical.carrier_wavelength is None else 2 * np.pi * SPEED_OF_LIGHT / self.classical.carrier_wavelength
        quantum = QuantumCurveModel(spectrum=spectrum, coincidence_baseline=0.0, dip_visibility=self.quantum.dip_visibility,
                                    fringe_visibility=self.quantum.fringe_visibility, fringe_envelope=self.quantum.fringe_envelope,
                                    pump_angular_frequency=pump, dispersion=dispersion)
        classical = ClassicalCurveModel(spectrum=spectrum, mean_intensity=0.0, visibility=self.classical.visibility,
                                        carrier_angular_frequency=carrier, dispersion=dispersion)
        return scaled_models(quantum, classical, self.noise)

    def with_overrides(self, seed: Optional[int] = None, trials: Optional[int] = None,
                       output_dir: Optional[str] = None, sweep_trials: Optional[int] = None) -> "RunConfig":
        """
        Applies command-line overrides and re-validates.

        :raises ConfigError: If an override violates a constraint (e.g. fewer than two trials).
        """
        data = self.model_dump()
        if seed is not None:
            data["root_seed"] = seed
        if trials is not None:
            data["bench"]["n_trials"] = trials
        if sweep_trials is not None:
            data["bench"]["sweep_trials"] = sweep_trials
        if output_dir is not None:
            data["output_dir"] = output_dir
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            error = e.errors()[0]
            location = ".".join(map(str, error["loc"]))
            raise ConfigError(f"{location}: {error['msg']}", filename="<command line>", original_error=e)


@lru_cache(maxsize=32)
def _calibrated_coefficients(spectrum: SpectrumModel, sample_length: float, beta2: Optional[float], beta3: Optional[float],
                             extra_orders: Tuple[Tuple[int, float], ...], target_fwhm: float,
                             broadening: float) -> Tuple[float, float]:
    # beta3 first: the dip ignores beta2, the envelope does not ignore beta3
    if beta3 is None:
        beta3 = calibrate_beta3_length(spectrum, broadening) / sample_length
    if beta2 is None:
        fixed = DispersionProfile(sample_length=sample_length, phase_coefficients=((3, beta3),) + extra_orders)
        beta2 = calibrate_beta2_length(spectrum, target_fwhm, odd_phase=fixed) / sample_length
    logger.info(f"Dispersion coefficients: beta2={beta2:.6e} s^2/m, beta3={beta3:.6e} s^3/m (L={sample_length} m)")
    return float(beta2), float(beta3)


def _line_of(root: Optional[Any], loc: Tuple[Union[str, int], ...]) -> Optional[int]:
    """1-based line of the deepest YAML node reachable along a pydantic error location."""
    if root is None:
        return None
    node, line = root, root.start_mark.line + 1
    for key in loc:
        if isinstance(node, MappingNode):
            match = next(((k, v) for k, v in node.value if k.value == str(key)), None)
            if match is None:
                break
            line = match[0].start_mark.line + 1
            node = match[1]
        elif isinstance(node, SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, filename: str = "<config>") -> RunConfig:
    """
    Parses YAML text into a RunConfig.

    :raises ConfigError: On YAML syntax errors or invalid/unknown keys, anchored to the offending line.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}", filename=filename,
                          line=mark.line + 1 if mark else None, original_error=e)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("Top level of a configuration must be a mapping.", filename=filename, line=1)

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        loc = tuple(error["loc"])
        raise ConfigError(f"{'.'.join(map(str, loc))}: {error['msg']}", filename=filename,
                          line=_line_of(root, loc), original_error=e)


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Loads a run configuration; None gives the built-in defaults.

    :raises ConfigError: If the file cannot be read or does not validate.
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read configuration: {e}", filename=str(path), original_error=e)
    config = parse_config(text, filename=str(path))
    logger.info(f"Loaded configuration from {path}")
    return config


def config_to_yaml(config: RunConfig) -> str:
    """Fully resolved configuration (calibrated coefficients included) as YAML."""
    return yaml.safe_dump(config.resolve().model_dump(mode="json"), sort_keys=False)


def write_config_snapshot(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Writes config_snapshot.yaml next to a run's outputs; loading it reproduces the run."""
    return write_text(Path(out_dir) / SNAPSHOT_NAME, config_to_yaml(config))
