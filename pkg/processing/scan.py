from typing import Literal, Optional, Tuple, Union
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from processing.optics import (ClassicalCurveModel, QuantumCurveModel, classical_intensity,
                               dip_fwhm, quantum_coincidence)
from utils.errors import DomainError, SimulationError
from utils.helpers import path_to_delay

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

MAX_POINTS = 10_000_000
_MAX_REDRAWS = 1000

Channel = Literal["singles", "coincidences"]
Core = Literal["core1", "core2"]
CurveModel = Union[QuantumCurveModel, ClassicalCurveModel]


class ScanPlan(BaseModel):
    """
    Commanded nanopositioner grid: floor(span/step) + 1 points, centered on `center`.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    center: float = Field(0.0, description="Scan center (m of path delay).")
    span: float = Field(120e-6, gt=0, description="Scan range (m).")
    step: float = Field(0.24e-6, gt=0, description="Commanded step (m).")
    integration_time: float = Field(0.5, gt=0, description="Acquisition time per point (s).")
    overhead_per_point: float = Field(0.1, ge=0, description="Motion and readout time per point (s).")

    @model_validator(mode="after")
    def check_grid(self):
        if self.span < self.step:
            raise ValueError(f"span ({self.span}) must be at least one step ({self.step}).")
        if self.span / self.step >= MAX_POINTS:
            raise ValueError(f"span/step gives more than {MAX_POINTS} points.")
        return self

    @property
    def point_count(self) -> int:
        # tolerate 120e-6 / 0.24e-6 = 499.99999999999994
        return int(np.floor(round(self.span / self.step, 9))) + 1

    @property
    def duration(self) -> float:
        """Wall-clock time of one scan (s)."""
        return self.point_count * (self.integration_time + self.overhead_per_point)

    def relative_positions(self) -> np.ndarray:
        n = self.point_count
        return self.step * (np.arange(n) - (n - 1) / 2.0)

    def commanded_positions(self) -> np.ndarray:
        return self.center + self.relative_positions()


class NoiseConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    position_jitter_sigma: float = Field(20e-9, ge=0, description="Std of the stage position error (m).")
    singles_peak_rate: float = Field(7.5e5, gt=0, description="Upper envelope of the singles rate (1/s).")
    coincidence_to_singles_ratio: float = Field(0.01, gt=0, le=1)
    drift_sigma: float = Field(23e-9, ge=0, description="Std of a random linear drift over one core scan (m), drawn per core.")
    estimator_sees_true_positions: bool = True
    shot_noise: bool = True


class ScanRecord(BaseModel):
    """One interferogram: reported positions and counts for one channel of one core."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    positions: np.ndarray
    counts: np.ndarray
    integration_time: float = Field(..., gt=0)
    channel: Channel
    core: Core = "core1"
    seed: int = 0
    warning: Optional[str] = None

    @field_validator("positions", "counts", mode="before")
    @classmethod
    def as_array(cls, v):
        return np.asarray(v)

    @model_validator(mode="after")
    def check_arrays(self):
        if self.positions.ndim != 1 or self.positions.shape != self.counts.shape:
            raise ValueError("positions and counts must be 1-D arrays of the same length.")
        if self.positions.size > 1 and not np.all(np.diff(self.positions) > 0):
            raise ValueError("positions must be strictly increasing.")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative.")
        return self

    @property
    def is_sampled(self) -> bool:
        """True when counts are Poisson draws rather than expected values."""
        return np.issubdtype(self.counts.dtype, np.integer)


class DualCoreScenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta_tau_true: float = Field(41.1e-6, description="Path-delay offset of core 2 relative to core 1 (m).")
    sample_length: float = Field(0.5, gt=0, description="Fiber length L (m).")
    sample_length_uncertainty: float = Field(1e-4, ge=0)
    window_offset: Optional[float] = Field(None, description="Core 2 scan window offset (m); None follows delta_tau_true.")
    drift_core1: float = Field(0.0, description="Linear position drift over one core-1 scan (m).")
    drift_core2: float = Field(0.0, description="Linear position drift over one core-2 scan (m).")

    @property
    def offset(self) -> float:
        return self.delta_tau_true if self.window_offset is None else self.window_offset


class CorePairRecords(BaseModel):
    """The four records of one core-switching measurement, sharing positions per core."""
    singles: Tuple[ScanRecord, ScanRecord]
    coincidences: Tuple[ScanRecord, ScanRecord]

    def for_mode(self, mode: str) -> Tuple[ScanRecord, ScanRecord]:
        return self.coincidences if mode == "quantum" else self.singles


def build_scan_plan(center: float, span: float, step: float, integration_time: float,
                    overhead_per_point: float = 0.1) -> ScanPlan:
    """
    Builds a uniform commanded scan plan.

    :raises DomainError: On non-positive span/step/integration time, span < step, or an oversized grid.
    """
    try:
        plan = ScanPlan(center=center, span=span, step=step, integration_time=integration_time,
                        overhead_per_point=overhead_per_point)
    except ValidationError as e:
        error = e.errors()[0]
        raise DomainError(f"Invalid scan plan: {error['msg']}", parameter=".".join(map(str, error["loc"])) or "plan",
                          value=error.get("input"))
    logger.info(f"Scan plan: {plan.point_count} points over {plan.span * 1e6:.1f} um, ~{plan.duration:.0f} s per scan")
    return plan


def scaled_models(quantum: QuantumCurveModel, classical: ClassicalCurveModel,
                  noise: NoiseConfig) -> Tuple[QuantumCurveModel, ClassicalCurveModel]:
    """
    Sets absolute rates from the noise budget.

    The singles curve peaks at I0 (1 + V) = singles_peak_rate; the coincidence curve
    peaks at P_c(0) (2 + v_f) = ratio * singles_peak_rate.
    """
    mean_intensity = noise.singles_peak_rate / (1.0 + classical.visibility)
    baseline = noise.coincidence_to_singles_ratio * noise.singles_peak_rate / (2.0 + quantum.fringe_visibility)
    return (quantum.model_copy(update={"coincidence_baseline": baseline}),
            classical.model_copy(update={"mean_intensity": mean_intensity}))


def curve_rate(model: CurveModel, path_delay: np.ndarray) -> np.ndarray:
    """Ideal rate of either curve model at the given path delays (m)."""
    tau = path_to_delay(path_delay)
    if isinstance(model, QuantumCurveModel):
        return quantum_coincidence(model, tau)
    return classical_intensity(model, tau)


def channel_of(model: CurveModel) -> Channel:
    return "coincidences" if isinstance(model, QuantumCurveModel) else "singles"


def _as_written(positions: np.ndarray) -> np.ndarray:
    # positions are stored with 12 significant digits on disk; keep memory identical
    return np.array([float(f"{p:.12g}") for p in positions])


def _jitter(count: int, sigma: float, step: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0:
        return np.zeros(count)
    offsets = rng.normal(0.0, sigma, count)
    relative = step * np.arange(count)
    for attempt in range(_MAX_REDRAWS):
        bad = np.nonzero(np.diff(relative + offsets) <= 0)[0]
        if bad.size == 0:
            if attempt:
                logger.warning(f"Jitter redrawn {attempt} time(s) to keep positions ordered.")
            return offsets
        idx = np.unique(np.concatenate([bad, bad + 1]))
        offsets[idx] = rng.normal(0.0, sigma, idx.size)
    raise SimulationError("Could not draw ordered jittered positions.", {"points": count, "jitter": sigma, "step": step})


def _draw_counts(expected: np.ndarray, noise: NoiseConfig, rng: np.random.Generator, channel: str) -> np.ndarray:
    if not np.all(np.isfinite(expected)) or np.any(expected < 0):
        raise SimulationError(f"Expected {channel} counts are negative or not finite.",
                              {"channel": channel, "min": float(np.nanmin(expected))})
    if not noise.shot_noise:
        return expected.astype(float)
    return rng.poisson(expected).astype(np.int64)


def _random_drift(sigma: float, rng: np.random.Generator) -> float:
    return float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0


def _drift_profile(count: int, drift: float) -> np.ndarray:
    if drift == 0 or count < 2:
        return np.zeros(count)
    return drift * np.arange(count) / (count - 1)


def simulate_scan(model: CurveModel, plan: ScanPlan, noise: NoiseConfig, seed: int) -> ScanRecord:
    """
    Simulates one interferogram: Gaussian position jitter and Poisson counts.

    position_n = commanded_n + N(0, jitter^2), mu_n = rate(position_n) * integration_time,
    counts_n ~ Poisson(mu_n). Deterministic for a given seed.

    :param model: QuantumCurveModel (coincidences) or ClassicalCurveModel (singles).
    :param plan: Commanded scan.
    :param noise: Noise settings.
    :param seed: Non-negative integer seed.
    :return: ScanRecord for core1.
    """
    position_rng = np.random.default_rng([seed, 0, 0])
    count_rng = np.random.default_rng([seed, 0, 1])
    relative = plan.relative_positions()
    local = relative + _jitter(relative.size, noise.position_jitter_sigma, plan.step, position_rng)
    true_positions = plan.center + local

    channel = channel_of(model)
    expected = curve_rate(model, true_positions) * plan.integration_time
    counts = _draw_counts(expected, noise, count_rng, channel)
    reported = true_positions if noise.estimator_sees_true_positions else plan.commanded_positions()
    record = ScanRecord(positions=_as_written(reported), counts=counts, integration_time=plan.integration_time,
                        channel=channel, core="core1", seed=seed)
    logger.info(f"Simulated {channel} scan: {relative.size} points, {float(np.sum(counts)):.0f} total counts (seed {seed})")
    return record


def _window_warning(center: float, plan: ScanPlan, window_center: float, margin: float) -> Optional[str]:
    lo = window_center - plan.span / 2.0 + margin
    hi = window_center + plan.span / 2.0 - margin
    if not lo <= center <= hi:
        return f"dip center {center:.4e} m lies outside the scan window [{lo:.4e}, {hi:.4e}] m"
    return None


def simulate_core_pair(scenario: DualCoreScenario, quantum: QuantumCurveModel, classical: ClassicalCurveModel,
                       plan: ScanPlan, noise: NoiseConfig, seed: int) -> CorePairRecords:
    """
    Simulates the core-switching measurement: both cores, singles and coincidences in one pass.

    Core 2 sees the core-1 curves translated by delta_tau_true. Its window is shifted by
    `scenario.offset`; with the default offset the noiseless core-2 records equal the core-1
    records on shifted positions. Singles and coincidences of one core share the positions.

    Each core also drifts linearly by its scenario drift plus N(0, drift_sigma^2), drawn per core.
    A drift d stretches the scan by d/span about the window start, which shifts a chirped
    (dispersed) classical fringe far more than the unchirped HOM dip.

    RNG streams are (seed, core index, stream) with stream 0 positions, 1 singles, 2 coincidences,
    3 drift.

    :return: CorePairRecords; records whose dip falls outside the window carry a warning.
    """
    margin = 0.5 * dip_fwhm(quantum.spectrum)
    offsets = (0.0, scenario.offset)
    shifts = (0.0, scenario.delta_tau_true)
    drifts = (scenario.drift_core1, scenario.drift_core2)
    relative = plan.relative_positions()
    singles, coincidences = [], []

    for index, core in enumerate(("core1", "core2")):
        position_rng = np.random.default_rng([seed, index, 0])
        local = relative + _jitter(relative.size, noise.position_jitter_sigma, plan.step, position_rng)
        # the light sees the drifted stage; the encoder does not
        drift = drifts[index] + _random_drift(noise.drift_sigma, np.random.default_rng([seed, index, 3]))
        argument = local + plan.center + (offsets[index] - shifts[index]) + _drift_profile(relative.size, drift)
        stage = (local if noise.estimator_sees_true_positions else relative) + plan.center + offsets[index]
        positions = _as_written(stage)
        warning = _window_warning(shifts[index], plan, plan.center + offsets[index], margin)
        if warning:
            logger.warning(f"{core}: {warning}")

        for stream, model, bucket in ((1, classical, singles), (2, quantum, coincidences)):
            expected = curve_rate(model, argument) * plan.integration_time
            counts = _draw_counts(expected, noise, np.random.default_rng([seed, index, stream]), channel_of(model))
            bucket.append(ScanRecord(positions=positions, counts=counts, integration_time=plan.integration_time,
                                     channel=channel_of(model), core=core, seed=seed, warning=warning))

    logger.info(f"Simulated core pair (seed {seed}): delta_tau_true={scenario.delta_tau_true * 1e6:.3f} um")
    return CorePairRecords(singles=tuple(singles), coincidences=tuple(coincidences))
