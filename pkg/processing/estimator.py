from typing import Any, Dict, Literal, NamedTuple, Optional, Tuple
import logging

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import curve_fit

from processing.algorithms.fitting import unwrap_with_jumps, weighted_line_fit
from processing.algorithms.fourier import default_frequency_grid, direct_ndft, phase_noise_shape, uniform_resample
from processing.optics import SpectrumModel
from processing.scan import ScanRecord
from utils.errors import DomainError, EstimationError
from utils.helpers import SPEED_OF_LIGHT

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

Mode = Literal["quantum", "classical"]
BandMode = Literal["quantum_lowpass", "classical_sideband", "quantum_fringe"]

MIN_BAND_BINS = 5
_CHANNEL_FOR_MODE = {"quantum": "coincidences", "classical": "singles"}


class CenteredRecord(BaseModel):
    """A ScanRecord after baseline subtraction; values may be negative."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    positions: np.ndarray
    values: np.ndarray
    coarse_center: float
    baseline: float
    baseline_points: int
    baseline_mask: Optional[np.ndarray] = None
    channel: str
    core: str

    def mean_weights(self) -> np.ndarray:
        """Weights of the subtracted baseline mean over the samples."""
        mask = np.ones(self.positions.size, bool) if self.baseline_mask is None else self.baseline_mask
        return mask / np.count_nonzero(mask)


class FourierSpectrum(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frequencies: np.ndarray
    amplitudes: np.ndarray
    source: Dict[str, Any] = {}

    @model_validator(mode="after")
    def check_grid(self):
        if self.frequencies.shape != self.amplitudes.shape:
            raise ValueError("frequencies and amplitudes must have the same shape.")
        if self.frequencies.size > 1 and not np.all(np.diff(self.frequencies) > 0):
            raise ValueError("frequencies must be strictly increasing.")
        return self


class BandSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: BandMode
    f_lo: float = Field(..., ge=0, description="Lower band edge (1/m).")
    f_hi: float = Field(..., gt=0, description="Upper band edge (1/m).")
    amplitude_floor: float = Field(0.1, ge=0, lt=1)

    @model_validator(mode="after")
    def check_edges(self):
        if not self.f_lo < self.f_hi:
            raise ValueError(f"Band edges must satisfy f_lo < f_hi, got ({self.f_lo}, {self.f_hi}).")
        return self


class DeltaTauEstimate(BaseModel):
    delta_tau: float = Field(..., description="Signed path-delay offset of record 2 relative to record 1 (m).")
    standard_error: float = Field(..., ge=0)
    mode: str
    band: BandSpec
    residual_rms: float
    unwrap_jumps: int
    bins: int

    @field_validator("residual_rms")
    @classmethod
    def finite(cls, v):
        if not np.isfinite(v):
            raise ValueError("residual diagnostics must be finite.")
        return v

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "delta_tau_m": self.delta_tau,
            "std_err_m": self.standard_error,
            "mode": self.mode,
            "band": self.band.model_dump(),
            "diagnostics": {
                "abs_delta_tau_m": abs(self.delta_tau),
                "residual_rms_rad": self.residual_rms,
                "unwrap_jumps": self.unwrap_jumps,
                "bins": self.bins,
            },
        }


class EstimatorTuning(BaseModel):
    """Knobs of the Fourier phase-slope estimator; lengths in m."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    weighted: bool = True
    amplitude_floor: float = Field(0.1, ge=0, lt=1)
    quantum_fwhm: float = Field(25.8e-6, gt=0, description="Expected HOM dip FWHM.")
    classical_fwhm: float = Field(134e-6, gt=0, description="Expected classical envelope FWHM.")
    exclusion_factor: float = Field(2.0, ge=0)
    smoothing_factor: float = Field(3.0, gt=0)
    min_baseline_points: int = Field(50, ge=1)
    quantum_band_factor: float = Field(1.5, gt=0)
    sideband_fraction: float = Field(0.4, gt=0)
    use_fringe_band: bool = False
    resample: bool = Field(True, description="Interpolate each record onto a uniform grid before the transform.")


class InterferogramFit(NamedTuple):
    center: float
    center_stderr: float
    fwhm: float
    visibility: float
    baseline: float


def _coarse_center(positions: np.ndarray, counts: np.ndarray, smoothing_width: float, expect: str) -> float:
    mean_step = (positions[-1] - positions[0]) / max(positions.size - 1, 1)
    window = int(round(smoothing_width / mean_step)) if mean_step > 0 else 1
    window = max(1, min(window, positions.size // 2))
    series = pd.Series(counts, dtype=float)
    if expect == "dip":
        smoothed = series.rolling(window, center=True, min_periods=1).mean()
        return float(positions[int(np.argmin(smoothed.to_numpy()))])
    power = (series - series.median()) ** 2
    smoothed = power.rolling(window, center=True, min_periods=1).mean()
    return float(positions[int(np.argmax(smoothed.to_numpy()))])


def preprocess(record: ScanRecord, exclusion_halfwidth: float, smoothing_width: float,
               expect: Literal["dip", "fringe"] = "dip", min_baseline_points: int = 50) -> CenteredRecord:
    """
    Subtracts the mean level measured outside the interferogram feature.

    The feature is located coarsely as the extremum of a centered moving average of width
    `smoothing_width` (the minimum of the counts for a dip, the maximum of the squared
    deviation from the median for a fringe packet). Points farther than
    `exclusion_halfwidth` from it form the baseline; a zero halfwidth uses every point.

    :raises EstimationError: (stage preprocess) on an empty record or too few baseline points.
    """
    if record.positions.size == 0:
        raise EstimationError("Record is empty.", stage="preprocess")
    positions = record.positions.astype(float)
    counts = record.counts.astype(float)
    center = _coarse_center(positions, counts, smoothing_width, expect)

    outside = np.abs(positions - center) > exclusion_halfwidth if exclusion_halfwidth > 0 else np.ones(positions.size, bool)
    n_outside = int(np.count_nonzero(outside))
    if n_outside < min_baseline_points:
        raise EstimationError(f"Only {n_outside} points outside the exclusion window (need {min_baseline_points}).",
                              stage="preprocess")
    if exclusion_halfwidth > 0 and (center - exclusion_halfwidth < positions[0] or center + exclusion_halfwidth > positions[-1]):
        logger.warning(f"{record.core} {record.channel}: exclusion window around {center:.4e} m reaches past the scan edge.")

    baseline = float(np.mean(counts[outside]))
    logger.debug(f"{record.core} {record.channel}: coarse center {center:.4e} m, baseline {baseline:.6g} from {n_outside} points")
    return CenteredRecord(positions=positions, values=counts - baseline, coarse_center=center, baseline=baseline,
                          baseline_points=n_outside, baseline_mask=outside, channel=record.channel, core=record.core)


def resample_uniform(centered: CenteredRecord) -> CenteredRecord:
    """
    Moves a centered record onto the uniform grid that best fits its positions (cubic interpolation).

    Leaves uniformly sampled records unchanged up to rounding.

    :raises EstimationError: (stage ndft) if the record is too short to interpolate.
    """
    try:
        positions, values = uniform_resample(centered.positions, centered.values)
    except ValueError as e:
        raise EstimationError(f"Cannot resample {centered.core} {centered.channel}: {e}", stage="ndft", original_error=e)
    return centered.model_copy(update={"positions": positions, "values": values})


def ndft(centered: CenteredRecord, freq_grid) -> FourierSpectrum:
    """
    Exact nonuniform DFT X(f) = sum_n x_n exp(-2 pi i f p_n) of a centered record.

    :raises EstimationError: (stage ndft) on an empty record or non-finite input.
    """
    if centered.positions.size == 0:
        raise EstimationError("Cannot transform an empty record.", stage="ndft")
    if not (np.all(np.isfinite(centered.positions)) and np.all(np.isfinite(centered.values))):
        raise EstimationError("Positions and counts must be finite.", stage="ndft")
    frequencies = np.asarray(freq_grid, dtype=float)
    amplitudes = direct_ndft(centered.positions, centered.values, frequencies)
    return FourierSpectrum(frequencies=frequencies, amplitudes=amplitudes,
                           source={"channel": centered.channel, "core": centered.core, "points": centered.positions.size})


def band_select(spectrum: FourierSpectrum, band: BandSpec) -> FourierSpectrum:
    """
    Keeps the bins inside [f_lo, f_hi] whose magnitude reaches amplitude_floor times the band maximum.

    The f = 0 bin never survives a low-pass band: its phase is undefined after baseline subtraction.

    :raises EstimationError: (stage band_select) if fewer than 5 bins survive.
    """
    f = spectrum.frequencies
    inside = (f >= band.f_lo) & (f <= band.f_hi)
    if band.mode == "quantum_lowpass":
        inside &= f > 0
    if not np.any(inside):
        raise EstimationError(f"Band [{band.f_lo:.4g}, {band.f_hi:.4g}] 1/m does not overlap the frequency grid.", stage="band_select")

    magnitude = np.abs(spectrum.amplitudes)
    peak = float(np.max(magnitude[inside]))
    keep = inside & (magnitude >= band.amplitude_floor * peak)
    if peak == 0 or np.count_nonzero(keep) < MIN_BAND_BINS:
        raise EstimationError(f"Only {int(np.count_nonzero(keep)) if peak else 0} bins survive in the {band.mode} band (need {MIN_BAND_BINS}).",
                              stage="band_select")
    logger.debug(f"{band.mode}: {int(np.count_nonzero(keep))} of {int(np.count_nonzero(inside))} bins kept")
    return FourierSpectrum(frequencies=f[keep], amplitudes=spectrum.amplitudes[keep], source={**spectrum.source, "band": band.mode})


def differential_phase_fit(spec1: FourierSpectrum, spec2: FourierSpectrum, band: BandSpec,
                           mode: str = "quantum", weighted: bool = True,
                           centered: Optional[Tuple[CenteredRecord, CenteredRecord]] = None) -> DeltaTauEstimate:
    """
    Fits a line to the unwrapped differential phase arg(X2 conj(X1)) over the shared bins.

    The slope gives delta_tau = -slope / (2 pi); the intercept is free. Weights are
    |X1| |X2| unless `weighted` is False. Given the centered records behind the spectra, the
    standard error accounts for the correlation between neighbouring bins of an
    oversampled grid; without them the bins are treated as independent.

    :raises EstimationError: (stage phase_fit) if the spectra share fewer than 5 bins or
                             the unwrap needs more than bins/4 corrections.
    """
    common, i1, i2 = np.intersect1d(spec1.frequencies, spec2.frequencies, assume_unique=True, return_indices=True)
    if common.size < MIN_BAND_BINS:
        raise EstimationError(f"Spectra share only {common.size} bins.", stage="phase_fit")
    x1, x2 = spec1.amplitudes[i1], spec2.amplitudes[i2]

    phase, jumps = unwrap_with_jumps(np.angle(x2 * np.conj(x1)))
    if jumps > common.size / 4:
        raise EstimationError(f"Differential phase too noisy: {jumps} unwrap corrections over {common.size} bins.", stage="phase_fit")

    weights = None
    if weighted:
        weights = np.abs(x1) * np.abs(x2)
        weights = weights / np.max(weights)
    noise_shape = None
    if centered is not None:
        noise_shape = sum(phase_noise_shape(record.positions, common, amplitudes, record.mean_weights())
                          for record, amplitudes in zip(centered, (x1, x2)))
    fit = weighted_line_fit(common, phase, weights, noise_shape)
    estimate = DeltaTauEstimate(delta_tau=-fit.slope / (2 * np.pi), standard_error=fit.slope_stderr / (2 * np.pi),
                                mode=mode, band=band, residual_rms=fit.residual_rms, unwrap_jumps=jumps, bins=int(common.size))
    logger.debug(f"Phase fit over {common.size} bins: delta_tau={estimate.delta_tau:.6e} m +- {estimate.standard_error:.2e}")
    return estimate


def default_band(mode: str, tuning: EstimatorTuning, spectrum: Optional[SpectrumModel] = None) -> BandSpec:
    """
    Band used by estimate_delta_tau.

    quantum: (0, factor / expected dip FWHM]. classical: 1/lambda_c +- fraction of the
    sideband support, the full width at 1% of the Gaussian sideband. The experimental
    fringe band sits at 2/lambda_c with the quantum low-pass width.
    """
    spectrum = spectrum or SpectrumModel()
    lowpass = tuning.quantum_band_factor / tuning.quantum_fwhm
    if mode == "quantum" and tuning.use_fringe_band:
        fringe = 2.0 / spectrum.center_wavelength
        return BandSpec(mode="quantum_fringe", f_lo=fringe - lowpass, f_hi=fringe + lowpass, amplitude_floor=tuning.amplitude_floor)
    if mode == "quantum":
        return BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=lowpass, amplitude_floor=tuning.amplitude_floor)
    sigma_f = spectrum.sigma_omega / (2 * np.pi * SPEED_OF_LIGHT)
    half = tuning.sideband_fraction * 2.0 * sigma_f * np.sqrt(2.0 * np.log(100.0))
    carrier = 1.0 / spectrum.center_wavelength
    return BandSpec(mode="classical_sideband", f_lo=carrier - half, f_hi=carrier + half, amplitude_floor=tuning.amplitude_floor)


def common_frequency_grid(record1: ScanRecord, record2: ScanRecord) -> np.ndarray:
    """Default grid shared by a record pair, symmetric in the two records."""
    spans = [r.positions[-1] - r.positions[0] for r in (record1, record2)]
    points = max(record1.positions.size, record2.positions.size)
    span = max(spans)
    return default_frequency_grid(span, span / (points - 1))


def estimate_delta_tau(record1: ScanRecord, record2: ScanRecord, mode: Mode,
                       tuning: Optional[EstimatorTuning] = None,
                       spectrum: Optional[SpectrumModel] = None) -> DeltaTauEstimate:
    """
    Full pipeline: preprocess -> uniform resampling -> NDFT on the default grid -> band selection -> differential phase fit.

    :param record1: Core-1 record.
    :param record2: Core-2 record.
    :param mode: "quantum" (coincidences, dip band) or "classical" (singles, carrier sideband).
    :param tuning: Estimator settings; defaults when None.
    :param spectrum: Photon spectrum locating the classical sideband; the 1560/44 nm default when None.
    :return: DeltaTauEstimate of record2 relative to record1.
    :raises EstimationError: Tagged with the failing stage.
    """
    tuning = tuning or EstimatorTuning()
    if mode not in _CHANNEL_FOR_MODE:
        raise EstimationError(f"Unknown mode '{mode}'.", stage="preprocess")
    expected = _CHANNEL_FOR_MODE[mode]
    for record in (record1, record2):
        if record.channel != expected:
            raise EstimationError(f"{mode} mode needs {expected} records, got {record.channel} ({record.core}).", stage="preprocess")
        if record.positions.size < 2:
            raise EstimationError(f"{record.core} record has fewer than two points.", stage="preprocess")

    if mode == "quantum":
        halfwidth = tuning.exclusion_factor * tuning.quantum_fwhm
        smoothing = tuning.smoothing_factor * tuning.quantum_fwhm
        expect = "dip"
    else:
        halfwidth = 0.0
        smoothing = tuning.smoothing_factor * tuning.classical_fwhm
        expect = "fringe"
    centered = [preprocess(r, halfwidth, smoothing, expect, tuning.min_baseline_points) for r in (record1, record2)]
    if tuning.resample:
        centered = [resample_uniform(c) for c in centered]

    band = default_band(mode, tuning, spectrum)
    grid = common_frequency_grid(record1, record2)
    # the transform is exact per bin, so only the band is evaluated
    grid = grid[(grid >= band.f_lo) & (grid <= band.f_hi)]
    spectra = [band_select(ndft(c, grid), band) for c in centered]
    estimate = differential_phase_fit(spectra[0], spectra[1], band, mode=mode, weighted=tuning.weighted,
                                      centered=(centered[0], centered[1]))
    logger.info(f"{mode} estimate: delta_tau = {estimate.delta_tau * 1e6:.4f} um +- {estimate.standard_error * 1e6:.4f} um "
                f"({estimate.bins} bins)")
    return estimate


def delta_n(estimate: DeltaTauEstimate, sample_length: float, length_uncertainty: float = 0.0) -> Tuple[float, float]:
    """
    Refractive-index difference dn = delta_tau / L and its standard deviation.

    :param estimate: Delay estimate (m of path).
    :param sample_length: Fiber length L (m).
    :param length_uncertainty: Standard uncertainty of L (m), added in quadrature.
    :return: (delta_n, sigma_delta_n)
    :raises DomainError: If L is not positive.
    """
    if not sample_length > 0:
        raise DomainError("Sample length must be positive.", parameter="sample_length", value=sample_length)
    if length_uncertainty < 0:
        raise DomainError("Length uncertainty must be non-negative.", parameter="length_uncertainty", value=length_uncertainty)
    value = estimate.delta_tau / sample_length
    sigma = float(np.hypot(estimate.standard_error / sample_length, estimate.delta_tau * length_uncertainty / sample_length ** 2))
    return value, sigma


def _gaussian_dip(x, baseline, visibility, center, fwhm):
    return baseline * (1.0 - visibility * np.exp(-4.0 * np.log(2.0) * ((x - center) / fwhm) ** 2))


def fit_interferogram(record: ScanRecord, mode: Mode, carrier_wavelength: float = 1560e-9,
                      expected_fwhm: Optional[float] = None) -> InterferogramFit:
    """
    Least-squares model fit of a single interferogram.

    quantum: Gaussian dip B (1 - V exp(-4 ln2 (x - x0)^2 / w^2)); the pump fringe is left in the residuals.
    classical: Gaussian-enveloped fringe at the known carrier wavelength with a free carrier phase.

    :raises EstimationError: (stage fit) if the optimizer does not converge.
    """
    x = record.positions.astype(float)
    y = record.counts.astype(float)
    if x.size < 6:
        raise EstimationError("Need at least six points to fit an interferogram.", stage="fit")
    width = expected_fwhm or (25.8e-6 if mode == "quantum" else 134e-6)
    sigma = np.sqrt(np.maximum(y, 1.0)) if record.is_sampled else None

    try:
        if mode == "quantum":
            center = _coarse_center(x, y, 3.0 * width, "dip")
            base = float(np.median(y))
            depth = max(0.05, 1.0 - float(np.min(pd.Series(y).rolling(5, center=True, min_periods=1).mean())) / base)
            popt, pcov = curve_fit(_gaussian_dip, x, y, p0=[base, depth, center, width], sigma=sigma, maxfev=20000)
            baseline, visibility, center, fwhm = popt
        else:
            wavenumber = 2 * np.pi / carrier_wavelength

            def fringe(x, baseline, visibility, center, fwhm, phase):
                envelope = np.exp(-4.0 * np.log(2.0) * ((x - center) / fwhm) ** 2)
                return baseline * (1.0 - visibility * envelope * np.cos(wavenumber * (x - center) + phase))

            center = _coarse_center(x, y, 3.0 * width, "fringe")
            base = float(np.mean(y))
            swing = float(np.max(np.abs(y - base))) / base
            popt, pcov = curve_fit(fringe, x, y, p0=[base, swing, center, width, 0.0], sigma=sigma, maxfev=20000)
            baseline, visibility, center, fwhm, _ = popt
    except (RuntimeError, ValueError) as e:
        raise EstimationError(f"Interferogram fit did not converge: {e}", stage="fit", original_error=e)

    stderr = float(np.sqrt(pcov[2, 2])) if np.isfinite(pcov[2, 2]) else float("nan")
    result = InterferogramFit(center=float(center), center_stderr=stderr, fwhm=abs(float(fwhm)),
                              visibility=float(visibility), baseline=float(baseline))
    logger.info(f"{mode} fit: center {result.center * 1e6:.3f} um, FWHM {result.fwhm * 1e6:.2f} um, visibility {result.visibility:.3f}")
    return result
