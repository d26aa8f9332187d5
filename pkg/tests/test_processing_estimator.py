import pytest
import numpy as np
from pydantic import ValidationError
from processing import estimator
from processing.estimator import BandSpec, EstimatorTuning, FourierSpectrum
from processing.optics import ClassicalCurveModel, QuantumCurveModel
from processing.scan import DualCoreScenario, NoiseConfig, ScanRecord, simulate_core_pair, simulate_scan
from utils.errors import DomainError, EstimationError

TRUE_DELAY = 41.1e-6

# --- estimate_delta_tau tests ---

@pytest.mark.parametrize("mode", ["quantum", "classical"])
def test_noiseless_pair_recovers_delay(noiseless_pair, noiseless_config, mode):
    """Noiseless records give the true delay in both modes."""
    record1, record2 = noiseless_pair.for_mode(mode)
    estimate = estimator.estimate_delta_tau(record1, record2, mode, noiseless_config.estimator, noiseless_config.spectrum_model())
    assert estimate.delta_tau == pytest.approx(TRUE_DELAY, abs=1e-8)
    assert estimate.bins >= estimator.MIN_BAND_BINS
    assert estimate.mode == mode

@pytest.mark.parametrize("delay", [0.0, 10.0e-6, 40.7e-6, 41.1e-6])
@pytest.mark.parametrize("mode", ["quantum", "classical"])
def test_noiseless_recovery_over_delays(noiseless_config, delay, mode):
    """Recovery holds across the delay range."""
    quantum, classical = noiseless_config.models()
    scenario = DualCoreScenario(delta_tau_true=delay)
    pair = simulate_core_pair(scenario, quantum, classical, noiseless_config.scan, noiseless_config.noise, seed=3)
    estimate = estimator.estimate_delta_tau(*pair.for_mode(mode), mode, noiseless_config.estimator, noiseless_config.spectrum_model())
    assert estimate.delta_tau == pytest.approx(delay, abs=1e-8)

@pytest.mark.parametrize("mode", ["quantum", "classical"])
def test_swapped_records_flip_sign(noiseless_pair, mode):
    """Swapping the cores negates the delay."""
    record1, record2 = noiseless_pair.for_mode(mode)
    forward = estimator.estimate_delta_tau(record1, record2, mode)
    backward = estimator.estimate_delta_tau(record2, record1, mode)
    assert backward.delta_tau == pytest.approx(-forward.delta_tau, abs=1e-12)

def test_same_record_twice_gives_zero(noiseless_pair):
    """A record against itself gives zero delay and zero error."""
    record = noiseless_pair.coincidences[0]
    estimate = estimator.estimate_delta_tau(record, record, "quantum")
    assert estimate.delta_tau == pytest.approx(0.0, abs=1e-15)
    assert estimate.standard_error == pytest.approx(0.0, abs=1e-15)

def test_unweighted_fit_recovers_delay(noiseless_pair):
    """The unweighted slope fit also recovers the delay."""
    tuning = EstimatorTuning(weighted=False)
    estimate = estimator.estimate_delta_tau(*noiseless_pair.coincidences, "quantum", tuning)
    assert estimate.delta_tau == pytest.approx(TRUE_DELAY, abs=1e-8)

@pytest.mark.parametrize("mode", ["quantum", "classical"])
def test_noisy_pair_estimate_is_close(noisy_pair, calibrated_config, mode):
    """A noisy pair lands near the truth with a positive standard error."""
    estimate = estimator.estimate_delta_tau(*noisy_pair.for_mode(mode), mode, calibrated_config.estimator,
                                            calibrated_config.spectrum_model())
    assert estimate.delta_tau == pytest.approx(TRUE_DELAY, abs=5e-6)
    assert estimate.standard_error > 0

def test_wrong_channel_for_mode(noiseless_pair):
    """Quantum mode refuses singles records."""
    with pytest.raises(EstimationError) as excinfo:
        estimator.estimate_delta_tau(*noiseless_pair.singles, "quantum")
    assert excinfo.value.stage == "preprocess"

def test_unknown_mode(noiseless_pair):
    """An unknown mode is an estimation error."""
    with pytest.raises(EstimationError):
        estimator.estimate_delta_tau(*noiseless_pair.coincidences, "hybrid")

def test_estimate_json_dict(noiseless_pair):
    """The estimate serializes to a JSON-ready dict."""
    payload = estimator.estimate_delta_tau(*noiseless_pair.coincidences, "quantum").to_json_dict()
    assert set(payload) == {"delta_tau_m", "std_err_m", "mode", "band", "diagnostics"}
    assert payload["band"]["mode"] == "quantum_lowpass"
    assert payload["diagnostics"]["abs_delta_tau_m"] == pytest.approx(TRUE_DELAY, abs=1e-8)

# --- preprocess / ndft / band_select tests ---

def test_preprocess_subtracts_outside_mean(noiseless_pair):
    """The baseline mean outside the exclusion window is removed."""
    record = noiseless_pair.coincidences[0]
    centered = estimator.preprocess(record, exclusion_halfwidth=51.6e-6, smoothing_width=77.4e-6)
    outside = np.abs(record.positions - centered.coarse_center) > 51.6e-6
    assert abs(centered.coarse_center) < 10e-6
    assert centered.baseline_points == int(np.count_nonzero(outside))
    assert np.mean(centered.values[outside]) == pytest.approx(0.0, abs=1e-9)

def test_preprocess_needs_baseline_points(noiseless_pair):
    """An exclusion window covering the scan leaves no baseline."""
    with pytest.raises(EstimationError, match="preprocess"):
        estimator.preprocess(noiseless_pair.coincidences[0], exclusion_halfwidth=59e-6, smoothing_width=77.4e-6)

def test_ndft_rejects_non_finite(noiseless_pair):
    """Non-finite counts fail at the transform stage."""
    centered = estimator.preprocess(noiseless_pair.coincidences[0], 51.6e-6, 77.4e-6)
    broken = centered.model_copy(update={"values": np.full(centered.values.size, np.nan)})
    with pytest.raises(EstimationError) as excinfo:
        estimator.ndft(broken, np.linspace(0.0, 1e4, 5))
    assert excinfo.value.stage == "ndft"

def test_band_select_drops_zero_frequency_and_weak_bins():
    """The zero bin and bins below the amplitude floor are dropped."""
    frequencies = np.arange(0.0, 10.0)
    amplitudes = np.array([100, 10, 10, 10, 10, 10, 0.5, 10, 10, 10], dtype=complex)
    spectrum = FourierSpectrum(frequencies=frequencies, amplitudes=amplitudes)
    kept = estimator.band_select(spectrum, BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=8.0))
    assert kept.frequencies.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 8.0]

def test_band_select_too_few_bins():
    """Fewer than the minimum bins fail at band selection."""
    spectrum = FourierSpectrum(frequencies=np.arange(0.0, 10.0), amplitudes=np.ones(10, dtype=complex))
    with pytest.raises(EstimationError) as excinfo:
        estimator.band_select(spectrum, BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=3.0))
    assert excinfo.value.stage == "band_select"

def test_band_outside_grid():
    """A band beyond the frequency grid is rejected."""
    spectrum = FourierSpectrum(frequencies=np.arange(0.0, 10.0), amplitudes=np.ones(10, dtype=complex))
    with pytest.raises(EstimationError, match="does not overlap"):
        estimator.band_select(spectrum, BandSpec(mode="classical_sideband", f_lo=100.0, f_hi=200.0))

def test_band_spec_edges_validated():
    """Band edges must be increasing."""
    with pytest.raises(ValidationError):
        BandSpec(mode="quantum_lowpass", f_lo=5.0, f_hi=5.0)

def test_fourier_spectrum_requires_increasing_grid():
    """Spectrum frequencies must be increasing."""
    with pytest.raises(ValidationError):
        FourierSpectrum(frequencies=np.array([0.0, 2.0, 1.0]), amplitudes=np.ones(3, dtype=complex))

# --- differential_phase_fit tests ---

def test_differential_phase_fit_linear_phase():
    """A pure linear phase difference gives the exact delay."""
    frequencies = np.linspace(1e3, 5e4, 30)
    delay = 20e-6
    spec1 = FourierSpectrum(frequencies=frequencies, amplitudes=np.ones(30, dtype=complex))
    spec2 = FourierSpectrum(frequencies=frequencies, amplitudes=np.exp(-2j * np.pi * frequencies * delay))
    band = BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=6e4)
    estimate = estimator.differential_phase_fit(spec1, spec2, band)
    assert estimate.delta_tau == pytest.approx(delay, rel=1e-9)
    assert estimate.standard_error == pytest.approx(0.0, abs=1e-15)
    assert estimate.unwrap_jumps >= 1

def test_differential_phase_fit_rejects_noisy_phase():
    """Phase that jumps on every bin fails the unwrap check."""
    frequencies = np.linspace(1e3, 5e4, 30)
    alternating = (np.pi - 0.1) * (-1.0) ** np.arange(30)
    spec1 = FourierSpectrum(frequencies=frequencies, amplitudes=np.ones(30, dtype=complex))
    spec2 = FourierSpectrum(frequencies=frequencies, amplitudes=np.exp(1j * alternating))
    band = BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=6e4)
    with pytest.raises(EstimationError) as excinfo:
        estimator.differential_phase_fit(spec1, spec2, band)
    assert excinfo.value.stage == "phase_fit"

def test_differential_phase_fit_needs_shared_bins():
    """The two spectra must share enough bins."""
    spec1 = FourierSpectrum(frequencies=np.arange(1.0, 11.0), amplitudes=np.ones(10, dtype=complex))
    spec2 = FourierSpectrum(frequencies=np.arange(8.0, 18.0), amplitudes=np.ones(10, dtype=complex))
    with pytest.raises(EstimationError, match="share only 3 bins"):
        estimator.differential_phase_fit(spec1, spec2, BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=20.0))

# --- default_band tests ---

def test_default_bands(spectrum):
    """Default bands follow from the spectrum widths and the carrier."""
    tuning = EstimatorTuning()
    quantum = estimator.default_band("quantum", tuning, spectrum)
    assert (quantum.mode, quantum.f_lo) == ("quantum_lowpass", 0.0)
    assert quantum.f_hi == pytest.approx(1.5 / 25.8e-6)

    classical = estimator.default_band("classical", tuning, spectrum)
    assert classical.mode == "classical_sideband"
    assert 0.5 * (classical.f_lo + classical.f_hi) == pytest.approx(1.0 / 1560e-9)

    fringe = estimator.default_band("quantum", EstimatorTuning(use_fringe_band=True), spectrum)
    assert fringe.mode == "quantum_fringe"
    assert 0.5 * (fringe.f_lo + fringe.f_hi) == pytest.approx(2.0 / 1560e-9)

# --- delta_n tests ---

def _estimate(delta_tau, standard_error=0.0):
    band = BandSpec(mode="quantum_lowpass", f_lo=0.0, f_hi=1.0)
    return estimator.DeltaTauEstimate(delta_tau=delta_tau, standard_error=standard_error, mode="quantum", band=band,
                                      residual_rms=0.0, unwrap_jumps=0, bins=5)

def test_delta_n_value():
    """Index difference and its error scale with the inverse sample length."""
    value, sigma = estimator.delta_n(_estimate(41.1e-6, 0.3e-6), 0.5)
    assert value == pytest.approx(8.22e-5)
    assert sigma == pytest.approx(0.6e-6)

def test_delta_n_includes_length_uncertainty():
    """The length uncertainty adds to the index error."""
    _, sigma = estimator.delta_n(_estimate(41.1e-6, 0.0), 0.5, 1e-4)
    assert sigma == pytest.approx(41.1e-6 * 1e-4 / 0.25)

@pytest.mark.parametrize("length", [0.0, -0.5])
def test_delta_n_requires_positive_length(length):
    """The sample length must be positive."""
    with pytest.raises(DomainError):
        estimator.delta_n(_estimate(41.1e-6), length)

# --- fit_interferogram tests ---

def test_fit_gaussian_dip(spectrum, default_plan):
    """The dip fit finds the center and width of a noiseless dip."""
    model = QuantumCurveModel(spectrum=spectrum, coincidence_baseline=1000.0, fringe_visibility=0.0)
    record = simulate_scan(model, default_plan, NoiseConfig(position_jitter_sigma=0.0, shot_noise=False), seed=0)
    fit = estimator.fit_interferogram(record, "quantum")
    assert fit.center == pytest.approx(0.0, abs=1e-9)
    assert fit.fwhm == pytest.approx(24.4e-6, rel=1e-2)
    # baseline 2 P t, depth alpha / 2
    assert fit.baseline == pytest.approx(1000.0, rel=1e-6)
    assert fit.visibility == pytest.approx(0.37, rel=1e-6)

def test_fit_classical_fringe(spectrum, default_plan):
    """The fringe fit finds the envelope width of a noiseless interferogram."""
    model = ClassicalCurveModel(spectrum=spectrum, mean_intensity=1e5, visibility=0.5)
    record = simulate_scan(model, default_plan, NoiseConfig(position_jitter_sigma=0.0, shot_noise=False), seed=0)
    fit = estimator.fit_interferogram(record, "classical", carrier_wavelength=1560e-9, expected_fwhm=48.8e-6)
    assert fit.fwhm == pytest.approx(48.8e-6, rel=1e-2)
    assert abs(fit.visibility) == pytest.approx(0.5, rel=1e-2)

def test_fit_needs_points():
    """Too few points fail at the fit stage."""
    record = ScanRecord(positions=[0.0, 1e-6, 2e-6], counts=[1, 2, 3], integration_time=1.0, channel="coincidences")
    with pytest.raises(EstimationError) as excinfo:
        estimator.fit_interferogram(record, "quantum")
    assert excinfo.value.stage == "fit"

# --- resampling and shift covariance ---

def test_resample_keeps_uniform_record(noiseless_pair):
    """A record already on a uniform grid comes back unchanged."""
    centered = estimator.preprocess(noiseless_pair.coincidences[0], 51.6e-6, 77.4e-6)
    resampled = estimator.resample_uniform(centered)
    assert resampled.positions == pytest.approx(centered.positions, rel=0, abs=1e-15)
    assert resampled.values == pytest.approx(centered.values, rel=0, abs=1e-6)
    assert resampled.baseline_points == centered.baseline_points

def test_resample_needs_four_points():
    """Cubic interpolation is refused on a three-point record."""
    record = ScanRecord(positions=[0.0, 1e-6, 2e-6], counts=[1, 2, 3], integration_time=1.0, channel="coincidences")
    centered = estimator.preprocess(record, 0.0, 1e-6, min_baseline_points=1)
    with pytest.raises(EstimationError) as excinfo:
        estimator.resample_uniform(centered)
    assert excinfo.value.stage == "ndft"

def test_preprocess_records_baseline_mask(noiseless_pair):
    """The subtracted mean is spread evenly over the baseline points."""
    centered = estimator.preprocess(noiseless_pair.coincidences[0], 51.6e-6, 77.4e-6)
    weights = centered.mean_weights()
    assert weights.sum() == pytest.approx(1.0)
    assert np.count_nonzero(weights) == centered.baseline_points

def _translated(record, shift):
    return record.model_copy(update={"positions": record.positions + shift})

@pytest.mark.parametrize("mode", ["quantum", "classical"])
def test_shift_covariance_over_seeds(calibrated_config, mode):
    """Moving record 2 by s moves the estimate by s; moving both leaves it, for every noise draw."""
    quantum, classical = calibrated_config.models()
    shift = 5e-6

    def run(r1, r2):
        return estimator.estimate_delta_tau(r1, r2, mode, calibrated_config.estimator, calibrated_config.spectrum_model()).delta_tau

    for seed in range(100):
        pair = simulate_core_pair(calibrated_config.scenario, quantum, classical, calibrated_config.scan,
                                  calibrated_config.noise, seed=seed)
        record1, record2 = pair.for_mode(mode)
        base = run(record1, record2)
        assert run(record1, _translated(record2, shift)) == pytest.approx(base + shift, abs=1e-10)
        assert run(_translated(record1, shift), _translated(record2, shift)) == pytest.approx(base, abs=1e-10)
