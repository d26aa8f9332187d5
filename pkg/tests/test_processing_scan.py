import pytest
import numpy as np
from pydantic import ValidationError
from processing import scan
from processing.optics import ClassicalCurveModel, QuantumCurveModel
from processing.scan import DualCoreScenario, NoiseConfig, ScanPlan, ScanRecord
from utils.errors import DomainError

QUIET = NoiseConfig(position_jitter_sigma=0.0, shot_noise=False, drift_sigma=0.0)

# --- build_scan_plan tests ---

def test_build_scan_plan_default_grid():
    """120 um at 0.24 um steps gives 501 points, endpoints included."""
    plan = scan.build_scan_plan(0.0, 120e-6, 0.24e-6, 0.5)
    assert plan.point_count == 501
    positions = plan.commanded_positions()
    assert positions[0] == pytest.approx(-60e-6)
    assert positions[-1] == pytest.approx(60e-6)
    assert np.diff(positions) == pytest.approx(np.full(500, 0.24e-6))

def test_build_scan_plan_duration():
    """About five minutes per core."""
    plan = scan.build_scan_plan(0.0, 120e-6, 0.24e-6, 0.5)
    assert plan.duration == pytest.approx(501 * 0.6)
    assert 250.0 <= plan.duration <= 330.0

def test_build_scan_plan_single_step():
    """A span of one step gives two points."""
    plan = scan.build_scan_plan(0.0, 1e-6, 1e-6, 1.0)
    assert plan.point_count == 2

def test_build_scan_plan_off_center():
    """An offset window is centered on the offset."""
    plan = scan.build_scan_plan(41.1e-6, 120e-6, 0.24e-6, 0.5)
    assert np.mean(plan.commanded_positions()) == pytest.approx(41.1e-6)

@pytest.mark.parametrize("span, step, integration", [
    (120e-6, 0.0, 0.5),
    (0.0, 0.24e-6, 0.5),
    (1e-6, 2e-6, 0.5),
    (120e-6, 0.24e-6, 0.0),
    (1.0, 1e-9, 0.5),
])
def test_build_scan_plan_invalid(span, step, integration):
    """Non-positive span, step or integration raise a domain error."""
    with pytest.raises(DomainError):
        scan.build_scan_plan(0.0, span, step, integration)

# --- ScanRecord tests ---

def test_scan_record_rejects_unordered_positions():
    """Positions must be increasing."""
    with pytest.raises(ValidationError):
        ScanRecord(positions=[0.0, 2.0, 1.0], counts=[1, 2, 3], integration_time=1.0, channel="singles")

def test_scan_record_rejects_negative_counts():
    """Counts must be non-negative."""
    with pytest.raises(ValidationError):
        ScanRecord(positions=[0.0, 1.0], counts=[1, -1], integration_time=1.0, channel="singles")

def test_scan_record_rejects_length_mismatch():
    """Positions and counts must have the same length."""
    with pytest.raises(ValidationError):
        ScanRecord(positions=[0.0, 1.0], counts=[1], integration_time=1.0, channel="coincidences")

# --- scaled_models tests ---

def test_scaled_models_peak_rates(spectrum):
    """Models are scaled to the configured singles and coincidence rates."""
    quantum = QuantumCurveModel(spectrum=spectrum, coincidence_baseline=0.0)
    classical = ClassicalCurveModel(spectrum=spectrum, mean_intensity=0.0, visibility=0.5)
    noise = NoiseConfig(singles_peak_rate=3e5, coincidence_to_singles_ratio=0.01)
    quantum, classical = scan.scaled_models(quantum, classical, noise)
    assert classical.mean_intensity * (1 + classical.visibility) == pytest.approx(3e5)
    assert quantum.coincidence_baseline * (2 + quantum.fringe_visibility) == pytest.approx(3e3)

# --- simulate_scan tests ---

def test_simulate_scan_poisson_mean(spectrum):
    """A flat rate of I0 gives a sample mean of I0 within shot noise."""
    model = ClassicalCurveModel(spectrum=spectrum, mean_intensity=1000.0, visibility=0.0)
    plan = ScanPlan(span=9999e-6, step=1e-6, integration_time=1.0)
    record = scan.simulate_scan(model, plan, NoiseConfig(position_jitter_sigma=0.0), seed=11)
    assert record.positions.size == 10_000
    assert record.is_sampled
    assert abs(record.counts.mean() - 1000.0) < 4 * np.sqrt(1000.0 / 10_000)
    # Poisson: variance equals the mean
    assert abs(record.counts.var(ddof=1) - 1000.0) < 5 * np.sqrt(2 * 1000.0 ** 2 / 10_000)

def test_simulate_scan_jitter_law(spectrum):
    """Position errors follow the configured jitter."""
    model = ClassicalCurveModel(spectrum=spectrum, mean_intensity=10.0, visibility=0.0)
    plan = ScanPlan(span=9999e-6, step=1e-6, integration_time=1.0)
    record = scan.simulate_scan(model, plan, NoiseConfig(position_jitter_sigma=20e-9), seed=12)
    errors = record.positions - plan.commanded_positions()
    assert np.std(errors) == pytest.approx(20e-9, rel=0.05)
    assert np.all(np.diff(record.positions) > 0)

def test_simulate_scan_is_deterministic(spectrum, default_plan):
    """The same seed gives the same record; another seed does not."""
    model = QuantumCurveModel(spectrum=spectrum, coincidence_baseline=500.0)
    first = scan.simulate_scan(model, default_plan, NoiseConfig(), seed=5)
    second = scan.simulate_scan(model, default_plan, NoiseConfig(), seed=5)
    other = scan.simulate_scan(model, default_plan, NoiseConfig(), seed=6)
    assert np.array_equal(first.positions, second.positions)
    assert np.array_equal(first.counts, second.counts)
    assert not np.array_equal(first.counts, other.counts)
    assert first.channel == "coincidences"

def test_simulate_scan_reports_commanded_positions(spectrum, default_plan):
    """The record carries commanded positions when the truth is hidden."""
    model = QuantumCurveModel(spectrum=spectrum, coincidence_baseline=500.0)
    noise = NoiseConfig(estimator_sees_true_positions=False)
    record = scan.simulate_scan(model, default_plan, noise, seed=5)
    assert record.positions == pytest.approx(default_plan.commanded_positions(), rel=0, abs=1e-16)

def test_simulate_scan_noiseless_counts_are_expected_values(spectrum, default_plan):
    """Without noise the counts are the expected values."""
    model = QuantumCurveModel(spectrum=spectrum, coincidence_baseline=500.0)
    record = scan.simulate_scan(model, default_plan, QUIET, seed=0)
    assert not record.is_sampled
    expected = scan.curve_rate(model, record.positions) * default_plan.integration_time
    assert record.counts == pytest.approx(expected, rel=1e-9)

# --- simulate_core_pair tests ---

def test_core_pair_noiseless_translation(noiseless_pair, noiseless_config):
    """Without noise core 2 is core 1 translated by delta_tau_true."""
    shift = noiseless_config.scenario.delta_tau_true
    for core1, core2 in (noiseless_pair.singles, noiseless_pair.coincidences):
        assert core1.core == "core1" and core2.core == "core2"
        assert np.array_equal(core1.counts, core2.counts)
        assert core2.positions - core1.positions == pytest.approx(np.full(core1.positions.size, shift), abs=1e-15)
        assert core1.warning is None and core2.warning is None

def test_core_pair_channels_share_positions(noisy_pair):
    """Both channels of a core share one position record."""
    for index in range(2):
        assert np.array_equal(noisy_pair.singles[index].positions, noisy_pair.coincidences[index].positions)
    assert noisy_pair.for_mode("quantum") is noisy_pair.coincidences
    assert noisy_pair.for_mode("classical") is noisy_pair.singles
    assert noisy_pair.singles[0].channel == "singles"
    assert noisy_pair.coincidences[1].channel == "coincidences"

def test_core_pair_dip_outside_window_warns(noiseless_config):
    """A dip pushed out of the window is flagged on that record."""
    quantum, classical = noiseless_config.models()
    scenario = DualCoreScenario(delta_tau_true=55e-6, window_offset=0.0)
    pair = scan.simulate_core_pair(scenario, quantum, classical, noiseless_config.scan, noiseless_config.noise, seed=1)
    assert pair.coincidences[0].warning is None
    assert "outside the scan window" in pair.coincidences[1].warning

def test_core_pair_drift_moves_curve_not_positions(noiseless_config):
    """A fixed drift shifts the curve but not the reported positions."""
    quantum, classical = noiseless_config.models()
    plan, noise = noiseless_config.scan, noiseless_config.noise
    still = scan.simulate_core_pair(DualCoreScenario(), quantum, classical, plan, noise, seed=1)
    drifting = scan.simulate_core_pair(DualCoreScenario(drift_core2=1e-6), quantum, classical, plan, noise, seed=1)
    assert np.array_equal(still.coincidences[1].positions, drifting.coincidences[1].positions)
    assert not np.array_equal(still.coincidences[1].counts, drifting.coincidences[1].counts)
    assert np.array_equal(still.coincidences[0].counts, drifting.coincidences[0].counts)
