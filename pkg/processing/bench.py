from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel

from processing import aggregation
from processing.config import RunConfig
from processing.algorithms.fourier import GRID_NYQUIST_FACTOR
from processing.estimator import DeltaTauEstimate, EstimatorTuning, default_band, delta_n, estimate_delta_tau
from processing.optics import (ClassicalCurveModel, QuantumCurveModel, SpectrumModel, dip_area_ratio, dip_fwhm,
                               envelope_fwhm)
from processing.scan import DualCoreScenario, NoiseConfig, ScanPlan, simulate_core_pair
from utils.errors import AppError, BenchmarkError
from utils.helpers import convert_df_to_csv, convert_to_json, write_text

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

MODES = ("quantum", "classical")


class TrialOutcome(BaseModel):
    trial: int
    seed: int
    quantum: Optional[DeltaTauEstimate] = None
    classical: Optional[DeltaTauEstimate] = None
    quantum_error: Optional[str] = None
    classical_error: Optional[str] = None


class TrialSet(BaseModel):
    """Independent dual-core trials that share one configuration snapshot."""
    trials: List[TrialOutcome]
    sample_length: float
    root_seed: int
    config_snapshot: Dict[str, Any] = {}
    started_at: datetime
    finished_at: datetime

    @property
    def failure_fraction(self) -> float:
        attempts = 2 * len(self.trials)
        failed = sum((t.quantum is None) + (t.classical is None) for t in self.trials)
        return failed / attempts if attempts else 0.0

    def to_frame(self) -> pd.DataFrame:
        """One row per (trial, mode) with the aggregation.TRIAL_COLUMNS."""
        rows = []
        for outcome in self.trials:
            for mode in MODES:
                estimate: Optional[DeltaTauEstimate] = getattr(outcome, mode)
                if estimate is None:
                    rows.append({"trial": outcome.trial, "seed": outcome.seed, "mode": mode, "delta_tau_m": np.nan,
                                 "std_err_m": np.nan, "delta_n": np.nan, "ok": False,
                                 "error": getattr(outcome, f"{mode}_error")})
                    continue
                rows.append({"trial": outcome.trial, "seed": outcome.seed, "mode": mode,
                             "delta_tau_m": estimate.delta_tau, "std_err_m": estimate.standard_error,
                             "delta_n": delta_n(estimate, self.sample_length)[0], "ok": True, "error": None})
        return pd.DataFrame(rows, columns=aggregation.TRIAL_COLUMNS)


def trial_seeds(root_seed: int, n_trials: int) -> List[int]:
    """Per-trial seeds spawned from the root seed; independent of execution order."""
    children = np.random.SeedSequence(root_seed).spawn(n_trials)
    return [int(child.generate_state(1)[0]) for child in children]


def _run_trial(index: int, seed: int, scenario: DualCoreScenario, quantum: QuantumCurveModel,
               classical: ClassicalCurveModel, plan: ScanPlan, noise: NoiseConfig,
               tuning: EstimatorTuning, spectrum: SpectrumModel) -> TrialOutcome:
    outcome = TrialOutcome(trial=index, seed=seed)
    try:
        pair = simulate_core_pair(scenario, quantum, classical, plan, noise, seed)
    except AppError as e:
        outcome.quantum_error = outcome.classical_error = f"simulation: {e.message}"
        return outcome
    for mode in MODES:
        record1, record2 = pair.for_mode(mode)
        try:
            setattr(outcome, mode, estimate_delta_tau(record1, record2, mode, tuning, spectrum))
        except AppError as e:
            logger.warning(f"Trial {index} (seed {seed}) {mode} estimate failed: {e.message}")
            setattr(outcome, f"{mode}_error", e.message)
    return outcome


def run_trials(scenario: DualCoreScenario, quantum: QuantumCurveModel, classical: ClassicalCurveModel,
               plan: ScanPlan, noise: NoiseConfig, n_trials: int, root_seed: int,
               tuning: Optional[EstimatorTuning] = None, spectrum: Optional[SpectrumModel] = None,
               n_jobs: int = 1, config_snapshot: Optional[Dict[str, Any]] = None) -> TrialSet:
    """
    Runs n_trials independent core-pair simulations and estimates both delays in each.

    Trials may run in parallel (joblib); results are ordered by trial index and do not
    depend on n_jobs. An estimator failure is recorded on its trial and does not stop the set.

    :raises ValueError: If n_trials < 2.
    """
    if n_trials < 2:
        raise ValueError("run_trials needs at least two trials.")
    tuning = tuning or EstimatorTuning()
    spectrum = spectrum or quantum.spectrum
    seeds = trial_seeds(root_seed, n_trials)
    started = datetime.now()
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_run_trial)(i, seed, scenario, quantum, classical, plan, noise, tuning, spectrum)
        for i, seed in enumerate(seeds)
    )
    trial_set = TrialSet(trials=list(outcomes), sample_length=scenario.sample_length, root_seed=root_seed,
                         config_snapshot=config_snapshot or {}, started_at=started, finished_at=datetime.now())
    logger.info(f"Finished {n_trials} trials (root seed {root_seed}); failure fraction {trial_set.failure_fraction:.1%}")
    return trial_set


def run_config_trials(config: RunConfig, n_trials: Optional[int] = None, plan: Optional[ScanPlan] = None,
                      tuning: Optional[EstimatorTuning] = None) -> TrialSet:
    """run_trials with every input taken from a RunConfig."""
    config = config.resolve()
    quantum, classical = config.models()
    return run_trials(config.scenario, quantum, classical, plan or config.scan, config.noise,
                      n_trials or config.bench.n_trials, config.root_seed, tuning or config.estimator,
                      config.spectrum_model(), config.bench.n_jobs, config.model_dump(mode="json"))


def precision_report(trials: TrialSet, bin_count: int) -> aggregation.PrecisionReport:
    """Precision statistics of a trial set; delta_n uses the scenario's sample length."""
    return aggregation.precision_report(trials.to_frame(), bin_count, trials.sample_length)


def check_failure_budget(report: aggregation.PrecisionReport, max_failure_fraction: float) -> None:
    """
    :raises BenchmarkError: If more than max_failure_fraction of the estimates failed.
    """
    if report.failure_fraction > max_failure_fraction:
        raise BenchmarkError(f"{report.failure_fraction:.1%} of trial estimates failed (budget {max_failure_fraction:.1%}).",
                             failure_fraction=report.failure_fraction)


def write_bench_outputs(trials: TrialSet, report: aggregation.PrecisionReport, out_dir: Union[str, Path]) -> List[Path]:
    """Writes precision_report.json, trials.csv and histogram_<mode>.csv under out_dir."""
    out_dir = Path(out_dir)
    written = [
        write_text(out_dir / "precision_report.json", convert_to_json(report.model_dump(mode="json"))),
        write_text(out_dir / "trials.csv", convert_df_to_csv(trials.to_frame())),
    ]
    for mode in MODES:
        stats: aggregation.ModeStatistics = getattr(report, mode)
        if stats.available:
            written.append(write_text(out_dir / f"histogram_{mode}.csv", convert_df_to_csv(aggregation.histogram_frame(stats.histogram))))
    logger.info(f"Wrote benchmark outputs to {out_dir}")
    return written


def _sigma(report: aggregation.PrecisionReport, mode: str) -> float:
    stats: aggregation.ModeStatistics = getattr(report, mode)
    return stats.std_delta_tau if stats.available else float("nan")


def scan_plan_sweep(config: RunConfig, point_counts: Optional[Sequence[int]] = None,
                    n_trials: Optional[int] = None) -> pd.DataFrame:
    """
    Precision versus number of scan points at fixed span and fixed total acquisition time.

    The step is span / (points - 1) and the integration time per point scales so that
    points x integration_time stays at the configured plan's value. The minimum baseline
    point count of the estimator scales with the number of points. Every cell reuses the
    root seed. A cell whose grid (up to 1.2 x Nyquist) does not reach the classical
    sideband is reported with classical_resolved False; its classical estimates all fail.

    :return: DataFrame with points, step_m, integration_time_s, sigma_quantum_m,
             sigma_classical_m, classical_resolved, failure_fraction.
    """
    config = config.resolve()
    point_counts = list(point_counts or config.bench.point_counts)
    if any(n < 50 for n in point_counts):
        raise ValueError("Each point count must be at least 50.")
    n_trials = n_trials or config.bench.sweep_trials
    base_points = config.scan.point_count
    exposure = base_points * config.scan.integration_time
    sideband = default_band("classical", config.estimator, config.spectrum_model())
    rows = []
    for points in point_counts:
        step = config.scan.span / (points - 1)
        plan = ScanPlan(**{**config.scan.model_dump(), "step": step, "integration_time": exposure / points})
        resolved = sideband.f_hi <= GRID_NYQUIST_FACTOR / (2.0 * step)
        if not resolved:
            logger.warning(f"Scan-plan sweep: {points} points (step {step:.3e} m) cannot resolve the classical carrier.")
        baseline_points = max(10, int(round(config.estimator.min_baseline_points * points / base_points)))
        tuning = config.estimator.model_copy(update={"min_baseline_points": baseline_points})
        report = precision_report(run_config_trials(config, n_trials, plan=plan, tuning=tuning), config.bench.bin_count)
        rows.append({"points": plan.point_count, "step_m": step, "integration_time_s": plan.integration_time,
                     "sigma_quantum_m": _sigma(report, "quantum"),
                     "sigma_classical_m": _sigma(report, "classical") if resolved else float("nan"),
                     "classical_resolved": resolved, "failure_fraction": report.failure_fraction})
        logger.info(f"Scan-plan sweep: {plan.point_count} points -> sigma_q={rows[-1]['sigma_quantum_m']:.3e}, "
                    f"sigma_c={rows[-1]['sigma_classical_m']:.3e}")
    return pd.DataFrame(rows)


def dispersion_sensitivity_sweep(config: RunConfig, beta2_length_values: Optional[Sequence[float]] = None,
                                 n_trials: Optional[int] = None) -> pd.DataFrame:
    """
    Interferogram widths and precision versus second-order dispersion beta2*L.

    Odd orders stay at their configured values. n_trials = 0 skips the Monte-Carlo columns (NaN).

    :return: DataFrame with beta2_length_s2, quantum_fwhm_m, classical_fwhm_m, width_ratio,
             quantum_area_ratio, sigma_quantum_m, sigma_classical_m.
    """
    config = config.resolve()
    length = config.scenario.sample_length
    if beta2_length_values is None:
        beta2_length_values = config.bench.beta2_length_values
    if beta2_length_values is None:
        beta2_length_values = np.linspace(0.0, config.dispersion.beta2 * length, 5).tolist()
    n_trials = config.bench.sweep_trials if n_trials is None else n_trials
    spectrum = config.spectrum_model()

    rows = []
    for product in beta2_length_values:
        cell = config.model_copy(update={"dispersion": config.dispersion.model_copy(update={"beta2": product / length})})
        profile = cell.dispersion_profile()
        quantum_fwhm = dip_fwhm(spectrum, profile)
        classical_fwhm = envelope_fwhm(spectrum, profile, halfwidth_sigmas=48.0)
        row = {"beta2_length_s2": float(product), "quantum_fwhm_m": quantum_fwhm, "classical_fwhm_m": classical_fwhm,
               "width_ratio": classical_fwhm / quantum_fwhm, "quantum_area_ratio": dip_area_ratio(spectrum, profile),
               "sigma_quantum_m": float("nan"), "sigma_classical_m": float("nan")}
        if n_trials:
            report = precision_report(run_config_trials(cell, n_trials), config.bench.bin_count)
            row["sigma_quantum_m"] = _sigma(report, "quantum")
            row["sigma_classical_m"] = _sigma(report, "classical")
        rows.append(row)
        logger.info(f"Dispersion sweep: beta2*L={product:.3e} s^2 -> dip {quantum_fwhm * 1e6:.2f} um, envelope {classical_fwhm * 1e6:.2f} um")
    return pd.DataFrame(rows)


def drift_sweep(config: RunConfig, drift_sigma_values: Optional[Sequence[float]] = None,
                n_trials: Optional[int] = None) -> pd.DataFrame:
    """
    Precision and bias versus the random per-core drift.

    Every cell reuses the root seed, so the drift draws only scale between cells. The
    scenario's fixed drifts stay in place and show up in the bias columns.

    :return: DataFrame with drift_sigma_m, sigma_quantum_m, sigma_classical_m, bias_quantum_m,
             bias_classical_m, ratio.
    """
    config = config.resolve()
    if drift_sigma_values is None:
        drift_sigma_values = config.bench.drift_sigma_values
    if drift_sigma_values is None:
        drift_sigma_values = np.linspace(0.0, 2.0 * config.noise.drift_sigma, 5).tolist()
    if any(value < 0 for value in drift_sigma_values):
        raise ValueError("Drift standard deviations must be non-negative.")
    n_trials = n_trials or config.bench.sweep_trials
    truth = config.scenario.delta_tau_true

    rows = []
    for value in drift_sigma_values:
        cell = config.model_copy(update={"noise": config.noise.model_copy(update={"drift_sigma": float(value)})})
        report = precision_report(run_config_trials(cell, n_trials), config.bench.bin_count)
        row = {"drift_sigma_m": float(value), "sigma_quantum_m": _sigma(report, "quantum"),
               "sigma_classical_m": _sigma(report, "classical")}
        for mode in MODES:
            stats: aggregation.ModeStatistics = getattr(report, mode)
            row[f"bias_{mode}_m"] = stats.mean_delta_tau - truth if stats.available else float("nan")
        row["ratio"] = report.ratio if report.ratio is not None else float("nan")
        rows.append(row)
        logger.info(f"Drift sweep: sigma_drift={value:.3e} m -> sigma_q={row['sigma_quantum_m']:.3e}, "
                    f"sigma_c={row['sigma_classical_m']:.3e}")
    return pd.DataFrame(rows)
