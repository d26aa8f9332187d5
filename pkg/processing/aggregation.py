import pandas as pd
import numpy as np
from typing import Dict, List, Optional, Tuple
import logging
from pydantic import BaseModel
from scipy.stats import norm

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

TRIAL_COLUMNS = ['trial', 'seed', 'mode', 'delta_tau_m', 'std_err_m', 'delta_n', 'ok', 'error']
MODES = ('quantum', 'classical')


class Histogram(BaseModel):
    edges: List[float]
    counts: List[int]


class ModeStatistics(BaseModel):
    available: bool
    trials: int
    successes: int
    mean_delta_tau: Optional[float] = None
    std_delta_tau: Optional[float] = None
    abs_mean_delta_tau: Optional[float] = None
    mean_delta_n: Optional[float] = None
    std_delta_n: Optional[float] = None
    normal_mean: Optional[float] = None
    normal_std: Optional[float] = None
    mean_reported_stderr: Optional[float] = None
    histogram: Optional[Histogram] = None


class PrecisionReport(BaseModel):
    quantum: ModeStatistics
    classical: ModeStatistics
    ratio: Optional[float] = None
    failure_fraction: float
    sample_length: float


def calculate_sample_statistics(df: pd.DataFrame, value_col: str = 'delta_tau_m') -> Tuple[float, float, int]:
    """
    Sample mean and standard deviation (ddof=1) of a numeric column.

    :param df: Trial rows.
    :param value_col: Column to summarize.
    :return: (mean, std, count). Returns (nan, nan, 0) if the frame is empty or the column is missing/invalid;
             std is 0 for a single value.
    """
    if df.empty or value_col not in df.columns:
        logger.warning(f"DataFrame is empty or missing '{value_col}'. Returning empty statistics.")
        return float('nan'), float('nan'), 0

    values = pd.to_numeric(df[value_col], errors='coerce').dropna().astype(float)
    if values.empty:
        return float('nan'), float('nan'), 0
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std, int(len(values))


def build_histogram(values, bin_count: int) -> Histogram:
    """
    Equal-width histogram of the values. Identical values fall into a single bin.

    :raises ValueError: If bin_count < 1 or there are no values.
    """
    values = np.asarray(values, dtype=float)
    if bin_count < 1:
        raise ValueError("bin_count must be at least 1.")
    if values.size == 0:
        raise ValueError("Cannot histogram an empty sample.")
    counts, edges = np.histogram(values, bins=bin_count)
    return Histogram(edges=edges.tolist(), counts=counts.astype(int).tolist())


def fit_normal(values) -> Tuple[float, float]:
    """Normal distribution fitted by moment matching (the normal MLE)."""
    loc, scale = norm.fit(np.asarray(values, dtype=float))
    return float(loc), float(scale)


def summarize_mode(df: pd.DataFrame, mode: str, bin_count: int) -> ModeStatistics:
    """Statistics of one estimator mode over the successful trials."""
    rows = df[df['mode'] == mode] if not df.empty else df
    ok = rows[rows['ok'].astype(bool)] if not rows.empty else rows
    if len(ok) < 2:
        logger.warning(f"Mode '{mode}' has {len(ok)} successful trials; marked unavailable.")
        return ModeStatistics(available=False, trials=len(rows), successes=len(ok))

    mean_tau, std_tau, _ = calculate_sample_statistics(ok, 'delta_tau_m')
    mean_dn, std_dn, _ = calculate_sample_statistics(ok, 'delta_n')
    mean_err, _, _ = calculate_sample_statistics(ok, 'std_err_m')
    normal_mean, normal_std = fit_normal(ok['delta_tau_m'])
    return ModeStatistics(
        available=True, trials=len(rows), successes=len(ok),
        mean_delta_tau=mean_tau, std_delta_tau=std_tau, abs_mean_delta_tau=abs(mean_tau),
        mean_delta_n=mean_dn, std_delta_n=std_dn,
        normal_mean=normal_mean, normal_std=normal_std,
        mean_reported_stderr=mean_err,
        histogram=build_histogram(ok['delta_tau_m'], bin_count),
    )


def precision_report(trials: pd.DataFrame, bin_count: int, sample_length: float) -> PrecisionReport:
    """
    Monte-Carlo precision statistics of both estimators.

    :param trials: One row per (trial, mode) with the TRIAL_COLUMNS.
    :param bin_count: Histogram bins per mode.
    :param sample_length: Fiber length L (m), echoed in the report.
    :return: PrecisionReport; ratio = std_classical / std_quantum when both modes are available and std_quantum > 0.
    """
    stats: Dict[str, ModeStatistics] = {mode: summarize_mode(trials, mode, bin_count) for mode in MODES}
    ratio = None
    q, c = stats['quantum'], stats['classical']
    if q.available and c.available and q.std_delta_tau > 0:
        ratio = c.std_delta_tau / q.std_delta_tau

    failure_fraction = 0.0 if trials.empty else float(1.0 - trials['ok'].astype(bool).mean())
    report = PrecisionReport(quantum=q, classical=c, ratio=ratio, failure_fraction=failure_fraction,
                             sample_length=sample_length)
    logger.info(f"Precision report: std quantum={q.std_delta_tau}, std classical={c.std_delta_tau}, ratio={ratio}, "
                f"failures={failure_fraction:.1%}")
    return report


def histogram_frame(histogram: Histogram) -> pd.DataFrame:
    """Plot-ready histogram table with bin_lo, bin_hi, count columns."""
    edges = histogram.edges
    return pd.DataFrame({'bin_lo': edges[:-1], 'bin_hi': edges[1:], 'count': histogram.counts})
