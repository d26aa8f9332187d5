from typing import Literal, NamedTuple, Optional
import logging

import numpy as np

from processing.algorithms.search import half_max_crossings

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


class CurveMetrics(NamedTuple):
    fwhm: float
    extremum_visibility: float
    dip_area: float
    center: float


def _edge_baseline(y: np.ndarray, fraction: float = 0.1) -> float:
    count = max(1, int(round(fraction * y.size)))
    return float(np.mean(np.concatenate([y[:count], y[-count:]])))


def normalized_deficit(x, y, baseline: Optional[float] = None, kind: Literal["dip", "peak"] = "dip") -> np.ndarray:
    """
    Turns a sampled curve into a positive feature.

    For a dip the deficit is (baseline - y) / baseline, with the baseline taken from the
    outer 10% of samples on each side when not given. For a peak (e.g. a normalized dip
    shape or an envelope) it is y - baseline, baseline defaulting to 0.
    """
    y = np.asarray(y, dtype=float)
    if kind == "dip":
        base = _edge_baseline(y) if baseline is None else float(baseline)
        if base <= 0:
            raise ValueError("Dip baseline must be positive.")
        return (base - y) / base
    return y - (0.0 if baseline is None else float(baseline))


def curve_metrics(x, y, baseline: Optional[float] = None, kind: Literal["dip", "peak"] = "dip") -> CurveMetrics:
    """
    Measures the width, depth and area of the single feature of a sampled curve.

    :param x: Strictly increasing abscissa (path length or delay).
    :param y: Curve samples.
    :param baseline: Level far from the feature; see normalized_deficit for defaults.
    :param kind: "dip" for a dip in a rate curve, "peak" for a curve that is the feature itself.
    :return: CurveMetrics(fwhm, extremum_visibility, dip_area, center) in the units of x.
    :raises ValueError: If no half-maximum crossing lies inside the grid on either side.
    """
    x = np.asarray(x, dtype=float)
    deficit = normalized_deficit(x, y, baseline, kind)
    left, right, peak = half_max_crossings(x, deficit)
    metrics = CurveMetrics(
        fwhm=right - left,
        extremum_visibility=float(deficit[peak]),
        dip_area=float(np.trapezoid(deficit, x)),
        center=float(x[peak]),
    )
    logger.debug(f"Curve metrics: FWHM={metrics.fwhm:.6g}, visibility={metrics.extremum_visibility:.4f}, area={metrics.dip_area:.6g}")
    return metrics


def area_ratio(x, y, reference, baseline: Optional[float] = None, kind: Literal["dip", "peak"] = "dip") -> float:
    """
    Ratio of the deficit area of `y` to that of `reference` sampled on the same grid.

    Phase-only sample changes leave the dip area unchanged, so this ratio acts as an
    equivalent visibility when odd dispersion lowers and widens the measured dip.
    """
    x = np.asarray(x, dtype=float)
    measured = np.trapezoid(normalized_deficit(x, y, baseline, kind), x)
    expected = np.trapezoid(normalized_deficit(x, reference, baseline, kind), x)
    if expected == 0:
        raise ValueError("Reference curve has zero area.")
    return float(measured / expected)
