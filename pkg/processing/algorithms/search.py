from typing import Callable, Tuple
import logging
import numpy as np
from scipy.optimize import brentq

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def half_max_crossings(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, int]:
    """
    Finds the two half-maximum crossings around the global maximum of a sampled curve.

    Walks outward from the peak sample until the curve drops below half of the peak,
    then interpolates linearly between the bracketing samples.

    :param x: Strictly increasing abscissa.
    :param y: Curve values; the feature of interest is its global maximum.
    :return: (left crossing, right crossing, index of the maximum).
    :raises ValueError: If the curve does not fall below half maximum on both sides inside the grid.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("Need at least three samples with matching abscissa and ordinate.")

    peak = int(np.argmax(y))
    half = 0.5 * y[peak]
    if not half > 0:
        raise ValueError("Curve maximum must be positive to define a half maximum.")

    below = np.nonzero(y[:peak] < half)[0]
    if below.size == 0:
        raise ValueError("No half-maximum crossing left of the peak inside the grid.")
    i = below[-1]
    left = x[i] + (half - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i])

    below = np.nonzero(y[peak + 1:] < half)[0]
    if below.size == 0:
        raise ValueError("No half-maximum crossing right of the peak inside the grid.")
    j = peak + 1 + below[0]
    right = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])

    return float(left), float(right), peak


def bracket_and_solve(func: Callable[[float], float], start: float, growth: float = 2.0,
                      max_expansions: int = 60, xtol: float = 1e-12, rtol: float = 1e-10) -> float:
    """
    Solves func(p) = 0 for p >= 0 where func(0) < 0 and func grows with p.

    The upper bracket is found by geometric expansion from `start`, then the root is
    polished with Brent's method.

    :param func: Monotone-increasing objective on [0, inf).
    :param start: First trial upper bracket (> 0), ideally the right order of magnitude.
    :param growth: Expansion factor between trials.
    :param max_expansions: Give up after this many expansions.
    :return: The root, in the units of `start`.
    :raises ValueError: If no sign change is found.
    """
    if start <= 0:
        raise ValueError("start must be positive.")
    lo, f_lo = 0.0, func(0.0)
    if f_lo >= 0:
        raise ValueError("Objective must be negative at zero.")

    hi = start
    for _ in range(max_expansions):
        f_hi = func(hi)
        if f_hi > 0:
            break
        lo, hi = hi, hi * growth
    else:
        raise ValueError("Could not bracket the root.")

    root = brentq(func, lo, hi, xtol=xtol * start, rtol=rtol)
    logger.debug(f"Bracketed root in [{lo:.4g}, {hi:.4g}] -> {root:.6g}")
    return float(root)
