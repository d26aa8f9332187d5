from typing import NamedTuple, Optional, Tuple
import numpy as np


class LineFit(NamedTuple):
    slope: float
    intercept: float
    slope_stderr: float
    residual_rms: float


def unwrap_with_jumps(phase: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    Sequential nearest-branch phase unwrapping along the array.

    :param phase: Wrapped phases in radians, ordered by increasing frequency.
    :return: (unwrapped phase, number of 2*pi corrections applied)
    """
    phase = np.asarray(phase, dtype=float)
    unwrapped = np.unwrap(phase)
    corrections = np.round(np.diff(unwrapped - phase) / (2 * np.pi))
    return unwrapped, int(np.count_nonzero(corrections))


def weighted_line_fit(x: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray] = None,
                      noise_shape: Optional[np.ndarray] = None) -> LineFit:
    """
    Weighted least-squares straight line y = intercept + slope * x.

    Weights multiply squared residuals. Without `noise_shape` the ordinates are taken as
    independent with variances proportional to 1/weight, and the slope standard error comes
    from the covariance scaled by the weighted residual variance (M - 2 degrees of freedom).

    With `noise_shape` Q the ordinate errors are taken as sigma^2 Q with unknown sigma^2.
    sigma^2 is the weighted residual sum divided by its expectation tr(R^T W R Q), where
    R = I - H is the residual projector, and the slope covariance is sigma^2 (B Q B^T)
    with B the least-squares solution operator. Only relative weights matter in both cases.

    :param x: Abscissa (at least three points).
    :param y: Ordinate.
    :param weights: Non-negative weights; None means unit weights.
    :param noise_shape: (M, M) error covariance up to a common factor; None means diag(1/weights).
    :return: LineFit(slope, intercept, slope_stderr, residual_rms)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if x.size < 3:
        raise ValueError("A line fit with an error estimate needs at least three points.")
    if noise_shape is not None and np.shape(noise_shape) != (x.size, x.size):
        raise ValueError(f"noise_shape must be ({x.size}, {x.size}).")

    sw = np.sqrt(w)
    design = np.column_stack([np.ones_like(x), x])
    coeffs, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    intercept, slope = coeffs

    residuals = y - design @ coeffs
    weighted_rss = float(np.sum(w * residuals ** 2))
    normal_inv = np.linalg.inv(design.T @ (design * w[:, None]))
    if noise_shape is None:
        cov = weighted_rss / (x.size - 2) * normal_inv
    else:
        q = np.asarray(noise_shape, dtype=float)
        solver = normal_inv @ (design * w[:, None]).T
        projector = np.eye(x.size) - design @ solver
        expected = float(np.trace(projector.T @ (w[:, None] * projector) @ q))
        cov = (weighted_rss / expected if expected > 0 else 0.0) * (solver @ q @ solver.T)
    rms = float(np.sqrt(weighted_rss / np.sum(w)))
    return LineFit(float(slope), float(intercept), float(np.sqrt(max(cov[1, 1], 0.0))), rms)
