from typing import Optional, Tuple
import logging
import numpy as np
from scipy import interpolate

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# Bounds the size of one position x frequency phase matrix
_CHUNK_ELEMENTS = 2_000_000

GRID_OVERSAMPLING = 4.0
GRID_NYQUIST_FACTOR = 1.2


def direct_ndft(positions: np.ndarray, values: np.ndarray, frequencies: np.ndarray) -> np.ndarray:
    """
    Nonuniform discrete Fourier transform by direct summation.

        X(f) = sum_n x_n * exp(-2j*pi*f*p_n)

    O(N*M), exact up to floating point (no gridding or interpolation).

    :param positions: Sample positions p_n (any order, need not be uniform).
    :param values: Real or complex samples x_n.
    :param frequencies: Frequencies f_m in cycles per unit of `positions`.
    :return: Complex array of length M.
    """
    positions = np.asarray(positions, dtype=float)
    values = np.asarray(values)
    frequencies = np.asarray(frequencies, dtype=float)

    out = np.empty(frequencies.size, dtype=complex)
    rows = max(1, _CHUNK_ELEMENTS // max(positions.size, 1))
    for start in range(0, frequencies.size, rows):
        f = frequencies[start:start + rows]
        kernel = np.exp(-2j * np.pi * np.outer(f, positions))
        out[start:start + rows] = kernel @ values
    return out


def default_frequency_grid(span: float, mean_step: float, oversampling: float = GRID_OVERSAMPLING,
                           nyquist_factor: float = GRID_NYQUIST_FACTOR) -> np.ndarray:
    """
    Frequency grid from zero to `nyquist_factor` times the Nyquist frequency of the mean step,
    spaced 1/(oversampling * span).

    :param span: Extent of the sampled positions.
    :param mean_step: Mean sample spacing.
    :return: Increasing array of non-negative frequencies starting at 0.
    """
    if span <= 0 or mean_step <= 0:
        raise ValueError("span and mean_step must be positive.")
    spacing = 1.0 / (oversampling * span)
    f_max = nyquist_factor / (2.0 * mean_step)
    count = int(np.floor(f_max / spacing)) + 1
    logger.debug(f"Default grid: {count} bins, spacing {spacing:.4g}, up to {f_max:.4g}")
    return spacing * np.arange(count)


def uniform_resample(positions: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cubic interpolation of jittered samples onto the straight line fitted to position versus index.

    Strong fringes sampled at jittered positions leak into every bin of the transform;
    resampled, they stay at their own frequency.

    :param positions: Strictly increasing sample positions (at least four).
    :param values: Real samples.
    :return: (uniform positions, resampled values)
    :raises ValueError: If fewer than four samples are given.
    """
    positions = np.asarray(positions, dtype=float)
    values = np.asarray(values, dtype=float)
    if positions.size < 4:
        raise ValueError("Cubic resampling needs at least four samples.")
    index = np.arange(positions.size)
    slope, offset = np.polyfit(index, positions, 1)
    uniform = offset + slope * index
    interpolant = interpolate.interp1d(positions, values, kind="cubic", fill_value="extrapolate", assume_sorted=True)
    return uniform, interpolant(uniform)


def phase_noise_shape(positions: np.ndarray, frequencies: np.ndarray, amplitudes: np.ndarray,
                      mean_weights: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Covariance of arg X(f_i) and arg X(f_j) when the samples carry white noise of unit variance.

    With N(f) the transform of the noise, the phase error is Im(N(f) / X(f)), so

        C_ij = [Re(u_i K_ij u_j*) - Re(u_i J_ij u_j)] / 2,   u = 1 / X,
        K_ij = sum_n exp(-2j*pi*(f_i - f_j)*p_n),  J_ij = sum_n exp(-2j*pi*(f_i + f_j)*p_n).

    Bins closer than 1/span are correlated; the matrix carries that correlation. When the
    samples had a weighted mean sum_n m_n x_n subtracted, the noise transform is taken
    after that subtraction.

    :param positions: Sample positions p_n.
    :param frequencies: Frequencies f_i.
    :param amplitudes: Transform values X(f_i); none may be zero.
    :param mean_weights: Weights m_n of the subtracted mean (summing to one), or None.
    :return: Symmetric (M, M) matrix.
    """
    positions = np.asarray(positions, dtype=float)
    frequencies = np.asarray(frequencies, dtype=float)
    inverse = 1.0 / np.asarray(amplitudes, dtype=complex)
    kernel = np.exp(-2j * np.pi * np.outer(frequencies, positions))
    if mean_weights is not None:
        kernel = kernel - kernel.sum(axis=1)[:, None] * np.asarray(mean_weights, dtype=float)[None, :]
    same = kernel @ kernel.conj().T
    summed = kernel @ kernel.T
    shape = 0.5 * (np.real(inverse[:, None] * same * inverse.conj()[None, :])
                   - np.real(inverse[:, None] * summed * inverse[None, :]))
    return 0.5 * (shape + shape.T)
