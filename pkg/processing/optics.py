from functools import lru_cache
from math import factorial
from typing import Optional, Tuple
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from processing.algorithms.search import bracket_and_solve
from processing.metrics import area_ratio, curve_metrics
from utils.errors import DomainError, QuadratureError
from utils.helpers import SPEED_OF_LIGHT, delay_to_path

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

FWHM_TO_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))

# Spectral quadrature: trapezoid over +-6 sigma, doubled until the curve moves by <= 1e-9
_SPAN_SIGMAS = 6.0
_BASE_POINTS = 257
_MAX_POINTS = 65537
_TOLERANCE = 1e-9
_CANONICAL_SAMPLES = 401
_CHUNK_ELEMENTS = 2_000_000


class SpectrumModel(BaseModel):
    """
    Gaussian spectral density |g(w)|^2 of the down-converted photons, centered at w_p/2.
    """
    model_config = ConfigDict(frozen=True)

    center_wavelength: float = Field(1560e-9, gt=0, description="Center wavelength (m).")
    fwhm_wavelength: float = Field(44e-9, gt=0, description="FWHM of the spectral density in wavelength (m).")

    @property
    def sigma_omega(self) -> float:
        """Standard deviation of the spectral density in angular frequency (rad/s)."""
        return 2.0 * np.pi * SPEED_OF_LIGHT * self.fwhm_wavelength / self.center_wavelength ** 2 / FWHM_TO_SIGMA

    @property
    def center_angular_frequency(self) -> float:
        return 2.0 * np.pi * SPEED_OF_LIGHT / self.center_wavelength


class DispersionProfile(BaseModel):
    """
    Polynomial spectral phase of the sample, phi(W) = L * sum_k beta_k / k! * W^k,
    with W the detuning from the spectral center.
    """
    model_config = ConfigDict(frozen=True)

    sample_length: float = Field(0.0, ge=0, description="Sample length L (m).")
    phase_coefficients: Tuple[Tuple[int, float], ...] = Field((), description="(order k >= 2, beta_k in s^k/m) pairs.")

    @field_validator("phase_coefficients")
    @classmethod
    def check_orders(cls, v):
        orders = [k for k, _ in v]
        if any(k < 2 for k in orders):
            raise ValueError("Dispersion orders must be integers >= 2.")
        if len(set(orders)) != len(orders):
            raise ValueError("Dispersion orders must be distinct.")
        return tuple(sorted((int(k), float(b)) for k, b in v))

    def _partial(self, omega, parity: Optional[int]) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        phase = np.zeros_like(omega)
        for order, beta in self.phase_coefficients:
            if parity is None or order % 2 == parity:
                phase = phase + self.sample_length * beta / factorial(order) * omega ** order
        return phase

    def phase(self, omega) -> np.ndarray:
        return self._partial(omega, None)

    def even_part(self, omega) -> np.ndarray:
        return self._partial(omega, 0)

    def odd_part(self, omega) -> np.ndarray:
        return self._partial(omega, 1)

    def length_products(self) -> Tuple[Tuple[int, float], ...]:
        """Coefficients multiplied by the sample length, beta_k * L (s^k)."""
        return tuple((k, b * self.sample_length) for k, b in self.phase_coefficients)

    @property
    def is_zero(self) -> bool:
        return self.sample_length == 0 or all(b == 0 for _, b in self.phase_coefficients)

    @property
    def has_odd_orders(self) -> bool:
        return self.sample_length > 0 and any(k % 2 == 1 and b != 0 for k, b in self.phase_coefficients)


class QuantumCurveModel(BaseModel):
    """Coincidence rate behind the beam splitter as a function of the interferometer delay."""
    model_config = ConfigDict(frozen=True)

    spectrum: SpectrumModel = SpectrumModel()
    coincidence_baseline: float = Field(..., ge=0, description="P_c(0), coincidences per second.")
    dip_visibility: float = Field(0.74, ge=0, le=1)
    fringe_visibility: float = Field(1.0, ge=0, le=1)
    fringe_envelope: bool = Field(False, description="Damp the pump fringe with the dispersion-free dip shape.")
    pump_angular_frequency: Optional[float] = Field(None, gt=0, description="w_p (rad/s); None means twice the spectral center.")
    dispersion: DispersionProfile = DispersionProfile()

    @property
    def pump_frequency(self) -> float:
        if self.pump_angular_frequency is not None:
            return self.pump_angular_frequency
        return 2.0 * self.spectrum.center_angular_frequency


class ClassicalCurveModel(BaseModel):
    """Single-photon (white-light) interferogram with a Gaussian coherence envelope."""
    model_config = ConfigDict(frozen=True)

    spectrum: SpectrumModel = SpectrumModel()
    mean_intensity: float = Field(..., ge=0, description="I0, counts per second.")
    visibility: float = Field(0.5, ge=0, le=1)
    carrier_angular_frequency: Optional[float] = Field(None, gt=0, description="w_c (rad/s); None means the spectral center.")
    dispersion: DispersionProfile = DispersionProfile()

    @property
    def carrier_frequency(self) -> float:
        if self.carrier_angular_frequency is not None:
            return self.carrier_angular_frequency
        return self.spectrum.center_angular_frequency


def sigma_from_fwhm(center_wavelength: float, fwhm_wavelength: float) -> float:
    """
    Converts a wavelength FWHM into the angular-frequency standard deviation of a Gaussian spectral density.

    :param center_wavelength: Center wavelength (m).
    :param fwhm_wavelength: FWHM in wavelength (m).
    :return: sigma in rad/s.
    :raises DomainError: If either length is not strictly positive.
    """
    try:
        spectrum = SpectrumModel(center_wavelength=center_wavelength, fwhm_wavelength=fwhm_wavelength)
    except ValidationError as e:
        raise DomainError(f"Wavelengths must be positive: {e.errors()[0]['msg']}",
                          parameter="fwhm_wavelength" if center_wavelength > 0 else "center_wavelength",
                          value=fwhm_wavelength if center_wavelength > 0 else center_wavelength)
    return spectrum.sigma_omega


def spectral_density(spectrum: SpectrumModel, points: int = _BASE_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Samples |g(W)|^2 on a uniform detuning grid over +-6 sigma.

    The density is normalized on the grid itself, so its trapezoidal integral is 1 to rounding.

    :return: (detuning grid in rad/s, density in s/rad)
    """
    sigma = spectrum.sigma_omega
    omega = np.linspace(-_SPAN_SIGMAS * sigma, _SPAN_SIGMAS * sigma, points)
    density = np.exp(-0.5 * (omega / sigma) ** 2)
    return omega, density / np.trapezoid(density, omega)


def dip_closed_form(spectrum: SpectrumModel, tau) -> np.ndarray:
    """Dispersion-free normalized HOM dip, exp(-2 sigma^2 tau^2)."""
    tau = np.asarray(tau, dtype=float)
    return np.exp(-2.0 * (spectrum.sigma_omega * tau) ** 2)


def envelope_closed_form(spectrum: SpectrumModel, tau) -> np.ndarray:
    """Dispersion-free classical coherence envelope, exp(-sigma^2 tau^2 / 2)."""
    tau = np.asarray(tau, dtype=float)
    return np.exp(-0.5 * (spectrum.sigma_omega * tau) ** 2)


def _transform(omega: np.ndarray, amplitude: np.ndarray, tau: np.ndarray, scale: float) -> np.ndarray:
    out = np.empty(tau.size, dtype=complex)
    rows = max(1, _CHUNK_ELEMENTS // omega.size)
    for start in range(0, tau.size, rows):
        t = tau[start:start + rows]
        out[start:start + rows] = np.exp(1j * scale * np.outer(t, omega)) @ amplitude
    return out


def _evaluate(spectrum: SpectrumModel, dispersion: DispersionProfile, kind: str, tau: np.ndarray, points: int) -> np.ndarray:
    omega, density = spectral_density(spectrum, points)
    weights = np.full(points, omega[1] - omega[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    weights *= density
    if kind == "dip":
        # phi(W) - phi(-W) keeps only the odd orders
        amplitude = weights * np.exp(2j * dispersion.odd_part(omega))
        return _transform(omega, amplitude, tau, 2.0).real
    amplitude = weights * np.exp(1j * dispersion.phase(omega))
    return _transform(omega, amplitude, tau, 1.0)


def _tau_bucket(spectrum: SpectrumModel, tau: np.ndarray) -> float:
    sigma = spectrum.sigma_omega
    reach = max(float(np.max(np.abs(tau))) * sigma if tau.size else 0.0, 8.0)
    return 2.0 ** int(np.ceil(np.log2(reach))) / sigma


@lru_cache(maxsize=512)
def _converged_points(spectrum: SpectrumModel, dispersion: DispersionProfile, kind: str, tau_bucket: float) -> int:
    canonical = np.linspace(-tau_bucket, tau_bucket, _CANONICAL_SAMPLES)
    points = _BASE_POINTS
    previous = _evaluate(spectrum, dispersion, kind, canonical, points)
    change = np.inf
    while points < _MAX_POINTS:
        finer = 2 * points - 1
        current = _evaluate(spectrum, dispersion, kind, canonical, finer)
        change = float(np.max(np.abs(current - previous)))
        if change <= _TOLERANCE:
            logger.debug(f"{kind} quadrature converged at {finer} points (change {change:.2e}, |tau| <= {tau_bucket:.3e} s)")
            return finer
        previous, points = current, finer
    raise QuadratureError(f"{kind} integral did not converge within {_MAX_POINTS} points.", points=points, change=change)


def _checked_tau(tau_grid) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if not np.all(np.isfinite(tau)):
        raise DomainError("Delay grid must be finite.", parameter="tau_grid")
    return tau


def hom_dip_numeric(spectrum: SpectrumModel, dispersion: DispersionProfile, tau_grid) -> np.ndarray:
    """
    Normalized HOM dip shape from the spectral integral

        dip(tau) = Re int dW |g(W)|^2 exp(i[phi(W) - phi(-W)]) exp(2i W tau)

    normalized to 1 at the dispersion-free peak. Only the odd part of the sample
    phase survives the difference, so even orders leave the curve untouched.

    :param spectrum: Photon spectral density.
    :param dispersion: Sample spectral phase.
    :param tau_grid: Delays (s).
    :return: Dip values, same length as tau_grid.
    :raises QuadratureError: If the doubling-grid self-check does not converge.
    """
    tau = _checked_tau(tau_grid)
    points = _converged_points(spectrum, dispersion, "dip", _tau_bucket(spectrum, tau))
    return _evaluate(spectrum, dispersion, "dip", tau, points)


def classical_envelope_numeric(spectrum: SpectrumModel, dispersion: DispersionProfile, tau_grid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Complex degree of coherence int dW |g(W)|^2 exp(i phi(W)) exp(i W tau).

    :return: (envelope |gamma|, carrier phase arg gamma) on tau_grid.
    :raises QuadratureError: If the doubling-grid self-check does not converge.
    """
    tau = _checked_tau(tau_grid)
    points = _converged_points(spectrum, dispersion, "coherence", _tau_bucket(spectrum, tau))
    gamma = _evaluate(spectrum, dispersion, "coherence", tau, points)
    return np.abs(gamma), np.angle(gamma)


def quantum_coincidence(model: QuantumCurveModel, tau) -> np.ndarray:
    """
    Coincidence rate P_c(0) * (2 - v_f cos(w_p tau) - alpha * dip(tau)).

    :param model: Quantum curve parameters.
    :param tau: Delays (s).
    :return: Rate in coincidences per second.
    """
    tau = _checked_tau(tau)
    if model.dispersion.is_zero:
        dip = dip_closed_form(model.spectrum, tau)
    else:
        dip = hom_dip_numeric(model.spectrum, model.dispersion, tau)
    fringe = model.fringe_visibility * np.cos(model.pump_frequency * tau)
    if model.fringe_envelope:
        fringe = fringe * dip_closed_form(model.spectrum, tau)
    return model.coincidence_baseline * (2.0 - fringe - model.dip_visibility * dip)


def classical_intensity(model: ClassicalCurveModel, tau) -> np.ndarray:
    """
    Single-photon rate I0 * [1 - V |gamma(tau)| cos(w_c tau + arg gamma(tau))].

    Without dispersion gamma is the real Gaussian envelope.
    """
    tau = _checked_tau(tau)
    if model.dispersion.is_zero:
        envelope = envelope_closed_form(model.spectrum, tau)
        phase = 0.0
    else:
        envelope, phase = classical_envelope_numeric(model.spectrum, model.dispersion, tau)
    return model.mean_intensity * (1.0 - model.visibility * envelope * np.cos(model.carrier_frequency * tau + phase))


def _width_grid(spectrum: SpectrumModel, halfwidth_sigmas: float, samples: int = 4001) -> np.ndarray:
    reach = halfwidth_sigmas / spectrum.sigma_omega
    return np.linspace(-reach, reach, samples)


def _path_fwhm(tau: np.ndarray, curve: np.ndarray) -> float:
    return float(curve_metrics(delay_to_path(tau), curve, kind="peak").fwhm)


def dip_fwhm(spectrum: SpectrumModel, dispersion: Optional[DispersionProfile] = None, halfwidth_sigmas: float = 12.0) -> float:
    """FWHM of the normalized HOM dip, in path length (m)."""
    tau = _width_grid(spectrum, halfwidth_sigmas)
    if dispersion is None or dispersion.is_zero:
        return _path_fwhm(tau, dip_closed_form(spectrum, tau))
    return _path_fwhm(tau, hom_dip_numeric(spectrum, dispersion, tau))


def envelope_fwhm(spectrum: SpectrumModel, dispersion: Optional[DispersionProfile] = None, halfwidth_sigmas: float = 24.0) -> float:
    """FWHM of the classical coherence envelope, in path length (m)."""
    tau = _width_grid(spectrum, halfwidth_sigmas)
    if dispersion is None or dispersion.is_zero:
        return _path_fwhm(tau, envelope_closed_form(spectrum, tau))
    envelope, _ = classical_envelope_numeric(spectrum, dispersion, tau)
    return _path_fwhm(tau, envelope)


def dip_area_ratio(spectrum: SpectrumModel, dispersion: DispersionProfile, halfwidth_sigmas: float = 12.0) -> float:
    """
    Area of the dispersed HOM dip over the dispersion-free area.

    Stays at 1 under any sample dispersion; the dip only trades depth for width.
    """
    tau = _width_grid(spectrum, halfwidth_sigmas)
    return area_ratio(delay_to_path(tau), hom_dip_numeric(spectrum, dispersion, tau), dip_closed_form(spectrum, tau), kind="peak")


def _unit_profile(coefficients) -> DispersionProfile:
    return DispersionProfile(sample_length=1.0, phase_coefficients=tuple(coefficients))


def calibrate_beta3_length(spectrum: SpectrumModel, broadening: float = 1.19) -> float:
    """
    Finds the third-order length product beta_3 * L that broadens the HOM dip FWHM by `broadening`.

    :param spectrum: Photon spectral density.
    :param broadening: Target ratio of dispersed to dispersion-free dip FWHM (> 1).
    :return: beta_3 * L in s^3.
    :raises DomainError: If the target is not a broadening or cannot be reached.
    """
    if not broadening > 1.0:
        raise DomainError("Dip broadening must exceed 1.", parameter="broadening", value=broadening)
    reference = dip_fwhm(spectrum)

    def objective(product: float) -> float:
        try:
            return dip_fwhm(spectrum, _unit_profile([(3, product)])) / reference - broadening
        except ValueError:
            # dip left the width grid: far too broad
            return 1.0

    try:
        product = bracket_and_solve(objective, start=0.25 / spectrum.sigma_omega ** 3)
    except ValueError as e:
        raise DomainError(f"Dip broadening {broadening} cannot be reached: {e}", parameter="broadening", value=broadening)
    logger.info(f"Calibrated beta3*L = {product:.6e} s^3 for a dip broadening of {broadening}")
    return product


def calibrate_beta2_length(spectrum: SpectrumModel, target_fwhm: float = 134e-6,
                           odd_phase: Optional[DispersionProfile] = None) -> float:
    """
    Finds the second-order length product beta_2 * L that widens the classical envelope to `target_fwhm`.

    Any odd-order phase already present in the sample (e.g. from calibrate_beta3_length)
    is kept during the search, since it also widens the envelope slightly.

    :param spectrum: Photon spectral density.
    :param target_fwhm: Target envelope FWHM in path length (m).
    :param odd_phase: Other sample dispersion to keep fixed; its second-order term is ignored.
    :return: beta_2 * L in s^2.
    :raises DomainError: If the target is narrower than the envelope without second-order dispersion.
    """
    fixed = [] if odd_phase is None else [(k, b) for k, b in odd_phase.length_products() if k != 2]
    baseline = envelope_fwhm(spectrum, _unit_profile(fixed))
    if not target_fwhm > baseline:
        raise DomainError(f"Target envelope FWHM {target_fwhm:.4g} m must exceed {baseline:.4g} m.",
                          parameter="target_fwhm", value=target_fwhm)

    sigma = spectrum.sigma_omega
    ratio = target_fwhm / baseline
    halfwidth = max(24.0, 4.0 * target_fwhm / SPEED_OF_LIGHT * sigma)

    def objective(product: float) -> float:
        try:
            return envelope_fwhm(spectrum, _unit_profile(fixed + [(2, product)]), halfwidth_sigmas=halfwidth) / target_fwhm - 1.0
        except ValueError:
            return 1.0

    # Pure second order: FWHM ratio = sqrt(1 + (beta_2 L sigma^2)^2)
    guess = np.sqrt(ratio ** 2 - 1.0) / sigma ** 2
    try:
        product = bracket_and_solve(objective, start=1.5 * guess)
    except ValueError as e:
        raise DomainError(f"Envelope FWHM {target_fwhm} cannot be reached: {e}", parameter="target_fwhm", value=target_fwhm)
    logger.info(f"Calibrated beta2*L = {product:.6e} s^2 for a classical envelope FWHM of {target_fwhm * 1e6:.1f} um")
    return product
