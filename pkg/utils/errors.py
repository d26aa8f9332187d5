from typing import Optional, Any, Dict
import logging

logger = logging.getLogger(__name__)


class AppError(Exception):
    """Base exception for all custom application-specific errors."""
    exit_code = 3

    def __init__(self, message: str = "An application error occurred.", details: Optional[Any] = None):
        self.message = message
        self.details = details
        super().__init__(self.message)
        # Every error is logged once, where it is raised
        if not logging.getLogger().handlers:
            logging.basicConfig(level=logging.ERROR, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        logger.error(f"{type(self).__name__}: {message} | Details: {details}")


class DomainError(AppError):
    """
    Raised when a physical parameter is outside its domain.
    Examples: non-positive wavelength, visibility above one, a scan step larger than the span.
    """
    exit_code = 2

    def __init__(self, message: str = "Invalid physical parameter.", parameter: Optional[str] = None, value: Optional[Any] = None):
        details = {"parameter": parameter, "value": value} if parameter or value is not None else None
        super().__init__(message, details)
        self.parameter = parameter
        self.value = value


class QuadratureError(AppError):
    """
    Raised when a spectral integral does not converge under grid doubling.
    The oracle refuses to return an under-resolved curve.
    """
    def __init__(self, message: str = "Spectral quadrature did not converge.", points: Optional[int] = None, change: Optional[float] = None):
        details = {"points": points, "change": change} if points is not None or change is not None else None
        super().__init__(message, details)
        self.points = points
        self.change = change


class SimulationError(AppError):
    """Raised when a simulated measurement would violate the physical model (e.g. negative mean counts)."""
    def __init__(self, message: str = "Simulation failed.", record: Optional[Dict] = None):
        super().__init__(message, record)
        self.record = record


class EstimationError(AppError):
    """
    Raised when a stage of the delay estimator cannot produce a trustworthy result.
    The stage name (preprocess, ndft, band_select, phase_fit, delta_n, fit) is kept so the CLI can report it.
    """
    def __init__(self, message: str = "Estimation failed.", stage: Optional[str] = None, original_error: Optional[Exception] = None):
        details = {"stage": stage, "original_error": str(original_error) if original_error else None}
        super().__init__(f"[{stage}] {message}" if stage else message, details)
        self.stage = stage
        self.original_error = original_error


class BenchmarkError(AppError):
    """Raised when a benchmark run exceeds its failed-trial budget."""
    def __init__(self, message: str = "Benchmark run failed.", failure_fraction: Optional[float] = None):
        super().__init__(message, {"failure_fraction": failure_fraction})
        self.failure_fraction = failure_fraction


class ConfigError(AppError):
    """
    Raised when a run configuration cannot be parsed or validated.
    Carries the source file and the line of the offending key when it is known.
    """
    exit_code = 2

    def __init__(self, message: str = "Invalid configuration.", filename: Optional[str] = None, line: Optional[int] = None, original_error: Optional[Exception] = None):
        location = f"{filename or '<config>'}:{line}: " if line is not None else (f"{filename}: " if filename else "")
        details = {"filename": filename, "line": line, "original_error": str(original_error) if original_error else None}
        super().__init__(f"{location}{message}", details)
        self.filename = filename
        self.line = line
        self.original_error = original_error


class FileProcessingError(AppError):
    """
    Raised when there's an issue reading, writing, or parsing a data file.
    Examples: file not found, permission denied, malformed scan-record header.
    """
    exit_code = 2

    def __init__(self, message: str = "Error processing file.", filename: Optional[str] = None, original_error: Optional[Exception] = None):
        details = {"filename": filename, "original_error": str(original_error)} if filename or original_error else None
        super().__init__(message, details)
        self.filename = filename
        self.original_error = original_error


class DatabaseError(AppError):
    """
    Raised when a benchmark run or its trial results cannot be stored or read,
    or when results are added to a run that does not exist.
    """
    exit_code = 2

    def __init__(self, message: str = "Database operation failed.", query_details: Optional[Dict] = None, original_error: Optional[Exception] = None):
        details = {"query_details": query_details, "original_error": str(original_error)} if query_details or original_error else None
        super().__init__(message, details)
        self.query_details = query_details
        self.original_error = original_error
