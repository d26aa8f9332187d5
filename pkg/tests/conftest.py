import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from database.database import Base
from database import models  # noqa: F401  (registers the tables)
from processing.config import RunConfig
from processing.optics import SpectrumModel
from processing.scan import ScanPlan, simulate_core_pair

# --- Database Fixtures ---

@pytest.fixture(scope="session")
def engine():
    """Provides a SQLAlchemy engine connected to an in-memory SQLite database for the test session."""
    return create_engine("sqlite:///:memory:")

@pytest.fixture(scope="session")
def tables(engine):
    """Creates all tables in the in-memory database at the start of the session and drops them at the end."""
    Base.metadata.create_all(engine)
    yield
    Base.metadata.drop_all(engine)

@pytest.fixture(scope="function")
def db_session(engine, tables):
    """
    Provides a database session for each test function.
    Each test gets a fresh session, and changes are rolled back afterwards.
    """
    connection = engine.connect()
    transaction = connection.begin()
    Session = sessionmaker(bind=connection)
    session = Session()

    yield session

    session.close()
    transaction.rollback() # Rollback all changes
    connection.close()

# --- Physics Fixtures ---

@pytest.fixture(scope="session")
def spectrum():
    """The 1560 nm / 44 nm photon spectrum."""
    return SpectrumModel()

@pytest.fixture(scope="session")
def calibrated_config():
    """Default run configuration with the dispersion coefficients calibrated."""
    return RunConfig().resolve()

@pytest.fixture(scope="session")
def noiseless_config(calibrated_config):
    """Calibrated configuration without position jitter, drift or shot noise."""
    noise = calibrated_config.noise.model_copy(update={"position_jitter_sigma": 0.0, "shot_noise": False, "drift_sigma": 0.0})
    return calibrated_config.model_copy(update={"noise": noise})

@pytest.fixture(scope="session")
def default_plan():
    return ScanPlan()

@pytest.fixture(scope="session")
def noiseless_pair(noiseless_config):
    """The four noiseless records of one core-switching measurement."""
    quantum, classical = noiseless_config.models()
    return simulate_core_pair(noiseless_config.scenario, quantum, classical, noiseless_config.scan,
                              noiseless_config.noise, seed=1)

@pytest.fixture(scope="session")
def noisy_pair(calibrated_config):
    """One core-switching measurement with the default noise budget."""
    quantum, classical = calibrated_config.models()
    return simulate_core_pair(calibrated_config.scenario, quantum, classical, calibrated_config.scan,
                              calibrated_config.noise, seed=7)

# --- Config File Fixtures ---

NOISELESS_YAML = """\
noise:
  position_jitter_sigma: 0.0
  shot_noise: false
  drift_sigma: 0.0
bench:
  n_trials: 2
  sweep_trials: 2
"""

@pytest.fixture
def noiseless_config_file(tmp_path):
    """A YAML configuration file that switches every noise source off."""
    path = tmp_path / "noiseless.yaml"
    path.write_text(NOISELESS_YAML, encoding="utf-8")
    return path
