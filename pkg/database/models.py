from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship
from datetime import datetime
from database.database import Base


class BenchRun(Base):
    """
    One Monte-Carlo benchmark run: the resolved configuration and its outcome.
    """
    __tablename__ = "bench_runs"

    id = Column(Integer, primary_key=True, index=True)
    created_at = Column(DateTime, default=datetime.now)
    root_seed = Column(Integer, nullable=False)
    n_trials = Column(Integer, nullable=False)
    config_json = Column(Text, nullable=False)  # resolved RunConfig
    failure_fraction = Column(Float, nullable=True)
    ratio = Column(Float, nullable=True)  # std_classical / std_quantum

    trials = relationship("TrialResult", back_populates="run", cascade="all, delete-orphan")


class TrialResult(Base):
    """
    One estimator outcome of one trial (a trial contributes a quantum and a classical row).
    """
    __tablename__ = "trial_results"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("bench_runs.id"), nullable=False, index=True)
    trial_index = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    mode = Column(String, nullable=False)
    delta_tau_m = Column(Float, nullable=True)
    std_err_m = Column(Float, nullable=True)
    delta_n = Column(Float, nullable=True)
    ok = Column(Boolean, nullable=False, default=True)
    error = Column(Text, nullable=True)

    run = relationship("BenchRun", back_populates="trials")
