from sqlalchemy.orm import Session
from sqlalchemy.exc import SQLAlchemyError
from database.models import BenchRun, TrialResult
from utils.errors import DatabaseError
from typing import Optional
import json
import logging
import pandas as pd

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# --- BenchRun CRUD Operations ---

def create_bench_run(
    db: Session,
    root_seed: int,
    n_trials: int,
    config: dict,
    failure_fraction: Optional[float] = None,
    ratio: Optional[float] = None
) -> BenchRun:
    """
    Creates a new benchmark run record.
    :param db: SQLAlchemy database session.
    :param root_seed: Root seed the trial seeds were spawned from.
    :param n_trials: Number of trials in the run.
    :param config: Resolved run configuration (JSON-serializable dict).
    :param failure_fraction: Fraction of failed estimates.
    :param ratio: std_classical / std_quantum, if available.
    :return: The newly created BenchRun object.
    :raises DatabaseError: If the insert fails.
    """
    db_run = BenchRun(root_seed=root_seed, n_trials=n_trials, config_json=json.dumps(config, sort_keys=True),
                      failure_fraction=failure_fraction, ratio=ratio)
    try:
        db.add(db_run)
        db.commit()
        db.refresh(db_run)
    except SQLAlchemyError as e:
        db.rollback()
        raise DatabaseError("Could not create benchmark run.", query_details={"root_seed": root_seed}, original_error=e)
    logger.info(f"Benchmark run {db_run.id} created (root seed {root_seed}, {n_trials} trials).")
    return db_run

def get_bench_runs(db: Session, skip: int = 0, limit: int = 100) -> list[BenchRun]:
    """
    Retrieves benchmark runs, newest first, with pagination.
    """
    return db.query(BenchRun).order_by(BenchRun.id.desc()).offset(skip).limit(limit).all()

def get_bench_run(db: Session, run_id: int) -> BenchRun | None:
    return db.query(BenchRun).filter(BenchRun.id == run_id).first()

# --- TrialResult CRUD Operations ---

def add_trial_results(db: Session, run_id: int, trials: pd.DataFrame) -> int:
    """
    Stores one row per (trial, mode) for a run.
    :param db: SQLAlchemy database session.
    :param run_id: ID of the owning BenchRun.
    :param trials: DataFrame with trial, seed, mode, delta_tau_m, std_err_m, delta_n, ok, error columns.
    :return: Number of rows stored.
    :raises DatabaseError: If the run does not exist or the insert fails.
    """
    if get_bench_run(db, run_id) is None:
        raise DatabaseError(f"Benchmark run {run_id} does not exist.", query_details={"run_id": run_id})

    def _value(v):
        return None if pd.isna(v) else float(v)

    rows = [
        TrialResult(run_id=run_id, trial_index=int(r.trial), seed=int(r.seed), mode=str(r.mode),
                    delta_tau_m=_value(r.delta_tau_m), std_err_m=_value(r.std_err_m), delta_n=_value(r.delta_n),
                    ok=bool(r.ok), error=None if pd.isna(r.error) else str(r.error))
        for r in trials.itertuples(index=False)
    ]
    try:
        db.add_all(rows)
        db.commit()
    except SQLAlchemyError as e:
        db.rollback()
        raise DatabaseError("Could not store trial results.", query_details={"run_id": run_id}, original_error=e)
    logger.info(f"Stored {len(rows)} trial results for run {run_id}.")
    return len(rows)

def get_trial_results(db: Session, run_id: int, mode: Optional[str] = None) -> list[TrialResult]:
    """
    Retrieves the trial results of a run ordered by trial index, optionally for one mode.
    """
    query = db.query(TrialResult).filter(TrialResult.run_id == run_id)
    if mode is not None:
        query = query.filter(TrialResult.mode == mode)
    return query.order_by(TrialResult.trial_index, TrialResult.mode).all()

def trial_results_frame(db: Session, run_id: int) -> pd.DataFrame:
    """
    Trial results of a run as a DataFrame with the same columns as trials.csv.
    """
    results = get_trial_results(db, run_id)
    return pd.DataFrame(
        [{"trial": r.trial_index, "seed": r.seed, "mode": r.mode, "delta_tau_m": r.delta_tau_m,
          "std_err_m": r.std_err_m, "delta_n": r.delta_n, "ok": r.ok, "error": r.error} for r in results],
        columns=["trial", "seed", "mode", "delta_tau_m", "std_err_m", "delta_n", "ok", "error"],
    )
