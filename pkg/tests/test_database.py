import pytest
import numpy as np
import pandas as pd
from database import crud
from processing.aggregation import TRIAL_COLUMNS
from utils.errors import DatabaseError

# Fixtures for db_session are provided by conftest.py

@pytest.fixture
def trials_df():
    """Two trials; the second classical estimate failed."""
    return pd.DataFrame([
        {"trial": 0, "seed": 11, "mode": "quantum", "delta_tau_m": 41.0e-6, "std_err_m": 0.1e-6, "delta_n": 82.0e-6, "ok": True, "error": None},
        {"trial": 0, "seed": 11, "mode": "classical", "delta_tau_m": 41.5e-6, "std_err_m": 0.4e-6, "delta_n": 83.0e-6, "ok": True, "error": None},
        {"trial": 1, "seed": 12, "mode": "quantum", "delta_tau_m": 41.2e-6, "std_err_m": 0.1e-6, "delta_n": 82.4e-6, "ok": True, "error": None},
        {"trial": 1, "seed": 12, "mode": "classical", "delta_tau_m": np.nan, "std_err_m": np.nan, "delta_n": np.nan, "ok": False,
         "error": "[phase_fit] residual too large"},
    ], columns=TRIAL_COLUMNS)

@pytest.fixture
def bench_run(db_session):
    return crud.create_bench_run(db_session, root_seed=20221201, n_trials=2, config={"root_seed": 20221201}, failure_fraction=0.25)

def test_create_bench_run(db_session, bench_run):
    """Test creating a benchmark run."""
    assert bench_run.id is not None
    assert bench_run.created_at is not None
    assert bench_run.config_json == '{"root_seed": 20221201}'
    assert bench_run.ratio is None
    assert crud.get_bench_run(db_session, bench_run.id) == bench_run
    assert crud.get_bench_run(db_session, 99999) is None

def test_get_bench_runs_newest_first(db_session, bench_run):
    """Test listing runs with pagination."""
    newer = crud.create_bench_run(db_session, root_seed=5, n_trials=3, config={}, ratio=4.0)
    runs = crud.get_bench_runs(db_session)
    assert [r.id for r in runs] == [newer.id, bench_run.id]
    assert crud.get_bench_runs(db_session, skip=1, limit=1) == [bench_run]

def test_add_trial_results(db_session, bench_run, trials_df):
    """Test storing trial rows, failed estimates included."""
    assert crud.add_trial_results(db_session, bench_run.id, trials_df) == 4
    results = crud.get_trial_results(db_session, bench_run.id)
    assert [(r.trial_index, r.mode) for r in results] == [(0, "classical"), (0, "quantum"), (1, "classical"), (1, "quantum")]
    failed = results[2]
    assert not failed.ok
    assert failed.delta_tau_m is None
    assert failed.error == "[phase_fit] residual too large"
    assert len(bench_run.trials) == 4

def test_get_trial_results_by_mode(db_session, bench_run, trials_df):
    """Trial rows can be filtered by estimation mode."""
    crud.add_trial_results(db_session, bench_run.id, trials_df)
    quantum = crud.get_trial_results(db_session, bench_run.id, mode="quantum")
    assert [r.delta_tau_m for r in quantum] == pytest.approx([41.0e-6, 41.2e-6])
    assert crud.get_trial_results(db_session, bench_run.id, mode="hybrid") == []

def test_trial_results_frame(db_session, bench_run, trials_df):
    """Test that a stored run reads back as a trials table."""
    crud.add_trial_results(db_session, bench_run.id, trials_df)
    frame = crud.trial_results_frame(db_session, bench_run.id)
    assert list(frame.columns) == TRIAL_COLUMNS
    assert len(frame) == 4
    assert frame["ok"].tolist() == [True, True, False, True]
    assert frame.loc[frame["seed"] == 12, "mode"].tolist() == ["classical", "quantum"]

def test_trial_results_frame_empty_run(db_session, bench_run):
    """A run without trials gives an empty frame with the trial columns."""
    frame = crud.trial_results_frame(db_session, bench_run.id)
    assert frame.empty
    assert list(frame.columns) == TRIAL_COLUMNS

def test_add_trial_results_missing_run(db_session, trials_df):
    """Test that results for an unknown run are rejected."""
    with pytest.raises(DatabaseError, match="does not exist") as excinfo:
        crud.add_trial_results(db_session, 99999, trials_df)
    assert excinfo.value.exit_code == 2
