import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from database.crud import add_trial_results, create_bench_run
from database.database import create_db_tables, get_engine, get_session_factory
from processing import bench
from processing.config import RunConfig, load_config, write_config_snapshot
from processing.estimator import delta_n, estimate_delta_tau, fit_interferogram
from processing.ingestion import read_scan_record_csv, write_records
from processing.scan import simulate_core_pair
from utils.errors import AppError
from utils.helpers import convert_df_to_csv, convert_to_json, write_text

# Configure basic logging for the application's entry point
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def _load(args: argparse.Namespace, trials: Optional[int] = None, sweep_trials: Optional[int] = None) -> RunConfig:
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, trials=trials, output_dir=args.out, sweep_trials=sweep_trials)


# --- Commands ---

def cmd_simulate(args: argparse.Namespace) -> int:
    """Simulates one core-switching measurement and writes the four records plus the config snapshot."""
    config = _load(args).resolve()
    quantum, classical = config.models()
    pair = simulate_core_pair(config.scenario, quantum, classical, config.scan, config.noise, config.root_seed)
    written = write_records(pair.singles + pair.coincidences, config.output_dir)
    written.append(write_config_snapshot(config, config.output_dir))
    for path in written:
        print(path)
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    """Estimates the delay between two records and prints the estimate as JSON."""
    config = load_config(args.config)
    tuning = config.estimator
    if args.unweighted:
        tuning = tuning.model_copy(update={"weighted": False})
    if args.amplitude_floor is not None:
        tuning = tuning.model_copy(update={"amplitude_floor": args.amplitude_floor})
    record1 = read_scan_record_csv(args.record1)
    record2 = read_scan_record_csv(args.record2)
    estimate = estimate_delta_tau(record1, record2, args.mode, tuning, config.spectrum_model())

    payload = estimate.to_json_dict()
    scenario = config.scenario
    payload["delta_n"], payload["delta_n_std"] = delta_n(estimate, scenario.sample_length, scenario.sample_length_uncertainty)
    sys.stdout.write(convert_to_json(payload))
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    """Fits a single interferogram (dip or fringe) and prints the fit parameters as JSON."""
    config = load_config(args.config)
    record = read_scan_record_csv(args.record)
    carrier = config.classical.carrier_wavelength or config.spectrum.center_wavelength
    expected = config.estimator.quantum_fwhm if args.mode == "quantum" else config.estimator.classical_fwhm
    result = fit_interferogram(record, args.mode, carrier_wavelength=carrier, expected_fwhm=expected)
    sys.stdout.write(convert_to_json({"mode": args.mode, "core": record.core, **result._asdict()}))
    return EXIT_OK


def _persist(config: RunConfig, trials: bench.TrialSet, report) -> int:
    engine = get_engine(config.bench.database_url)
    create_db_tables(engine)
    with get_session_factory(engine)() as db:
        run = create_bench_run(db, trials.root_seed, len(trials.trials), trials.config_snapshot,
                               failure_fraction=report.failure_fraction, ratio=report.ratio)
        add_trial_results(db, run.id, trials.to_frame())
        return run.id


def cmd_bench(args: argparse.Namespace) -> int:
    """
    Runs the Monte-Carlo benchmark and writes the precision report, trial table and histograms.
    The failure budget is checked after every output is written.
    """
    config = _load(args, trials=args.trials).resolve()
    trials = bench.run_config_trials(config)
    report = bench.precision_report(trials, config.bench.bin_count)
    bench.write_bench_outputs(trials, report, config.output_dir)
    write_config_snapshot(config, config.output_dir)
    if config.bench.database_url:
        run_id = _persist(config, trials, report)
        logger.info(f"Benchmark run stored as #{run_id} in {config.bench.database_url}")
    sys.stdout.write(convert_to_json(report.model_dump(mode="json", exclude={"quantum": {"histogram"}, "classical": {"histogram"}})))
    bench.check_failure_budget(report, config.bench.max_failure_fraction)
    return EXIT_OK


def cmd_sweep_points(args: argparse.Namespace) -> int:
    """Precision versus number of scan points; writes sweep_points.csv."""
    config = _load(args, sweep_trials=args.trials).resolve()
    table = bench.scan_plan_sweep(config)
    text = convert_df_to_csv(table)
    write_text(Path(config.output_dir) / "sweep_points.csv", text)
    write_config_snapshot(config, config.output_dir)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep_dispersion(args: argparse.Namespace) -> int:
    """Interferogram widths and precision versus beta2*L; --trials 0 computes the widths only."""
    skip_trials = args.trials == 0
    config = _load(args, sweep_trials=None if skip_trials else args.trials).resolve()
    table = bench.dispersion_sensitivity_sweep(config, n_trials=0 if skip_trials else None)
    text = convert_df_to_csv(table)
    write_text(Path(config.output_dir) / "sweep_dispersion.csv", text)
    write_config_snapshot(config, config.output_dir)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep_drift(args: argparse.Namespace) -> int:
    """Precision and bias versus the random drift; writes sweep_drift.csv."""
    config = _load(args, sweep_trials=args.trials).resolve()
    table = bench.drift_sweep(config)
    text = convert_df_to_csv(table)
    write_text(Path(config.output_dir) / "sweep_drift.csv", text)
    write_config_snapshot(config, config.output_dir)
    sys.stdout.write(text)
    return EXIT_OK


# --- Argument parsing ---

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run configuration (built-in defaults when omitted).")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument("--out", default=None, help="Output directory (overrides output_dir).")
    outputs.add_argument("--seed", type=int, default=None, help="Root seed (overrides root_seed).")

    mode = argparse.ArgumentParser(add_help=False)
    mode.add_argument("--mode", choices=["quantum", "classical"], default="quantum")

    parser = argparse.ArgumentParser(prog="dualcore",
                                     description="Simulate and estimate dual-core fiber delays with HOM and white-light interferometry.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, outputs], help="Write the four records of one core-switching measurement.")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common, mode], help="Estimate delta tau between two records.")
    p.add_argument("record1", type=Path)
    p.add_argument("record2", type=Path)
    p.add_argument("--unweighted", action="store_true", help="Fit the phase with unit weights.")
    p.add_argument("--amplitude-floor", type=float, default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", parents=[common, mode], help="Model fit of a single interferogram.")
    p.add_argument("record", type=Path)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", parents=[common, outputs], help="Monte-Carlo precision benchmark.")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-points", parents=[common, outputs], help="Precision versus number of scan points.")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_sweep_points)

    p = sub.add_parser("sweep-dispersion", parents=[common, outputs], help="Widths and precision versus beta2*L.")
    p.add_argument("--trials", type=int, default=None, help="Trials per cell; 0 skips the Monte-Carlo columns.")
    p.set_defaults(func=cmd_sweep_dispersion)

    p = sub.add_parser("sweep-drift", parents=[common, outputs], help="Precision and bias versus the random drift.")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_sweep_drift)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.
    :return: 0 on success, 2 for configuration/IO errors, 3 for numerical failures.
    """
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(args.log_level)
    try:
        return args.func(args)
    except AppError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.critical(f"Unexpected failure in '{args.command}': {e}", exc_info=True)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
