import io
import re
from pathlib import Path
from typing import Iterable, List, Union
import logging

import numpy as np
import pandas as pd

from processing.scan import ScanRecord
from utils.errors import FileProcessingError
from utils.helpers import convert_df_to_csv, write_text

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

HEADER_FIELDS = "# channel,core,seed,integration_s"
COLUMNS = ["position_m", "counts"]
_INTEGER = re.compile(r"^\d+$")


def record_filename(record: ScanRecord) -> str:
    """Canonical file name of a record, e.g. `core1_coincidences.csv`."""
    return f"{record.core}_{record.channel}.csv"


def format_scan_record(record: ScanRecord) -> str:
    """
    Renders a ScanRecord as CSV text: two comment lines carrying the metadata, then
    `position_m,counts`. Positions use 12 significant digits; sampled counts are integers,
    expected (noiseless) counts use 17 significant digits.
    """
    positions = [f"{p:.12g}" for p in record.positions]
    if record.is_sampled:
        counts = [str(int(c)) for c in record.counts]
    else:
        counts = [f"{c:.17g}" for c in record.counts]
    frame = pd.DataFrame({"position_m": positions, "counts": counts}, columns=COLUMNS)
    meta = f"# {record.channel},{record.core},{record.seed},{record.integration_time!r}"
    return f"{HEADER_FIELDS}\n{meta}\n{convert_df_to_csv(frame)}"


def write_scan_record_csv(record: ScanRecord, path: Union[str, Path]) -> Path:
    """
    Writes one record to `path`.

    :raises FileProcessingError: If the file cannot be written.
    """
    written = write_text(Path(path), format_scan_record(record))
    logger.info(f"Wrote {record.core} {record.channel} record ({record.positions.size} points) to {written}")
    return written


def parse_scan_record(text: str, filename: str = "<memory>") -> ScanRecord:
    """
    Parses the CSV text produced by format_scan_record.

    :raises FileProcessingError: On a malformed header, bad columns or invalid values.
    """
    lines = text.split("\n", 2)
    if len(lines) < 3 or lines[0].strip() != HEADER_FIELDS or not lines[1].startswith("# "):
        raise FileProcessingError("Missing or malformed scan-record header.", filename=filename)
    meta = lines[1][2:].strip().split(",")
    if len(meta) != 4:
        raise FileProcessingError(f"Expected 4 metadata fields, found {len(meta)}.", filename=filename)
    channel, core, seed, integration = meta

    try:
        frame = pd.read_csv(io.StringIO(lines[2]), dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FileProcessingError("Could not parse scan-record table.", filename=filename, original_error=e)
    if list(frame.columns) != COLUMNS:
        raise FileProcessingError(f"Expected columns {COLUMNS}, found {list(frame.columns)}.", filename=filename)

    try:
        positions = frame["position_m"].map(float).to_numpy(dtype=float)
        raw_counts = frame["counts"].tolist()
        if all(_INTEGER.match(c) for c in raw_counts):
            counts = np.array([int(c) for c in raw_counts], dtype=np.int64)
        else:
            counts = np.array([float(c) for c in raw_counts], dtype=float)
        return ScanRecord(positions=positions, counts=counts, integration_time=float(integration),
                          channel=channel, core=core, seed=int(seed))
    except ValueError as e:
        # pydantic ValidationError is a ValueError
        raise FileProcessingError(f"Invalid scan-record values: {e}", filename=filename, original_error=e)


def read_scan_record_csv(path: Union[str, Path]) -> ScanRecord:
    """
    Reads a record written by write_scan_record_csv. Re-writing the result gives identical bytes.

    :raises FileProcessingError: If the file is missing, unreadable or malformed.
    """
    path = Path(path)
    if not path.exists():
        raise FileProcessingError(f"File not found: {path}", filename=str(path))
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            text = f.read()
    except OSError as e:
        raise FileProcessingError(f"Could not read {path}.", filename=str(path), original_error=e)
    record = parse_scan_record(text, filename=str(path))
    logger.info(f"Read {record.core} {record.channel} record ({record.positions.size} points) from {path}")
    return record


def write_records(records: Iterable[ScanRecord], out_dir: Union[str, Path]) -> List[Path]:
    """Writes each record under out_dir with its canonical file name."""
    out_dir = Path(out_dir)
    return [write_scan_record_csv(record, out_dir / record_filename(record)) for record in records]
