"""Photo-dump ingestion: parse, drop duplicates and bad timestamps, window.

Input files are ``<location_id>_<label>.csv`` with header
``photo_id,user_id,taken_at,lat,lon[,url]``. Parsing runs per file (optionally
in a process pool); deduplication keeps a set of seen keys, so memory grows
with the number of distinct photos, not with row width.
"""
import csv
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

from loguru import logger
from pydantic.datetime_parse import parse_datetime

from errors import ConfigError, DataError
from models.photos import (
    IngestStats,
    ParseError,
    ParseErrorKind,
    PhotoRecord,
    SourceLabel,
    YearlyActivity,
)

HEADER = ["photo_id", "user_id", "taken_at", "lat", "lon"]
OPTIONAL_COLUMNS = ["url"]

# Anything earlier is not a real capture time for a consumer digital camera.
EARLIEST_VALID = datetime(1990, 1, 1, tzinfo=timezone.utc)

Window = Tuple[datetime, datetime]


def split_filename(path: Path) -> Optional[Tuple[str, SourceLabel]]:
    """``nyc_tourist.csv`` -> ("nyc", tourist); None when the name has no valid label."""
    stem = path.stem
    location_id, sep, label = stem.rpartition("_")
    if not sep or not location_id:
        return None
    try:
        return location_id, SourceLabel(label)
    except ValueError:
        return None


def parse_timestamp(raw: str) -> datetime:
    value = parse_datetime(raw.strip())
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    value = value.astimezone(timezone.utc)
    if value < EARLIEST_VALID:
        raise ValueError(f"timestamp {raw!r} predates {EARLIEST_VALID.date()}")
    return value


def parse_record(
    line: Union[str, List[str]],
    location_id: str,
    source_label: SourceLabel,
    line_no: int = 0,
) -> Union[PhotoRecord, ParseError]:
    """Turn one CSV data row into a PhotoRecord, or describe why it was rejected."""
    fields = next(csv.reader([line])) if isinstance(line, str) else line

    def reject(kind: ParseErrorKind, message: str) -> ParseError:
        return ParseError(kind=kind, line_no=line_no, location_id=location_id, message=message)

    if len(fields) not in (len(HEADER), len(HEADER) + len(OPTIONAL_COLUMNS)):
        return reject(ParseErrorKind.malformed, f"expected 5 or 6 fields, got {len(fields)}")
    photo_id, user_id, taken_at, lat, lon = (f.strip() for f in fields[:5])
    if not user_id:
        return reject(ParseErrorKind.malformed, "empty user_id")
    try:
        lat_f, lon_f = float(lat), float(lon)
    except ValueError:
        return reject(ParseErrorKind.malformed, f"non-numeric coordinates {lat!r}, {lon!r}")
    if not (-90.0 <= lat_f <= 90.0 and -180.0 <= lon_f <= 180.0):
        return reject(ParseErrorKind.bad_coordinates, f"coordinates ({lat_f}, {lon_f}) out of range")
    try:
        when = parse_timestamp(taken_at)
    except (ValueError, TypeError) as exc:
        return reject(ParseErrorKind.bad_timestamp, str(exc))

    # fields were validated above; skip a second validation pass
    return PhotoRecord.construct(
        photo_id=photo_id,
        user_id=user_id,
        taken_at=when,
        lat=lat_f,
        lon=lon_f,
        location_id=location_id,
        source_label=source_label,
    )


def parse_file(path: Path) -> Tuple[List[PhotoRecord], IngestStats]:
    """Parse one dump file. Returned stats carry only the per-file parse counters."""
    stats = IngestStats(files_read=1)
    named = split_filename(path)
    if named is None:
        logger.warning("skipping {}: name is not <location_id>_<resident|tourist|unknown>.csv", path)
        return [], IngestStats()
    location_id, label = named
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [], stats
        header = [h.strip() for h in header]
        if header not in (HEADER, HEADER + OPTIONAL_COLUMNS):
            raise DataError(f"{path}: unexpected header {header}")
        for line_no, fields in enumerate(reader, start=2):
            if not fields:
                continue
            parsed = parse_record(fields, location_id, label, line_no)
            if isinstance(parsed, PhotoRecord):
                stats.records_read += 1
                records.append(parsed)
                continue
            logger.warning("{} line {}: {} ({})", path.name, line_no, parsed.kind.value, parsed.message)
            if parsed.kind is ParseErrorKind.bad_timestamp:
                stats.records_read += 1
                stats.bad_timestamps_removed += 1
            elif parsed.kind is ParseErrorKind.bad_coordinates:
                stats.bad_coordinates += 1
            else:
                stats.malformed_rows += 1
    return records, stats


def discover_inputs(paths: Iterable[Path]) -> List[Path]:
    files = set()
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.update(f for f in p.glob("*.csv") if split_filename(f) is not None)
        elif p.is_file():
            files.add(p)
    return sorted(files)


def deduplicate(records: Iterable[PhotoRecord], stats: Optional[IngestStats] = None) -> Iterator[PhotoRecord]:
    """Yield the first occurrence of every duplicate key, in input order."""
    seen = set()
    for record in records:
        key = record.dedup_key()
        if key in seen:
            if stats is not None:
                stats.duplicates_removed += 1
            continue
        seen.add(key)
        yield record


def validate_window(window: Window) -> Window:
    start, end = window
    if start >= end:
        raise ConfigError(f"inverted time window {start.isoformat()} .. {end.isoformat()}")
    return window


def filter_window(
    records: Iterable[PhotoRecord], window: Window, stats: Optional[IngestStats] = None
) -> Iterator[PhotoRecord]:
    start, end = validate_window(window)
    for record in records:
        if start <= record.taken_at < end:
            yield record
        elif stats is not None:
            stats.out_of_window_removed += 1


class YearlyCounter:
    """Pass-through that tallies photos and distinct users per calendar year."""

    def __init__(self):
        self.photos: Dict[int, int] = defaultdict(int)
        self.users: Dict[int, set] = defaultdict(set)

    def __call__(self, records: Iterable[PhotoRecord]) -> Iterator[PhotoRecord]:
        for record in records:
            year = record.taken_at.year
            self.photos[year] += 1
            self.users[year].add(record.user_id)
            yield record

    def result(self) -> List[YearlyActivity]:
        return [
            YearlyActivity(year=y, photos=self.photos[y], users=len(self.users[y]))
            for y in sorted(self.photos)
        ]


def yearly_activity(records: Iterable[PhotoRecord]) -> List[YearlyActivity]:
    counter = YearlyCounter()
    for _ in counter(records):
        pass
    return counter.result()


def _parsed_files(files: List[Path], workers: int) -> Iterator[Tuple[List[PhotoRecord], IngestStats]]:
    if workers <= 1 or len(files) <= 1:
        for f in files:
            yield parse_file(f)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps file order, so the record sequence matches the serial path
        yield from pool.map(parse_file, files)


def ingest(
    paths: Iterable[Path], window: Window, workers: int = 1
) -> Tuple[List[PhotoRecord], IngestStats, List[YearlyActivity]]:
    """Run the full cleaning stage over files and directories.

    Returns the kept records sorted by (location_id, photo_id), the stats and the
    per-year activity of cleaned records before windowing.
    """
    validate_window(window)
    files = discover_inputs(paths)
    if not files:
        raise DataError("no input files")

    stats = IngestStats()

    def stream() -> Iterator[PhotoRecord]:
        for records, file_stats in _parsed_files(files, workers):
            stats.files_read += file_stats.files_read
            stats.records_read += file_stats.records_read
            stats.bad_timestamps_removed += file_stats.bad_timestamps_removed
            stats.bad_coordinates += file_stats.bad_coordinates
            stats.malformed_rows += file_stats.malformed_rows
            yield from records

    yearly = YearlyCounter()
    kept = list(filter_window(yearly(deduplicate(stream(), stats)), window, stats))
    kept.sort(key=lambda r: (r.location_id, r.photo_id))
    stats.records_kept = len(kept)
    if not stats.balanced():
        raise DataError(f"ingest bookkeeping does not balance: {stats.dict()}")
    logger.info(
        "ingest: {} files, {} read, {} duplicates, {} bad timestamps, {} out of window, {} kept",
        stats.files_read, stats.records_read, stats.duplicates_removed,
        stats.bad_timestamps_removed, stats.out_of_window_removed, stats.records_kept,
    )
    if stats.malformed_rows or stats.bad_coordinates:
        logger.warning("ingest: skipped {} malformed rows and {} rows with bad coordinates",
                       stats.malformed_rows, stats.bad_coordinates)
    return kept, stats, yearly.result()
