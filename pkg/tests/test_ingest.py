from pathlib import Path

import pytest
from loguru import logger

from conftest import make_record, utc, write_dump
from errors import ConfigError, DataError
from models.photos import IngestStats, ParseError, ParseErrorKind, PhotoRecord, SourceLabel
from services.ingest import (
    deduplicate,
    discover_inputs,
    filter_window,
    ingest,
    parse_file,
    parse_record,
    split_filename,
    yearly_activity,
)

WINDOW = (utc(2007, 1, 1), utc(2010, 1, 1))


def test_parse_record_maps_fields():
    rec = parse_record("p1,u1,2008-06-01T12:00:00Z,40.7580,-73.9855", "nyc", SourceLabel.tourist)
    assert isinstance(rec, PhotoRecord)
    assert rec.user_id == "u1"
    assert rec.taken_at == utc(2008, 6, 1, 12)
    assert (rec.lat, rec.lon) == (40.7580, -73.9855)
    assert rec.location_id == "nyc"
    assert rec.source_label is SourceLabel.tourist


def test_parse_record_accepts_and_ignores_url():
    rec = parse_record("p1,u1,2008-06-01T12:00:00Z,40.0,-74.0,http://x/1.jpg", "nyc", SourceLabel.unknown)
    assert isinstance(rec, PhotoRecord)


def test_zero_timestamp_is_bad_timestamp():
    err = parse_record("p2,u1,0000-00-00T00:00:00Z,40.0,-74.0", "nyc", SourceLabel.tourist, line_no=3)
    assert isinstance(err, ParseError)
    assert err.kind is ParseErrorKind.bad_timestamp
    assert err.line_no == 3


def test_timestamp_before_1990_is_bad():
    err = parse_record("p2,u1,1970-01-01T00:00:00Z,40.0,-74.0", "nyc", SourceLabel.tourist)
    assert err.kind is ParseErrorKind.bad_timestamp


def test_latitude_out_of_range():
    err = parse_record("p3,u2,2008-06-01T12:00:00Z,95.0,-74.0", "nyc", SourceLabel.tourist)
    assert err.kind is ParseErrorKind.bad_coordinates


def test_wrong_field_count_is_malformed():
    err = parse_record("p3,u2,2008-06-01T12:00:00Z,40.0", "nyc", SourceLabel.tourist)
    assert err.kind is ParseErrorKind.malformed


def test_split_filename():
    assert split_filename(Path("new_york_tourist.csv")) == ("new_york", SourceLabel.tourist)
    assert split_filename(Path("nyc_visitor.csv")) is None


def test_identical_rows_collapse():
    a = make_record("p1", "u1", utc(2008, 1, 1))
    stats = IngestStats()
    kept = list(deduplicate([a, a], stats))
    assert kept == [a]
    assert stats.duplicates_removed == 1


def test_same_quadruple_different_ids_both_kept():
    a = make_record("p1", "u1", utc(2008, 1, 1))
    b = make_record("p2", "u1", utc(2008, 1, 1))
    assert len(list(deduplicate([a, b]))) == 2


def test_missing_photo_id_falls_back_to_quadruple():
    a = make_record("", "u1", utc(2008, 1, 1))
    b = make_record("", "u1", utc(2008, 1, 1))
    c = make_record("", "u1", utc(2008, 1, 2))
    assert len(list(deduplicate([a, b, c]))) == 2


def test_dedup_keeps_first_occurrence_and_is_idempotent():
    first = make_record("p1", "u1", utc(2008, 1, 1), location_id="a")
    second = make_record("p1", "u1", utc(2008, 1, 1), location_id="b")
    once = list(deduplicate([first, second, make_record("p2", "u2", utc(2008, 2, 1))]))
    assert once[0].location_id == "a"
    assert list(deduplicate(once)) == once


def test_window_bounds():
    before = make_record("p1", "u1", utc(2006, 12, 31, 23, 59, 59))
    start = make_record("p2", "u1", utc(2007, 1, 1))
    end = make_record("p3", "u1", utc(2010, 1, 1))
    stats = IngestStats()
    kept = list(filter_window([before, start, end], WINDOW, stats))
    assert kept == [start]
    assert stats.out_of_window_removed == 2


def test_inverted_window_rejected():
    with pytest.raises(ConfigError):
        list(filter_window([], (WINDOW[1], WINDOW[0])))


def test_yearly_activity_counts_photos_and_users():
    records = [
        make_record("p1", "u1", utc(2007, 3, 1)),
        make_record("p2", "u1", utc(2007, 4, 1)),
        make_record("p3", "u2", utc(2008, 1, 1)),
    ]
    years = {y.year: (y.photos, y.users) for y in yearly_activity(records)}
    assert years == {2007: (2, 1), 2008: (1, 1)}


def test_parse_file_counts(tmp_path):
    path = write_dump(tmp_path, "nyc_tourist.csv", [
        "p1,u1,2008-06-01T12:00:00Z,40.7580,-73.9855",
        "p2,u1,0000-00-00T00:00:00Z,40.0,-74.0",
        "p3,u2,2008-06-01T12:00:00Z,95.0,-74.0",
        "p4,u2,2008-06-01",
    ])
    records, stats = parse_file(path)
    assert [r.photo_id for r in records] == ["p1"]
    assert stats.records_read == 2
    assert stats.bad_timestamps_removed == 1
    assert stats.bad_coordinates == 1
    assert stats.malformed_rows == 1


def test_rejected_rows_are_logged_with_line_numbers(tmp_path):
    path = write_dump(tmp_path, "nyc_tourist.csv", [
        "p1,u1,2008-06-01T12:00:00Z,40.7580,-73.9855",
        "p2,u1,0000-00-00T00:00:00Z,40.0,-74.0",
    ])
    messages = []
    sink = logger.add(messages.append, level="INFO", format="{level} {message}")
    try:
        parse_file(path)
    finally:
        logger.remove(sink)
    assert any(m.startswith("WARNING nyc_tourist.csv line 3: bad_timestamp") for m in messages)


def test_bad_header_is_data_error(tmp_path):
    path = write_dump(tmp_path, "nyc_tourist.csv", ["p1,u1"], header="id,user")
    with pytest.raises(DataError):
        parse_file(path)


def test_ingest_balances_and_sorts(tmp_path):
    write_dump(tmp_path, "nyc_tourist.csv", [
        "p9,u1,2008-06-01T12:00:00Z,40.75,-73.98",
        "p9,u1,2008-06-01T12:00:00Z,40.75,-73.98",
        "p3,u2,2006-06-01T12:00:00Z,40.75,-73.98",
        "p4,u2,0000-00-00T00:00:00Z,40.75,-73.98",
    ])
    write_dump(tmp_path, "london_resident.csv", ["p1,u3,2009-01-01T00:00:00Z,51.5,-0.12"])
    kept, stats, yearly = ingest([tmp_path], WINDOW)
    assert [(r.location_id, r.photo_id) for r in kept] == [("london", "p1"), ("nyc", "p9")]
    assert stats.records_read == 5
    assert stats.duplicates_removed == 1
    assert stats.bad_timestamps_removed == 1
    assert stats.out_of_window_removed == 1
    assert stats.records_kept == 2
    assert stats.balanced()
    assert {y.year for y in yearly} == {2006, 2008, 2009}


def test_ingest_with_workers_matches_serial(tmp_path):
    for k in range(4):
        write_dump(tmp_path, f"loc{k}_unknown.csv", [
            f"p{k}{i},u{i},2008-0{1 + i}-01T00:00:00Z,10.0,10.0" for i in range(5)
        ] + [f"p{k}0,u0,2008-01-01T00:00:00Z,10.0,10.0"])
    serial = ingest([tmp_path], WINDOW, workers=1)
    pooled = ingest([tmp_path], WINDOW, workers=3)
    assert [r.photo_id for r in serial[0]] == [r.photo_id for r in pooled[0]]
    assert serial[1] == pooled[1]


def test_no_input_files(tmp_path):
    with pytest.raises(DataError, match="no input files"):
        ingest([tmp_path], WINDOW)


def test_discover_skips_badly_named_files(tmp_path):
    write_dump(tmp_path, "nyc_tourist.csv", [])
    write_dump(tmp_path, "notes.csv", [])
    assert [p.name for p in discover_inputs([tmp_path])] == ["nyc_tourist.csv"]


def test_synthetic_duplicates_and_window_recovered(synth_corpus):
    manifest = synth_corpus["manifest"]
    _, stats, _ = ingest([synth_corpus["photos"]], WINDOW)
    assert stats.duplicates_removed == manifest["duplicates"]["count"]
    assert stats.bad_timestamps_removed == manifest["bad_timestamps"]
    assert stats.out_of_window_removed == manifest["out_of_window"]
    assert stats.records_kept == manifest["in_window_records"]
    assert stats.records_read == manifest["rows_written"]
    assert stats.balanced()
