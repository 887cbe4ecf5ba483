import json

import pandas as pd
import pytest

from conftest import corpus_config
from errors import ConvergenceError
from main import main
from services.pipeline import run_pipeline


def _tree(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and "_meta" not in p.relative_to(root).parts
    }


@pytest.fixture(scope="module")
def serial_run(synth_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("serial")
    config = corpus_config(synth_corpus, out, workers=1)
    return run_pipeline(config), out


def test_od_matrix_equals_planted_trips(serial_run, synth_corpus):
    results, _ = serial_run
    planted = synth_corpus["manifest"]["trip_table"]
    od = results.flows.od
    for i, origin in enumerate(od.regions):
        for j, dest in enumerate(od.regions):
            assert od.a[i][j] == planted.get(origin, {}).get(dest, 0), (origin, dest)


def test_city_categories_match_manifest(serial_run, synth_corpus):
    results, _ = serial_run
    planted = synth_corpus["manifest"]["city_categories"]
    for breakdown in results.flows.city_breakdowns:
        books = planted[breakdown.city_id]
        classified = sum(books.get(k, 0) for k in ("resident", "domestic_tourist", "foreign_tourist"))
        assert breakdown.classified_photos == classified
        assert breakdown.unknown_home_photos == books.get("unknown_home", 0)
        assert breakdown.resident == pytest.approx(books.get("resident", 0) / classified)


def test_stage_counts_reconcile(serial_run, synth_corpus):
    results, _ = serial_run
    manifest = synth_corpus["manifest"]
    counts = results.counts
    assert counts.records_kept == manifest["in_window_records"]
    assert counts.unassigned == manifest["unassigned"]
    assert counts.located + counts.unassigned == counts.records_kept
    assert counts.homed_photos + counts.unknown_home_photos == counts.located
    # every homed user lives in a registry city, so nothing falls outside "all"
    assert counts.outside_region_set == 0
    assert counts.od_photos == counts.homed_photos


def test_directional_harness_reports_planted_direction(serial_run):
    directional = serial_run[0].flows.directional
    assert (directional.group_a, directional.group_b) == ("North America", "Europe")
    assert directional.a_to_b > directional.b_to_a
    assert directional.stronger == "North America->Europe"


def test_spatial_results_per_city(serial_run):
    results, _ = serial_run
    assert [c.city_id for c in results.spatial.cities] == ["AAA", "BBB", "CCC", "DDD"]
    for city in results.spatial.cities:
        assert city.field.layer("total").sum() + city.field.outside > 0
        assert len(city.hotspots) >= 3
        coverages = [p.coverage for p in city.coverage]
        assert coverages == sorted(coverages)
        assert all(0 < c <= 1 for c in coverages)
    assert [s.n for s in results.spatial.coverage_summary] == [1, 2, 3, 4, 5]


def test_output_tree(serial_run):
    _, out = serial_run
    for name in ("report.json", "ingest_stats.json", "fits.json", "homes.csv", "od_matrix.csv",
                 "null_model_ratios.csv", "flow_edges.csv", "lognormal_variances.csv", "hotspots.csv",
                 "coverage_summary.csv", "spatial/AAA/hotspots.geojson", "_meta/run_meta.json"):
        assert (out / name).is_file(), name
    report = json.loads((out / "report.json").read_text())
    assert report["ingest"]["records_kept"] == report["counts"]["records_kept"]
    assert report["od_matrix"]["regions"]


def test_worker_count_does_not_change_outputs(synth_corpus, serial_run, tmp_path):
    config = corpus_config(synth_corpus, tmp_path / "pooled", workers=8)
    run_pipeline(config)
    assert _tree(tmp_path / "pooled") == _tree(serial_run[1])


def test_stages_stop_where_asked(synth_corpus, tmp_path):
    results = run_pipeline(corpus_config(synth_corpus, tmp_path), export=False, through="flows")
    assert results.flows is not None
    assert results.spatial is None
    assert not (tmp_path / "report.json").exists()


def test_single_city_run(synth_corpus, tmp_path):
    results = run_pipeline(corpus_config(synth_corpus, tmp_path, city="CCC"), export=False)
    assert [c.city_id for c in results.spatial.cities] == ["CCC"]


def test_cli_run(synth_corpus, tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["run", str(synth_corpus["photos"]), "--registry", str(synth_corpus["registry"]),
                 "--aliases", str(synth_corpus["aliases"]), "--regions", "all", "--hotspots", "3",
                 "--coverage-max-n", "3", "--no-fail-on-nonconvergence", "--out", str(out)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["counts"]["records_kept"] == synth_corpus["manifest"]["in_window_records"]
    assert (out / "report.json").is_file()


def test_cli_flows_verb(synth_corpus, tmp_path, capsys):
    code = main(["flows", str(synth_corpus["photos"]), "--registry", str(synth_corpus["registry"]),
                 "--aliases", str(synth_corpus["aliases"]), "--regions", "all", "--out", str(tmp_path)])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["regions"]
    assert (tmp_path / "od_matrix.csv").is_file()
    assert not (tmp_path / "spatial").exists()


def test_empty_directory_is_data_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["run", str(empty), "--out", str(tmp_path / "out")]) == 3
    assert "no input files" in capsys.readouterr().err


def test_inverted_window_is_config_error(synth_corpus, tmp_path, capsys):
    code = main(["ingest", str(synth_corpus["photos"]), "--window", "2010-01-01..2007-01-01",
                 "--out", str(tmp_path)])
    assert code == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_missing_input_is_config_error(tmp_path):
    assert main(["ingest", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) == 2


def test_nonconvergence_exit_code(synth_corpus, tmp_path, monkeypatch, capsys):
    def failing(config, export=True, through="spatial"):
        raise ConvergenceError("spatial: AAA/foreign: no finite optimum")

    monkeypatch.setattr("routes.run.run_pipeline", failing)
    assert main(["run", str(synth_corpus["photos"]), "--out", str(tmp_path)]) == 4
    assert "no finite optimum" in capsys.readouterr().err


def test_bundled_corpus_runs_with_default_settings(tmp_path, capsys):
    corpus = tmp_path / "synth"
    assert main(["synth", "--out", str(corpus)]) == 0
    out = tmp_path / "out"
    code = main(["run", str(corpus / "photos"), "--registry", str(corpus / "registry.csv"),
                 "--aliases", str(corpus / "aliases.csv"), "--out", str(out)])
    assert code == 0, capsys.readouterr().err
    density = {city: fits["density"] for city, fits in
               json.loads((out / "report.json").read_text())["fits"]["spatial"].items()}
    assert len(density) == 10
    for city, fits in density.items():
        for category in ("resident", "total"):
            assert fits[category]["converged"], (city, category)
            assert fits[category]["params"]["sigma2"] > 0
    variances = pd.read_csv(out / "lognormal_variances.csv")
    failed = variances[variances["error"].notna()]
    assert failed["error"].str.contains("non-empty cells").all()
