import json

import pandas as pd
import pytest
from shapely.geometry import MultiPolygon, shape

from errors import DataError
from models.config import PipelineConfig
from models.photos import IngestStats
from models.results import PipelineResults
from models.spatial import GridSpec, Hotspot
from services.exports import (
    cell_polygon,
    export_flows,
    export_outputs,
    flow_edges_frame,
    hotspots_geojson,
    read_ratio_matrix,
    write_ratio_matrix,
)
from services.pipeline import run_flows

SPEC = GridSpec(city_id="NYC", anchor=(40.7, -74.0), n_rows=10, n_cols=10)


def _frame():
    rows = [
        ("p1", "u1", "NYC", "NYC", "US", "US", "resident"),
        ("p2", "u1", "SFO", "NYC", "US", "US", "domestic_tourist"),
        ("p3", "u1", "LON", "NYC", "US", "GB", "foreign_tourist"),
        ("p4", "u2", "LON", "LON", "GB", "GB", "resident"),
        ("p5", "u2", "NYC", "LON", "GB", "US", "foreign_tourist"),
        ("p6", "u3", "SFO", "SFO", "US", "US", "resident"),
        ("p7", "u3", "LON", "SFO", "US", "GB", "foreign_tourist"),
    ]
    return pd.DataFrame(rows, columns=["photo_id", "user_id", "city_id", "home_city_id", "home_country",
                                       "city_country", "category"])


@pytest.fixture
def flows(registry):
    return run_flows(PipelineConfig(regions="all"), _frame(), registry)


def test_ratio_matrix_reads_back_exactly(tmp_path):
    regions = ["NYC", "NA", "LON"]
    ratio = [[None, 1.2, 0.1 + 0.2], [2 / 3, None, None], [1e-9, 7.0, None]]
    path = write_ratio_matrix(regions, ratio, tmp_path / "ratios.csv")
    assert read_ratio_matrix(path) == (regions, ratio)


def test_flow_edges_cover_every_ordered_pair(flows):
    edges = flow_edges_frame(flows)
    n = len(flows.od.regions)
    assert len(edges) == n * n - n
    assert not (edges["origin"] == edges["destination"]).any()
    assert edges["photos"].sum() == sum(flows.od.a[i][j] for i in range(n) for j in range(n) if i != j)


def test_export_flows_files(flows, tmp_path):
    written = {p.name for p in export_flows(flows, tmp_path, {"csv", "json"})}
    assert {"od_matrix.csv", "null_model_ratios.csv", "flow_edges.csv", "per_capita.csv",
            "continent_groups.json"} <= written
    od = pd.read_csv(tmp_path / "od_matrix.csv")
    assert list(od.columns) == ["origin"] + flows.od.regions
    regions, ratio = read_ratio_matrix(tmp_path / "null_model_ratios.csv")
    assert ratio == flows.null_model.ratio


def test_cell_polygon_spans_one_cell():
    cell = cell_polygon(SPEC, 0, 0)
    min_lon, min_lat, _, _ = cell.bounds
    assert (min_lat, min_lon) == pytest.approx(SPEC.anchor)
    assert cell_polygon(SPEC, 0, 1).touches(cell)


def test_hotspot_rings_are_counter_clockwise():
    spots = [
        Hotspot(rank=1, cells=[(0, 0), (0, 1), (1, 1)], activity=30, threshold_a=5),
        Hotspot(rank=2, cells=[(4, 4), (5, 5)], activity=12, threshold_a=5),
    ]
    collection = hotspots_geojson(SPEC, spots)
    assert [f["properties"]["rank"] for f in collection["features"]] == [1, 2]
    for feature in collection["features"]:
        geom = shape(feature["geometry"])
        polygons = geom.geoms if isinstance(geom, MultiPolygon) else [geom]
        assert all(p.exterior.is_ccw for p in polygons)
    assert shape(collection["features"][0]["geometry"]).geom_type == "Polygon"


def test_export_with_only_ingest(tmp_path):
    results = PipelineResults(ingest=IngestStats(), yearly=[])
    names = {p.name for p in export_outputs(results, tmp_path, ["csv"])}
    assert names == {"report.json", "yearly_activity.csv"}
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["home_coverage"] is None
    assert "od_matrix" not in report


def test_unwritable_output_is_data_error(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("")
    with pytest.raises(DataError, match="cannot write outputs"):
        export_outputs(PipelineResults(ingest=IngestStats(), yearly=[]), blocker)
