import numpy as np
import pandas as pd
import pytest

from errors import DataError
from models.cities import City, CityRegistry
from models.config import RestBucketRules
from models.flows import DecayPoint, FlowMarginals, ODMatrix, RankedCity
from services.flows import (
    build_od_matrix,
    build_regions,
    city_activity_breakdown,
    continent_group_strengths,
    directional_comparison,
    distance_decay_fit,
    flow_marginals,
    global_attractiveness_ranking,
    null_model_matrix,
    per_capita_rates,
    region_map,
    relative_attractiveness,
    resident_destination_breakdown,
    users_vs_photos,
)

# photos taken worldwide by each origin's residents, population in millions, per-1000 rate
ORIGIN_ACTIVITY = {
    "NYC": (1_026_199, 8.36, 122.75),
    "LON": (1_151_799, 7.81, 147.48),
    "PAR": (534_092, 2.23, 239.50),
    "SFO": (851_425, 0.81, 1051.14),
    "WAS": (525_313, 0.59, 890.36),
    "BCN": (255_038, 1.62, 157.43),
    "CHI": (412_246, 2.85, 144.65),
    "LAX": (289_810, 3.83, 75.67),
    "ROM": (126_011, 2.71, 46.50),
    "BER": (182_325, 3.43, 53.16),
    "rest_of_EU": (8_637_148, 482.61, 17.90),
    "rest_of_US": (7_347_003, 287.61, 25.55),
    "rest_of_world": (6_877_894, 5905.14, 1.16),
}


def od(a, domestic=None, regions=None):
    n = len(a)
    regions = regions or [chr(ord("A") + i) for i in range(n)]
    return ODMatrix(regions=regions, a=a, domestic=domestic or [[0] * n for _ in range(n)])


def test_marginals_exclude_loops():
    m = flow_marginals(od([[10, 6, 4], [2, 5, 3], [1, 1, 8]]))
    assert m.w_in == [13, 12, 15]
    assert m.w_out == [20, 10, 10]
    assert m.w_out_star == [10, 5, 2]
    assert m.w_in_star == [3, 7, 7]


def test_diagonal_matrix_has_zero_starred_marginals():
    m = flow_marginals(od([[4, 0], [0, 9]]))
    assert m.w_in_star == [0, 0]
    assert m.w_out_star == [0, 0]


def test_three_city_hand_example():
    null = null_model_matrix(od([[10, 6, 4], [2, 5, 3], [1, 1, 8]]))
    assert null.model[0][1] == 5.0
    assert null.ratio[0][1] == 1.2
    assert null.model[0][0] is None


def test_two_regions_ratio_is_one():
    null = null_model_matrix(od([[3, 7], [2, 1]]))
    assert null.ratio[0][1] == pytest.approx(1.0)
    assert null.ratio[1][0] == pytest.approx(1.0)


def test_model_rows_sum_to_out_flow():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(3, 14))
        a = rng.integers(0, 500, (n, n))
        matrix = od(a.tolist())
        null = null_model_matrix(matrix)
        m = flow_marginals(matrix)
        for i in range(n):
            if matrix.regions[i] in null.undefined_rows:
                continue
            row = sum(v for j, v in enumerate(null.model[i]) if j != i)
            assert row == pytest.approx(m.w_out_star[i], rel=1e-9)


@pytest.mark.parametrize("k", [2, 10, 1000])
def test_ratios_are_scale_invariant(k):
    rng = np.random.default_rng(k)
    matrix = od(rng.integers(0, 200, (6, 6)).tolist())
    base = null_model_matrix(matrix)
    scaled = null_model_matrix(matrix.scaled(k))
    for i in range(6):
        for j in range(6):
            if base.ratio[i][j] is None:
                assert scaled.ratio[i][j] is None
            else:
                assert scaled.ratio[i][j] == pytest.approx(base.ratio[i][j], rel=1e-12)


def test_isolated_origin_row_undefined():
    null = null_model_matrix(od([[3, 0, 0], [0, 2, 1], [0, 1, 4]]))
    assert null.undefined_rows == []
    null = null_model_matrix(od([[3, 2, 0], [0, 2, 0], [0, 0, 4]]))
    assert null.undefined_rows == ["B"]
    assert null.ratio[1] == [None, None, None]


def test_zero_model_gives_no_ratio():
    null = null_model_matrix(od([[1, 2, 0], [3, 1, 0], [4, 5, 1]]))
    assert null.model[0][2] == 0.0
    assert null.ratio[0][2] is None


def test_null_model_needs_two_regions():
    with pytest.raises(DataError):
        null_model_matrix(od([[4]]))


def test_per_capita_rates_for_known_origins():
    regions = list(ORIGIN_ACTIVITY)
    marginals = FlowMarginals(
        regions=regions,
        w_in=[0] * len(regions),
        w_out=[ORIGIN_ACTIVITY[r][0] for r in regions],
        w_in_star=[0] * len(regions),
        w_out_star=[0] * len(regions),
    )
    populations = {r: ORIGIN_ACTIVITY[r][1] * 1e6 for r in regions}
    rates = {p.region_id: p.per_1000 for p in per_capita_rates(marginals, populations)}
    for region, (_, _, expected) in ORIGIN_ACTIVITY.items():
        assert rates[region] == pytest.approx(expected, rel=0.005)


def test_zero_population_rejected():
    marginals = FlowMarginals(regions=["A"], w_in=[0], w_out=[3], w_in_star=[0], w_out_star=[0])
    with pytest.raises(DataError):
        per_capita_rates(marginals, {"A": 0.0})


def test_zero_outflow_rate_is_zero():
    marginals = FlowMarginals(regions=["A"], w_in=[0], w_out=[0], w_in_star=[0], w_out_star=[0])
    assert per_capita_rates(marginals, {"A": 1000.0})[0].per_1000 == 0.0


def _photos(rows):
    return pd.DataFrame(rows, columns=["photo_id", "user_id", "city_id", "home_city_id", "home_country",
                                       "city_country", "category"])


def _flow_frame():
    return _photos([
        ("p1", "u1", "NYC", "NYC", "US", "US", "resident"),
        ("p2", "u1", "SFO", "NYC", "US", "US", "domestic_tourist"),
        ("p3", "u1", "LON", "NYC", "US", "GB", "foreign_tourist"),
        ("p4", "u2", "LON", "LON", "GB", "GB", "resident"),
        ("p5", "u2", "NYC", "LON", "GB", "US", "foreign_tourist"),
        ("p6", "u3", "NYC", None, None, "US", "unknown_home"),
    ])


def test_od_matrix_from_categorized_photos(registry):
    frame = _flow_frame()
    mapping = {"NYC": "NYC", "SFO": "SFO", "LON": "LON"}
    matrix = build_od_matrix(frame, mapping, ["NYC", "SFO", "LON"])
    assert matrix.a == [[1, 1, 1], [0, 0, 0], [1, 0, 1]]
    assert matrix.domestic == [[1, 1, 0], [0, 0, 0], [0, 0, 1]]


def test_ranking_and_region_map(registry):
    ranking = global_attractiveness_ranking(_flow_frame())
    assert [r.city_id for r in ranking] == ["LON", "NYC", "SFO"]
    mapping = region_map(registry, ranking, top_n=1, with_rest=True)
    assert mapping == {"LON": "LON", "NYC": "rest_of_US", "SFO": "rest_of_US"}
    regions = build_regions(registry, mapping, ranking)
    assert [(r.region_id, r.kind) for r in regions] == [("LON", "city"), ("rest_of_US", "rest")]
    assert region_map(registry, ranking, top_n=1, with_rest=False) == {"LON": "LON"}


def test_rest_fallback_bucket():
    cities = [City(city_id="TYO", name="Tokyo", country_code="JP", continent="Asia", population=9e6,
                   centroid=(35.68, 139.69), bbox=(35.5, 139.5, 35.9, 139.9))]
    mapping = region_map(CityRegistry(cities), [RankedCity(city_id="TYO", tourist_photos=1, domestic_photos=0,
                                                           foreign_photos=1)], top_n=0, with_rest=True,
                         rules=RestBucketRules())
    assert mapping == {"TYO": "rest_of_world"}


def test_attractiveness_and_breakdowns(registry):
    frame = _flow_frame()
    matrix = build_od_matrix(frame, {"NYC": "NYC", "SFO": "SFO", "LON": "LON"}, ["NYC", "SFO", "LON"])
    nyc = relative_attractiveness(matrix, registry, "NYC")
    assert (nyc.domestic_photos, nyc.foreign_photos) == (0, 1)
    assert nyc.foreign_per_capita == pytest.approx(1 / 8_000_000)

    breakdown = city_activity_breakdown(frame, "NYC")
    assert breakdown.resident == pytest.approx(0.5)
    assert breakdown.foreign_tourist == pytest.approx(0.5)
    assert breakdown.unknown_home_photos == 1

    residents = resident_destination_breakdown(matrix, "NYC")
    assert (residents.home, residents.domestic, residents.foreign) == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    assert resident_destination_breakdown(matrix, "SFO").home is None


def test_city_without_classified_photos_is_undefined():
    frame = _photos([("p1", "u3", "NYC", None, None, "US", "unknown_home")])
    assert city_activity_breakdown(frame, "NYC").resident is None


def test_distance_decay_fit_recovers_exponential():
    points = [DecayPoint(origin="A", destination=f"B{k}", distance_km=d, ratio=3.0 * np.exp(-d / 4000))
              for k, d in enumerate([500.0, 1500.0, 4000.0, 6000.0, 9000.0])]
    fit, with_residuals = distance_decay_fit(points)
    assert fit["beta"] == pytest.approx(2.5e-4, rel=1e-9)
    assert all(abs(p.residual) < 1e-9 for p in with_residuals)


def test_directional_group_comparison(registry):
    regions = build_regions(registry, {"NYC": "NYC", "SFO": "SFO", "LON": "LON"},
                            [RankedCity(city_id=c, tourist_photos=0, domestic_photos=0, foreign_photos=0)
                             for c in ("NYC", "SFO", "LON")])
    null = null_model_matrix(od([[0, 1, 40], [1, 0, 30], [5, 5, 0]], regions=["NYC", "SFO", "LON"]))
    groups = continent_group_strengths(null, regions)
    comparison = directional_comparison(groups, "North America", "Europe")
    assert comparison.a_to_b > comparison.b_to_a
    assert comparison.stronger == "North America->Europe"


def test_users_vs_photos_linear():
    rows = []
    for k, city in enumerate(["A", "B", "C", "D"]):
        for u in range(k + 1):
            for p in range(10):
                rows.append((f"{city}{u}{p}", f"{city}{u}", city, city, "US", "US", "resident"))
    points, fit = users_vs_photos(_photos(rows), {c: c for c in "ABCD"})
    assert [(p.region_id, p.users, p.photos) for p in points] == [("A", 1, 10), ("B", 2, 20), ("C", 3, 30),
                                                                   ("D", 4, 40)]
    assert fit.goodness == pytest.approx(1.0)
