"""Home-city inference and resident/tourist classification.

A user lives where they took the most photos (at least ``min_photos``) over a
first-to-last span strictly longer than ``min_span_days``; once homed they are
a tourist everywhere else, domestic or foreign by country.
"""
from typing import Dict, Iterable, List, Optional

import pandas as pd
from loguru import logger

from models.cities import CityRegistry
from models.homes import (
    ActivityCategory,
    HomeAssignment,
    HomeCoverage,
    LabelConsistency,
    UserCityActivity,
)
from models.photos import PhotoRecord, SourceLabel

DEFAULT_MIN_PHOTOS = 10
DEFAULT_MIN_SPAN_DAYS = 180.0


def summarize_user_city_activity(frame: pd.DataFrame) -> List[UserCityActivity]:
    """One summary per (user, city) over records with a resolved city."""
    located = frame[frame["city_id"].notna()]
    if located.empty:
        return []
    grouped = (
        located.groupby(["user_id", "city_id"], sort=True)["taken_at"]
        .agg(["count", "min", "max"])
        .reset_index()
    )
    return [
        UserCityActivity(
            user_id=row.user_id,
            city_id=row.city_id,
            photo_count=int(row.count),
            first_at=row.min.to_pydatetime(),
            last_at=row.max.to_pydatetime(),
        )
        for row in grouped.itertuples(index=False)
    ]


def infer_home(
    summaries: Iterable[UserCityActivity],
    min_photos: int = DEFAULT_MIN_PHOTOS,
    min_span_days: float = DEFAULT_MIN_SPAN_DAYS,
    registry: Optional[CityRegistry] = None,
    user_id: Optional[str] = None,
) -> HomeAssignment:
    summaries = list(summaries)
    if user_id is None:
        if not summaries:
            raise ValueError("user_id is required when there are no summaries")
        user_id = summaries[0].user_id
    if any(s.user_id != user_id for s in summaries):
        raise ValueError(f"summaries mix users; expected only {user_id!r}")

    eligible = [s for s in summaries if s.photo_count >= min_photos and s.span_days > min_span_days]
    if not eligible:
        return HomeAssignment(user_id=user_id)
    # most photos, then longest span, then smallest city_id
    best = min(eligible, key=lambda s: (-s.photo_count, -s.span_days, s.city_id))
    country = registry[best.city_id].country_code if registry is not None and best.city_id in registry else None
    return HomeAssignment(user_id=user_id, home_city_id=best.city_id, home_country=country, evidence=best)


def infer_homes(
    summaries: Iterable[UserCityActivity],
    registry: Optional[CityRegistry] = None,
    min_photos: int = DEFAULT_MIN_PHOTOS,
    min_span_days: float = DEFAULT_MIN_SPAN_DAYS,
) -> Dict[str, HomeAssignment]:
    by_user: Dict[str, List[UserCityActivity]] = {}
    for s in summaries:
        by_user.setdefault(s.user_id, []).append(s)
    homes = {
        user_id: infer_home(items, min_photos, min_span_days, registry, user_id)
        for user_id, items in sorted(by_user.items())
    }
    homed = sum(1 for h in homes.values() if h.has_home)
    logger.info("homes: {} of {} users have an inferred home city", homed, len(homes))
    return homes


def categorize_photo(
    record: PhotoRecord,
    city_id: str,
    home: Optional[HomeAssignment],
    registry: CityRegistry,
) -> ActivityCategory:
    """Classify one located photo against its author's home assignment."""
    if home is None or not home.has_home:
        return ActivityCategory.unknown_home
    if city_id == home.home_city_id:
        return ActivityCategory.resident
    if registry[city_id].country_code == home.home_country:
        return ActivityCategory.domestic_tourist
    return ActivityCategory.foreign_tourist


def homes_frame(homes: Dict[str, HomeAssignment]) -> pd.DataFrame:
    rows = [
        {
            "user_id": h.user_id,
            "home_city_id": h.home_city_id,
            "home_country": h.home_country,
            "photo_count": h.evidence.photo_count if h.evidence else None,
            "span_days": h.evidence.span_days if h.evidence else None,
        }
        for h in homes.values()
    ]
    columns = ["user_id", "home_city_id", "home_country", "photo_count", "span_days"]
    return pd.DataFrame(rows, columns=columns).sort_values("user_id", kind="stable").reset_index(drop=True)


def categorize_frame(frame: pd.DataFrame, homes: Dict[str, HomeAssignment], registry: CityRegistry) -> pd.DataFrame:
    """Add ``home_city_id``, ``home_country``, ``city_country`` and ``category`` columns.

    Rows without a resolved city keep category None; they are outside every
    city-level analysis.
    """
    out = frame.copy()
    home_city = {u: h.home_city_id for u, h in homes.items() if h.has_home}
    home_country = {u: h.home_country for u, h in homes.items() if h.has_home}
    country = {c.city_id: c.country_code for c in registry.cities}
    out["home_city_id"] = out["user_id"].map(home_city)
    out["home_country"] = out["user_id"].map(home_country)
    out["city_country"] = out["city_id"].map(country)

    located = out["city_id"].notna()
    homed = out["home_city_id"].notna()
    category = pd.Series(None, index=out.index, dtype=object)
    category.loc[located & ~homed] = ActivityCategory.unknown_home.value
    category.loc[located & homed & (out["city_id"] == out["home_city_id"])] = ActivityCategory.resident.value
    away = located & homed & (out["city_id"] != out["home_city_id"])
    category.loc[away & (out["city_country"] == out["home_country"])] = ActivityCategory.domestic_tourist.value
    category.loc[away & (out["city_country"] != out["home_country"])] = ActivityCategory.foreign_tourist.value
    out["category"] = category
    return out


def home_coverage(frame: pd.DataFrame, homes: Dict[str, HomeAssignment]) -> HomeCoverage:
    homed_users = {u for u, h in homes.items() if h.has_home}
    return HomeCoverage(
        users=int(frame["user_id"].nunique()),
        homed_users=len(homed_users),
        photos=len(frame),
        homed_photos=int(frame["user_id"].isin(homed_users).sum()),
    )


def label_consistency(
    frame: pd.DataFrame, homes: Dict[str, HomeAssignment]
) -> LabelConsistency:
    """Compare inferred homes with the dump's own resident files.

    Checked users appear in exactly one resident-labelled location, which
    resolves to a city, and have an inferred home; they contradict when the two
    cities differ.
    """
    resident = frame[(frame["source_label"] == SourceLabel.resident.value) & frame["city_id"].notna()]
    per_user = resident.groupby("user_id").agg(
        locations=("location_id", "nunique"), city_id=("city_id", "first")
    )
    single = per_user[per_user["locations"] == 1]
    checked = contradicting = 0
    for user_id, row in single.iterrows():
        home = homes.get(user_id)
        if home is None or not home.has_home:
            continue
        checked += 1
        if home.home_city_id != row["city_id"]:
            contradicting += 1
    result = LabelConsistency(checked_users=checked, contradicting_users=contradicting)
    logger.info("homes: {} of {} resident-file users contradict their inferred home", contradicting, checked)
    return result
