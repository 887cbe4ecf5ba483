from datetime import datetime, timezone
from enum import Enum

from pydantic import BaseModel, validator


class SourceLabel(str, Enum):
    resident = "resident"
    tourist = "tourist"
    unknown = "unknown"


class PhotoRecord(BaseModel):
    photo_id: str
    user_id: str
    taken_at: datetime
    lat: float
    lon: float
    location_id: str
    source_label: SourceLabel = SourceLabel.unknown

    class Config:
        allow_mutation = False

    @validator("lat")
    def _lat_range(cls, v):
        if not -90.0 <= v <= 90.0:
            raise ValueError(f"latitude {v} outside [-90, 90]")
        return v

    @validator("lon")
    def _lon_range(cls, v):
        if not -180.0 <= v <= 180.0:
            raise ValueError(f"longitude {v} outside [-180, 180]")
        return v

    @validator("taken_at")
    def _utc(cls, v: datetime):
        # naive timestamps in the dumps are UTC already
        if v.tzinfo is None:
            return v.replace(tzinfo=timezone.utc)
        return v.astimezone(timezone.utc)

    def dedup_key(self) -> tuple:
        if self.photo_id:
            return ("id", self.photo_id)
        return ("q", self.user_id, self.taken_at, self.lat, self.lon)


class ParseErrorKind(str, Enum):
    malformed = "malformed"
    bad_timestamp = "bad_timestamp"
    bad_coordinates = "bad_coordinates"


class ParseError(BaseModel):
    kind: ParseErrorKind
    line_no: int
    location_id: str
    message: str


class IngestStats(BaseModel):
    """Cleaning bookkeeping for one ingest run.

    ``records_read`` counts rows that were structurally valid with in-range
    coordinates; malformed rows and bad coordinates are tallied separately and
    sit outside the balance equation.
    """

    records_read: int = 0
    duplicates_removed: int = 0
    bad_timestamps_removed: int = 0
    out_of_window_removed: int = 0
    records_kept: int = 0
    malformed_rows: int = 0
    bad_coordinates: int = 0
    files_read: int = 0

    def balanced(self) -> bool:
        return self.records_kept == (
            self.records_read
            - self.duplicates_removed
            - self.bad_timestamps_removed
            - self.out_of_window_removed
        )


class YearlyActivity(BaseModel):
    year: int
    photos: int
    users: int
