from datetime import datetime
from enum import Enum
from typing import Optional

from pydantic import BaseModel, root_validator


class ActivityCategory(str, Enum):
    resident = "resident"
    domestic_tourist = "domestic_tourist"
    foreign_tourist = "foreign_tourist"
    unknown_home = "unknown_home"


class UserCityActivity(BaseModel):
    user_id: str
    city_id: str
    photo_count: int
    first_at: datetime
    last_at: datetime

    class Config:
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def _ordered(cls, values):
        if values["photo_count"] < 1:
            raise ValueError("photo_count must be at least 1")
        if values["last_at"] < values["first_at"]:
            raise ValueError("last_at precedes first_at")
        return values

    @property
    def span_days(self) -> float:
        return (self.last_at - self.first_at).total_seconds() / 86400.0


class HomeAssignment(BaseModel):
    user_id: str
    home_city_id: Optional[str] = None
    home_country: Optional[str] = None
    evidence: Optional[UserCityActivity] = None

    class Config:
        allow_mutation = False

    @property
    def has_home(self) -> bool:
        return self.home_city_id is not None


class HomeCoverage(BaseModel):
    users: int
    homed_users: int
    photos: int
    homed_photos: int

    @property
    def user_share(self) -> float:
        return self.homed_users / self.users if self.users else 0.0

    @property
    def photo_share(self) -> float:
        return self.homed_photos / self.photos if self.photos else 0.0


class LabelConsistency(BaseModel):
    checked_users: int
    contradicting_users: int

    @property
    def contradiction_rate(self) -> Optional[float]:
        if not self.checked_users:
            return None
        return self.contradicting_users / self.checked_users
