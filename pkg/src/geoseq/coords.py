"""Geodetic coordinate primitives shared by the codec and the geodesic solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

# Latitudes this far past +/-90 are treated as rounding noise and clamped.
_LAT_SLACK = 1e-9


def wrap_lon(lon: float) -> float:
    """Normalize a longitude into the half-open interval [-180, 180)."""
    if -180.0 <= lon < 180.0:
        return lon
    lon = math.fmod(lon + 180.0, 360.0)
    if lon < 0.0:
        lon += 360.0
    return lon - 180.0


def wrap_bearing(azimuth: float) -> float:
    """Normalize an azimuth (degrees clockwise from north) into [0, 360)."""
    az = math.fmod(azimuth, 360.0)
    if az < 0.0:
        az += 360.0
    return az if az < 360.0 else 0.0


@dataclass(frozen=True)
class LatLon:
    """A point on the WGS-84 ellipsoid, in degrees.

    Latitude is kept in the closed interval [-90, 90]; longitude is stored
    normalized to [-180, 180), so +180 becomes -180.
    """

    lat: float
    lon: float

    def __post_init__(self):
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"coordinates must be finite, got ({self.lat}, {self.lon})")
        if abs(lat) > 90.0:
            if abs(lat) > 90.0 + _LAT_SLACK:
                raise ValueError(f"latitude out of range [-90, 90]: {lat}")
            lat = math.copysign(90.0, lat)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", wrap_lon(lon))


@dataclass(frozen=True)
class BBox:
    """An axis-aligned lat/lon box; geohash cells decode to one of these."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError(f"degenerate bbox: {self}")

    def contains(self, p: LatLon) -> bool:
        return (self.lat_min <= p.lat <= self.lat_max
                and self.lon_min <= p.lon <= self.lon_max)

    @property
    def center(self) -> LatLon:
        return LatLon((self.lat_min + self.lat_max) / 2.0,
                      (self.lon_min + self.lon_max) / 2.0)
