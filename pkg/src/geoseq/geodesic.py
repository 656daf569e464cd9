"""WGS-84 geodesic solver (Vincenty iterations).

`inverse_distance` backs the distance-deviation reward and every evaluation
metric; `forward` realizes the anchor-offset label shifts on the ellipsoid.
Accuracy contract: <= 1 mm for non-antipodal pairs. Near-antipodal inverse
inputs, where the lambda iteration diverges, fall back to a mean-sphere
great circle and are flagged `converged=False`; they only arise on the
already-saturated penalty path of the reward.
"""

from __future__ import annotations

from typing import NamedTuple

from geoseq import kernels
from geoseq.coords import LatLon, wrap_bearing

WGS84_SEMI_MAJOR_M = 6378137.0
WGS84_INVERSE_FLATTENING = 298.257223563
WGS84_FLATTENING = 1.0 / WGS84_INVERSE_FLATTENING
WGS84_SEMI_MINOR_M = WGS84_SEMI_MAJOR_M * (1.0 - WGS84_FLATTENING)


class InverseResult(NamedTuple):
    distance_m: float
    azimuth_deg: float  # initial bearing at the first point, [0, 360)
    converged: bool


def inverse(a: LatLon, b: LatLon) -> InverseResult:
    """Solve the inverse problem: geodesic distance and initial azimuth.

    The endpoints are ordered canonically before the solve, so the distance
    is exactly symmetric in its arguments; the azimuth at `a` comes from
    either the departure bearing or the reversed arrival bearing.
    """
    if (b.lat, b.lon) < (a.lat, a.lon):
        distance, _, azimuth2, converged = kernels.active.vincenty_inverse(
            b.lat, b.lon, a.lat, a.lon)
        azimuth = wrap_bearing(azimuth2 + 180.0)
    else:
        distance, azimuth, _, converged = kernels.active.vincenty_inverse(
            a.lat, a.lon, b.lat, b.lon)
    return InverseResult(distance, azimuth, bool(converged))


def inverse_distance(a: LatLon, b: LatLon) -> float:
    """Geodesic distance in meters on the WGS-84 ellipsoid."""
    return inverse(a, b).distance_m


def forward(start: LatLon, azimuth_deg: float, distance_m: float) -> LatLon:
    """Solve the direct problem: destination `distance_m` along `azimuth_deg`."""
    if distance_m < 0.0:
        raise ValueError(f"distance must be >= 0, got {distance_m}")
    lat, lon = kernels.active.vincenty_forward(
        start.lat, start.lon, wrap_bearing(azimuth_deg), distance_m)
    return LatLon(lat, lon)
