"""Geohash codec: Base32 strings over dyadic lat/lon cells.

Encoding bisects the longitude interval first and alternates axes; within
an interval the upper half [mid, hi) takes bit 1. Five bits pack into one
symbol of the standard 32-character alphabet (digits plus lowercase letters
without a, i, l, o). Length 9 is the default cell size everywhere in this
package.
"""

from __future__ import annotations

from geoseq import kernels
from geoseq.coords import BBox, LatLon

ALPHABET = "0123456789bcdefghjkmnpqrstuvwxyz"
ALPHABET_SET = frozenset(ALPHABET)
DEFAULT_LENGTH = 9
MAX_LENGTH = 12


class InvalidGeohashError(ValueError):
    """Raised for strings that fail geohash validation.

    The evaluation harness counts one error-count (EC) unit per occurrence.
    """


def encode(p: LatLon, length: int = DEFAULT_LENGTH) -> str:
    """Return the geohash of the cell containing `p` at the given precision."""
    if not isinstance(length, int) or not 1 <= length <= MAX_LENGTH:
        raise ValueError(f"geohash length must be an int in [1, {MAX_LENGTH}], got {length!r}")
    return kernels.active.geohash_encode(p.lat, p.lon, length)


def decode(geohash: str) -> BBox:
    """Return the exact dyadic cell denoted by `geohash`."""
    _check_alphabet(geohash)
    lat_min, lat_max, lon_min, lon_max = kernels.active.geohash_decode(geohash)
    return BBox(lat_min, lat_max, lon_min, lon_max)


def centroid(box: BBox) -> LatLon:
    """Arithmetic midpoint of the cell: the predicted coordinates."""
    return box.center


def decode_centroid(geohash: str) -> LatLon:
    return decode(geohash).center


def validate(text: str, expected_length: int = DEFAULT_LENGTH) -> str:
    """Canonicalize raw model output into a geohash or raise.

    ASCII spaces are stripped and letters lowercased first (trained models
    emit space-separated characters), then the alphabet and the exact
    expected length are enforced.
    """
    canonical = text.replace(" ", "").lower()
    _check_alphabet(canonical)
    if len(canonical) != expected_length:
        raise InvalidGeohashError(
            f"invalid-geohash: expected length {expected_length}, "
            f"got {len(canonical)} from {text!r}")
    return canonical


def _check_alphabet(text: str) -> None:
    if not text:
        raise InvalidGeohashError("invalid-geohash: empty string")
    if len(text) > MAX_LENGTH:
        raise InvalidGeohashError(
            f"invalid-geohash: longer than {MAX_LENGTH} characters: {text!r}")
    for c in text:
        if c not in ALPHABET_SET:
            raise InvalidGeohashError(f"invalid-geohash: character {c!r} in {text!r}")
