"""Synthetic POI data and the two training-sample classes.

Base samples pair a POI's textual sources (name, address, optionally a
noised search query) with its coordinates; anchor-offset samples prepend
"{distance} meters {direction} of" to the text and shift the label by the
same distance along the named direction on the ellipsoid. A procedural
street-grid city stands in for proprietary map logs, and samples serialize
to JSONL with the fields id, input, output, lat, lon, kind, split,
thinking, offset_meta.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from geoseq import geodesic, geohash
from geoseq.coords import BBox, LatLon

CARDINAL_AZIMUTHS = {"north": 0.0, "east": 90.0, "south": 180.0, "west": 270.0}
INTERCARDINAL_AZIMUTHS = {"northeast": 45.0, "southeast": 135.0,
                          "southwest": 225.0, "northwest": 315.0}
DIRECTION_SETS = {
    "cardinal": CARDINAL_AZIMUTHS,
    "intercardinal": INTERCARDINAL_AZIMUTHS,
    "both": {**CARDINAL_AZIMUTHS, **INTERCARDINAL_AZIMUTHS},
}

# compass rose used when rounding a neighbor bearing to words
_EIGHT_WAY = ["north", "northeast", "east", "southeast",
              "south", "southwest", "west", "northwest"]

_METERS_PER_DEG_LAT = 111320.0

BASE_SOURCES = ("name", "address", "query")
DEFAULT_SOURCES = ("name", "address")
QUERY_NOISE_PROB = 0.05


@dataclass
class Poi:
    id: str
    name: str
    address: str
    location: LatLon


@dataclass
class OffsetMeta:
    direction: str
    distance_m: float
    anchor: LatLon


@dataclass
class Sample:
    id: str
    input: str
    target_geohash: str
    target: LatLon
    kind: str  # "base" | "anchor_offset"
    split: str | None = None  # "train" | "test"
    thinking: str | None = None
    offset_meta: OffsetMeta | None = None

    @property
    def anchor_location(self) -> LatLon:
        """The POI location this sample is anchored to (for split coverage)."""
        return self.offset_meta.anchor if self.offset_meta else self.target

    def to_record(self) -> dict:
        meta = None
        if self.offset_meta:
            meta = {"direction": self.offset_meta.direction,
                    "distance_m": self.offset_meta.distance_m,
                    "anchor": {"lat": self.offset_meta.anchor.lat,
                               "lon": self.offset_meta.anchor.lon}}
        return {"id": self.id, "input": self.input, "output": self.target_geohash,
                "lat": self.target.lat, "lon": self.target.lon, "kind": self.kind,
                "split": self.split, "thinking": self.thinking, "offset_meta": meta}

    @classmethod
    def from_record(cls, record: dict) -> "Sample":
        meta = record.get("offset_meta")
        offset_meta = None
        if meta is not None:
            offset_meta = OffsetMeta(meta["direction"], meta["distance_m"],
                                     LatLon(meta["anchor"]["lat"], meta["anchor"]["lon"]))
        return cls(id=record["id"], input=record["input"],
                   target_geohash=record["output"],
                   target=LatLon(record["lat"], record["lon"]),
                   kind=record["kind"], split=record.get("split"),
                   thinking=record.get("thinking"), offset_meta=offset_meta)


# --------------------------------------------------------------------------
# synthetic city

_STREETS = ["Ash", "Birch", "Cedar", "Dogwood", "Elm", "Fir", "Ginkgo",
            "Hawthorn", "Juniper", "Laurel", "Magnolia", "Oak", "Pine",
            "Rowan", "Spruce", "Walnut", "Willow", "Alder", "Beech",
            "Chestnut", "Hazel", "Linden", "Maple", "Poplar"]
_DISTRICTS = ["Harbor", "Lakeside", "Meadow", "Summit"]
_NAME_ADJ = ["Golden", "Silver", "Jade", "Lucky", "Sunny", "Grand", "Royal",
             "Quiet", "Bright", "Happy", "Blue", "Green", "Amber", "Noble",
             "Swift", "Gentle"]
_NAME_CORE = ["Lotus", "Dragon", "Phoenix", "Harbor", "Garden", "Star",
              "River", "Cloud", "Crane", "Tiger", "Moon", "Pearl", "Stone",
              "Breeze", "Spring", "Valley"]
_NAME_KIND = ["Restaurant", "Hotel", "Teahouse", "Market", "Bakery",
              "Bookstore", "Pharmacy", "Cinema", "Gym", "Clinic", "Cafe",
              "Studio"]


def synth_city(n_pois: int, bbox: BBox, rng: np.random.Generator) -> list[Poi]:
    """Procedural POIs on a jittered street grid inside `bbox`."""
    if n_pois < 1:
        raise ValueError(f"n_pois must be >= 1, got {n_pois}")
    lat_margin = 0.02 * (bbox.lat_max - bbox.lat_min)
    lon_margin = 0.02 * (bbox.lon_max - bbox.lon_min)
    lat_lo, lat_hi = bbox.lat_min + lat_margin, bbox.lat_max - lat_margin
    lon_lo, lon_hi = bbox.lon_min + lon_margin, bbox.lon_max - lon_margin
    mid_lat = (bbox.lat_min + bbox.lat_max) / 2.0
    meters_per_deg_lon = _METERS_PER_DEG_LAT * math.cos(math.radians(mid_lat))

    n_streets = max(3, int(round(math.sqrt(n_pois))))
    street_names = _unique_names(_STREETS, 2 * n_streets, rng)
    # east-west streets run at fixed latitudes, north-south at fixed longitudes
    ew_lats = np.linspace(lat_lo, lat_hi, n_streets)
    ns_lons = np.linspace(lon_lo, lon_hi, n_streets)

    name_pool = _business_names(n_pois, rng)
    jitter_deg_lat = 12.0 / _METERS_PER_DEG_LAT
    jitter_deg_lon = 12.0 / meters_per_deg_lon

    pois = []
    for k in range(n_pois):
        street_idx = int(rng.integers(0, 2 * n_streets))
        if street_idx < n_streets:  # east-west
            lat = float(ew_lats[street_idx] + rng.uniform(-jitter_deg_lat, jitter_deg_lat))
            lon = float(rng.uniform(lon_lo, lon_hi))
            along_m = (lon - lon_lo) * meters_per_deg_lon
        else:  # north-south
            lon = float(ns_lons[street_idx - n_streets] + rng.uniform(-jitter_deg_lon, jitter_deg_lon))
            lat = float(rng.uniform(lat_lo, lat_hi))
            along_m = (lat - lat_lo) * _METERS_PER_DEG_LAT
        lat = min(max(lat, bbox.lat_min), bbox.lat_max)
        lon = min(max(lon, bbox.lon_min), bbox.lon_max)
        number = 1 + int(along_m / 15.0)
        district = _DISTRICTS[(lat > mid_lat) * 2 + (lon > (bbox.lon_min + bbox.lon_max) / 2.0)]
        pois.append(Poi(
            id=f"poi-{k:05d}",
            name=name_pool[k],
            address=f"No.{number} {street_names[street_idx]} Road, {district} District",
            location=LatLon(lat, lon),
        ))
    return pois


def _unique_names(base: Sequence[str], count: int, rng: np.random.Generator) -> list[str]:
    order = [base[i] for i in rng.permutation(len(base))]
    names = []
    round_no = 0
    while len(names) < count:
        for name in order:
            suffix = "" if round_no == 0 else f" {round_no + 1}"
            names.append(name + suffix)
            if len(names) == count:
                break
        round_no += 1
    return names


def _business_names(count: int, rng: np.random.Generator) -> list[str]:
    combos = len(_NAME_ADJ) * len(_NAME_CORE) * len(_NAME_KIND)
    picks = rng.permutation(combos)
    names = []
    for i in range(count):
        idx = int(picks[i % combos])
        adj = _NAME_ADJ[idx // (len(_NAME_CORE) * len(_NAME_KIND))]
        core = _NAME_CORE[(idx // len(_NAME_KIND)) % len(_NAME_CORE)]
        kind = _NAME_KIND[idx % len(_NAME_KIND)]
        suffix = "" if i < combos else f" {i // combos + 1}"
        names.append(f"{adj} {core} {kind}{suffix}")
    return names


# --------------------------------------------------------------------------
# sample builders

def _source_text(poi: Poi, source: str, rng: np.random.Generator | None) -> str:
    if source == "name":
        return poi.name
    if source == "address":
        return poi.address
    if source == "query":
        if rng is None:
            raise ValueError("the 'query' source needs an rng for its noise")
        return _noisy(poi.name, rng)
    raise ValueError(f"unknown textual source {source!r}; choices: {BASE_SOURCES}")


def _noisy(text: str, rng: np.random.Generator) -> str:
    """Character-level drop/swap noise emulating colloquial search queries."""
    chars = [c for c in text if rng.random() >= QUERY_NOISE_PROB]
    i = 0
    while i < len(chars) - 1:
        if rng.random() < QUERY_NOISE_PROB:
            chars[i], chars[i + 1] = chars[i + 1], chars[i]
            i += 2
        else:
            i += 1
    return "".join(chars) or text


def build_base(pois: Sequence[Poi], sources: Sequence[str] = DEFAULT_SOURCES,
               rng: np.random.Generator | None = None,
               geohash_length: int = geohash.DEFAULT_LENGTH) -> list[Sample]:
    """One sample per POI per enabled textual source, targeting the POI."""
    if not pois:
        raise ValueError("empty POI list")
    samples = []
    for poi in pois:
        for source in sources:
            samples.append(Sample(
                id=f"{poi.id}/base/{source}",
                input=_source_text(poi, source, rng),
                target_geohash=geohash.encode(poi.location, geohash_length),
                target=poi.location,
                kind="base",
            ))
    return samples


def build_anchor_offset(pois: Sequence[Poi], directions: str = "cardinal",
                        dist_min: float = 30.0, dist_max: float = 500.0,
                        rng: np.random.Generator | int = 0,
                        sources: Sequence[str] = DEFAULT_SOURCES,
                        geohash_length: int = geohash.DEFAULT_LENGTH) -> list[Sample]:
    """Shifted-label samples: "{d} meters {direction} of {base text}".

    The distance is drawn uniformly from [dist_min, dist_max] and rounded to
    whole meters so the text and the geometry agree exactly; the label is
    the ellipsoidal destination that far from the POI along the direction's
    azimuth ("d meters north of X" lies north of X).
    """
    if not pois:
        raise ValueError("empty POI list")
    if not dist_min < dist_max:
        raise ValueError(f"need dist_min < dist_max, got [{dist_min}, {dist_max}]")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    direction_names = sorted(DIRECTION_SETS[directions])
    samples = []
    for poi in pois:
        for source in sources:
            direction = direction_names[int(rng.integers(0, len(direction_names)))]
            distance = float(round(rng.uniform(dist_min, dist_max)))
            target = geodesic.forward(poi.location, DIRECTION_SETS[directions][direction],
                                      distance)
            base_text = _source_text(poi, source, rng)
            samples.append(Sample(
                id=f"{poi.id}/offset/{source}",
                input=f"{int(distance)} meters {direction} of {base_text}",
                target_geohash=geohash.encode(target, geohash_length),
                target=target,
                kind="anchor_offset",
                offset_meta=OffsetMeta(direction, distance, poi.location),
            ))
    return samples


# --------------------------------------------------------------------------
# chain-of-thought serialization

THINKING_OPEN = "<thinking>"
THINKING_CLOSE = "</thinking>"


def bearing_to_word(azimuth_deg: float) -> str:
    """Round an azimuth to the nearest of the eight compass directions."""
    return _EIGHT_WAY[int(round(azimuth_deg / 45.0)) % 8]


def neighbor_sentence(target: LatLon, neighbor: Poi) -> str:
    """Relative-position sentence locating `target` from a neighboring POI."""
    result = geodesic.inverse(neighbor.location, target)
    return (f"{round(result.distance_m)} meters "
            f"{bearing_to_word(result.azimuth_deg)} of {neighbor.address}")


def attach_thinking(samples: Iterable[Sample], pois: Sequence[Poi]) -> None:
    """Fill base samples' thinking field with a nearest-neighbor sentence.

    Offset samples keep the direct query->geohash format. With fewer than
    two POIs there is no neighbor and the field stays empty.
    """
    nearest = _nearest_other_poi(pois)
    by_id = {poi.id: poi for poi in pois}
    for sample in samples:
        if sample.kind != "base":
            continue
        poi_id = sample.id.rsplit("/", 2)[0]
        neighbor = nearest.get(poi_id)
        if neighbor is not None and poi_id in by_id:
            sample.thinking = neighbor_sentence(by_id[poi_id].location, neighbor)


def _nearest_other_poi(pois: Sequence[Poi]) -> dict[str, Poi]:
    """Nearest neighbor per POI by local planar approximation."""
    if len(pois) < 2:
        return {}
    lats = np.array([p.location.lat for p in pois])
    lons = np.array([p.location.lon for p in pois])
    mid = math.radians(float(lats.mean()))
    ys = lats * _METERS_PER_DEG_LAT
    xs = lons * _METERS_PER_DEG_LAT * math.cos(mid)
    out = {}
    for i in range(len(pois)):
        d2 = (ys - ys[i]) ** 2 + (xs - xs[i]) ** 2
        d2[i] = math.inf
        out[pois[i].id] = pois[int(np.argmin(d2))]
    return out


def format_cot(sample: Sample, neighbor_text: str | None = None) -> dict:
    """Render a sample as a thinking-tagged SFT record.

    The input ends with the literal opening tag; the output carries the
    reasoning sentence, the closing tag, then the space-separated geohash.
    Without a neighbor sentence the plain format is emitted.
    """
    spaced = " ".join(sample.target_geohash)
    if neighbor_text is None:
        neighbor_text = sample.thinking
    if not neighbor_text:
        return {"input": sample.input, "output": spaced}
    return {"input": f"{sample.input} {THINKING_OPEN}",
            "output": f"{neighbor_text} {THINKING_CLOSE} {spaced}"}


# --------------------------------------------------------------------------
# splitting

def split_dataset(samples: Sequence[Sample], train_fraction: float,
                  rng: np.random.Generator | int = 0,
                  coverage_radius_m: float = 500.0) -> tuple[list[Sample], list[Sample]]:
    """Shuffled split that keeps every test location near a training one.

    After the seeded shuffle, any test sample whose anchor location has no
    training anchor within `coverage_radius_m` (geodesic) is reassigned to
    the training side. Sets each sample's `split` field and returns
    (train, test) in the input order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    n = len(samples)
    order = rng.permutation(n)
    n_train = int(n * train_fraction)
    train_idx = set(int(i) for i in order[:n_train])

    ys = np.array([s.anchor_location.lat * _METERS_PER_DEG_LAT for s in samples])
    mid = math.radians(float(np.mean([s.anchor_location.lat for s in samples])))
    xs = np.array([s.anchor_location.lon * _METERS_PER_DEG_LAT * math.cos(mid)
                   for s in samples])

    for i in range(n):
        if i in train_idx:
            continue
        train_list = np.fromiter(train_idx, dtype=np.int64)
        d2 = (ys[train_list] - ys[i]) ** 2 + (xs[train_list] - xs[i]) ** 2
        # confirm the few planar-nearest candidates geodesically
        covered = False
        for j in np.argsort(d2)[:5]:
            cand = samples[int(train_list[j])]
            if geodesic.inverse_distance(samples[i].anchor_location,
                                         cand.anchor_location) <= coverage_radius_m:
                covered = True
                break
        if not covered:
            train_idx.add(i)

    train, test = [], []
    for i, sample in enumerate(samples):
        if i in train_idx:
            sample.split = "train"
            train.append(sample)
        else:
            sample.split = "test"
            test.append(sample)
    return train, test


# --------------------------------------------------------------------------
# JSONL I/O

def write_jsonl(path: str | Path, samples: Iterable[Sample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_record(), ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[Sample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(Sample.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed sample at line {lineno}: {exc}") from exc
    return samples


def write_pois(path: str | Path, pois: Iterable[Poi]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for poi in pois:
            fh.write(json.dumps({"id": poi.id, "name": poi.name, "address": poi.address,
                                 "lat": poi.location.lat, "lon": poi.location.lon},
                                ensure_ascii=False) + "\n")


def read_pois(path: str | Path) -> list[Poi]:
    pois = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pois.append(Poi(rec["id"], rec["name"], rec["address"],
                                LatLon(rec["lat"], rec["lon"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed POI at line {lineno}: {exc}") from exc
    return pois
