"""Evaluation metrics and retrieval baselines.

Metrics over a prediction set: mean geodesic deviation (add_m), the
fraction within each distance threshold (acc), and the count of outputs
that failed geohash validation (ec). Invalid outputs are excluded from the
mean by default but always count against every accuracy threshold.

The two baselines are deliberately simple, offline stand-ins for
encoder-based retrieval: raw-string edit distance, and character-bigram
cosine retrieval with an optional edit-distance rerank. Reports label them
"simplified".
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from geoseq import geodesic, geohash, policy
from geoseq.coords import LatLon
from geoseq.dataset import Poi, Sample

DEFAULT_THRESHOLDS = (100.0, 200.0, 500.0)
BASELINE_NAMES = ("lev", "vec1", "vec5r")

# A predictor maps a query to (raw_output, exact_point_or_None); generative
# predictors return only the raw text and let validation derive the point.
Predictor = Callable[[str], tuple[str, LatLon | None]]


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    raw_output: str
    pred: LatLon | None  # present iff validation succeeded
    truth: LatLon


@dataclass(frozen=True)
class MetricsReport:
    add_m: float | None  # None when no record contributes a distance
    acc: dict[float, float]
    ec: int
    n: int

    def to_dict(self) -> dict:
        def key(k: float) -> str:
            return str(int(k)) if float(k).is_integer() else str(k)
        return {"add_m": self.add_m,
                "acc": {key(k): v for k, v in sorted(self.acc.items())},
                "ec": self.ec, "n": self.n}


def summarize_distances(distances: Sequence[float], n_invalid: int,
                        thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                        invalid_policy: str = "exclude",
                        invalid_distance_m: float | None = None) -> MetricsReport:
    """Metric arithmetic over precomputed distances plus an invalid count.

    invalid_policy "exclude" leaves invalid records out of the mean;
    "penalty" folds them in at `invalid_distance_m`. Either way they fail
    every threshold and the accuracy denominator is the full record count.
    """
    if invalid_policy not in ("exclude", "penalty"):
        raise ValueError(f"unknown invalid_policy {invalid_policy!r}")
    n = len(distances) + n_invalid
    if n == 0:
        raise ValueError("no records to evaluate")
    pool = list(distances)
    if invalid_policy == "penalty" and n_invalid:
        if invalid_distance_m is None:
            raise ValueError("invalid_policy='penalty' needs invalid_distance_m")
        pool.extend([invalid_distance_m] * n_invalid)
    add_m = sum(pool) / len(pool) if pool else None
    acc = {float(k): sum(1 for d in distances if d <= k) / n for k in thresholds}
    return MetricsReport(add_m=add_m, acc=acc, ec=n_invalid, n=n)


def compute_metrics(records: Sequence[PredictionRecord],
                    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                    invalid_policy: str = "exclude",
                    invalid_distance_m: float | None = None) -> MetricsReport:
    if not records:
        raise ValueError("no records to evaluate")
    distances = [geodesic.inverse_distance(r.pred, r.truth)
                 for r in records if r.pred is not None]
    n_invalid = sum(1 for r in records if r.pred is None)
    return summarize_distances(distances, n_invalid, thresholds,
                               invalid_policy, invalid_distance_m)


# --------------------------------------------------------------------------
# baselines

def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance via the classic two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1,
                               current[j - 1] + 1,
                               previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


@dataclass(frozen=True)
class _Entry:
    poi_id: str
    text: str
    location: LatLon


def _entries(pois: Sequence[Poi]) -> list[_Entry]:
    entries = []
    for poi in pois:
        entries.append(_Entry(poi.id, poi.name, poi.location))
        entries.append(_Entry(poi.id, poi.address, poi.location))
    return entries


def levenshtein_baseline(query: str, pois: Sequence[Poi]) -> LatLon:
    """Coordinates of the entry with minimal edit distance (ties: lowest id)."""
    if not pois:
        raise ValueError("empty POI database")
    best = min(_entries(pois),
               key=lambda e: (edit_distance(query, e.text), e.poi_id, e.text))
    return best.location


def _bigram_vector(text: str) -> tuple[Counter, float]:
    counts = Counter(text[i:i + 2] for i in range(len(text) - 1))
    norm = math.sqrt(sum(c * c for c in counts.values()))
    return counts, norm


def bigram_cosine(a: str, b: str) -> float:
    """Cosine similarity of L2-normalized character-bigram count vectors."""
    ca, na = _bigram_vector(a)
    cb, nb = _bigram_vector(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = sum(count * cb.get(gram, 0) for gram, count in ca.items())
    return dot / (na * nb)


def vector_baseline(query: str, pois: Sequence[Poi], top_k: int = 1,
                    rerank: bool = False) -> LatLon:
    """Bigram-cosine retrieval; optionally rerank the top_k by edit distance."""
    if not pois:
        raise ValueError("empty POI database")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    entries = _entries(pois)
    ranked = sorted(entries,
                    key=lambda e: (-bigram_cosine(query, e.text), e.poi_id, e.text))
    shortlist = ranked[:top_k]
    if rerank and top_k > 1:
        shortlist = sorted(shortlist,
                           key=lambda e: (edit_distance(query, e.text), e.poi_id, e.text))
    return shortlist[0].location


# --------------------------------------------------------------------------
# end-to-end evaluation

def make_model_predictor(model: policy.PolicyModel,
                         beam_width: int | None = None) -> Predictor:
    """Greedy decoding by default; with a beam width, the top beam wins."""
    def predict(query: str) -> tuple[str, LatLon | None]:
        feats = model.featurize(query)
        if beam_width:
            return policy.beam_search(model, feats, beam_width, 1)[0][0], None
        return policy.greedy_decode(model, feats), None
    return predict


def make_baseline_predictor(name: str, pois: Sequence[Poi],
                            geohash_length: int = geohash.DEFAULT_LENGTH) -> Predictor:
    """Baselines return exact coordinates; raw_output carries their geohash."""
    if name == "lev":
        point_fn = lambda q: levenshtein_baseline(q, pois)
    elif name == "vec1":
        point_fn = lambda q: vector_baseline(q, pois, top_k=1, rerank=False)
    elif name == "vec5r":
        point_fn = lambda q: vector_baseline(q, pois, top_k=5, rerank=True)
    else:
        raise ValueError(f"unknown baseline {name!r}; choices: {BASELINE_NAMES}")

    def predict(query: str) -> tuple[str, LatLon | None]:
        point = point_fn(query)
        return geohash.encode(point, geohash_length), point
    return predict


def run_eval(samples: Sequence[Sample], predictor: Predictor,
             expected_length: int = geohash.DEFAULT_LENGTH,
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
             invalid_policy: str = "exclude",
             invalid_distance_m: float | None = None,
             ) -> tuple[MetricsReport, list[dict]]:
    """Predict every sample; return the report and per-record JSONL rows."""
    if not samples:
        raise ValueError("empty evaluation dataset")
    records = []
    rows = []
    for sample in samples:
        raw, point = predictor(sample.input)
        if point is None:
            try:
                point = geohash.decode_centroid(geohash.validate(raw, expected_length))
            except geohash.InvalidGeohashError:
                point = None
        record = PredictionRecord(sample.id, raw, point, sample.target)
        records.append(record)
        distance = (geodesic.inverse_distance(point, sample.target)
                    if point is not None else None)
        rows.append({"sample_id": sample.id, "raw_output": raw,
                     "pred_lat": None if point is None else point.lat,
                     "pred_lon": None if point is None else point.lon,
                     "truth_lat": sample.target.lat, "truth_lon": sample.target.lon,
                     "distance_m": distance, "valid": point is not None})
    report = compute_metrics(records, thresholds, invalid_policy, invalid_distance_m)
    return report, rows


def write_records(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_report(path: str | Path, report: MetricsReport, config_echo: dict) -> None:
    doc = report.to_dict()
    doc["config_echo"] = config_echo
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
