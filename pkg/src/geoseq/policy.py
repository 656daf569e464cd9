"""Autoregressive policy over the geohash alphabet.

A tabular log-linear model plays the role of the sequence generator: the
logits for the next symbol at position t are the sum of a (position,
previous-symbol) table row and one row per active hashed query feature.
That is enough structure to memorize a city of queries, to be trained by
maximum likelihood, and to be refined with clipped-surrogate policy
gradients on grouped rollouts, while staying fully testable against finite
differences and exhaustive enumeration.

Queries are featurized as hashed character trigrams plus one whole-string
bucket (FNV-1a 64-bit, reduced mod the bucket count). Sequences have a
fixed length (9 by default) and no end-of-sequence token.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from geoseq import kernels
from geoseq.geohash import ALPHABET

N_SYMBOLS = 32
START_SYMBOL = 32  # start-of-sequence sentinel row in the prev table
DEFAULT_BUCKETS = 4096
DEFAULT_SEQUENCE_LENGTH = 9
FEATURE_HASH_NAME = "fnv1a64"
MODEL_FORMAT_VERSION = 1

_SYMBOL_INDEX = {c: i for i, c in enumerate(ALPHABET)}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class ModelFormatError(ValueError):
    """Raised when a model file cannot be loaded."""


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class QueryFeatures:
    """Deduplicated feature-bucket ids for one query (sorted for determinism)."""

    feature_ids: tuple[int, ...]
    bucket_count: int

    def as_array(self) -> np.ndarray:
        return np.asarray(self.feature_ids, dtype=np.int32)


def featurize(query: str, bucket_count: int = DEFAULT_BUCKETS) -> QueryFeatures:
    """Hash the lowercased query's character trigrams plus the whole string."""
    if bucket_count < 1:
        raise ValueError(f"bucket_count must be >= 1, got {bucket_count}")
    text = query.lower()
    raw = text.encode("utf-8")
    buckets = {_fnv1a64(b"\x00" + raw) % bucket_count}  # whole-string bucket
    for i in range(len(text) - 2):
        buckets.add(_fnv1a64(text[i:i + 3].encode("utf-8")) % bucket_count)
    return QueryFeatures(tuple(sorted(buckets)), bucket_count)


@dataclass
class PolicyModel:
    """Log-linear tables: prev_table (L, 33, 32) and feat_table (B, L, 32)."""

    bucket_count: int
    sequence_length: int
    prev_table: np.ndarray
    feat_table: np.ndarray
    feature_hash: str = FEATURE_HASH_NAME

    @classmethod
    def fresh(cls, bucket_count: int = DEFAULT_BUCKETS,
              sequence_length: int = DEFAULT_SEQUENCE_LENGTH) -> "PolicyModel":
        return cls(
            bucket_count=bucket_count,
            sequence_length=sequence_length,
            prev_table=np.zeros((sequence_length, N_SYMBOLS + 1, N_SYMBOLS)),
            feat_table=np.zeros((bucket_count, sequence_length, N_SYMBOLS)),
        )

    def copy(self) -> "PolicyModel":
        return PolicyModel(self.bucket_count, self.sequence_length,
                           self.prev_table.copy(), self.feat_table.copy(),
                           self.feature_hash)

    def featurize(self, query: str) -> QueryFeatures:
        return featurize(query, self.bucket_count)


@dataclass(frozen=True)
class Rollout:
    """One sampled sequence with its sampling-time (old policy) log-probs."""

    token_ids: tuple[int, ...]
    log_probs: tuple[float, ...]

    @property
    def total_log_prob(self) -> float:
        return sum(self.log_probs)

    @property
    def geohash(self) -> str:
        return tokens_to_text(self.token_ids)


def tokens_to_text(token_ids: Iterable[int]) -> str:
    return "".join(ALPHABET[t] for t in token_ids)


def text_to_tokens(text: str) -> tuple[int, ...]:
    try:
        return tuple(_SYMBOL_INDEX[c] for c in text)
    except KeyError as exc:
        raise ValueError(f"character {exc.args[0]!r} is not in the geohash alphabet") from None


def next_distribution(model: PolicyModel, feats: QueryFeatures,
                      position: int, prev: int = START_SYMBOL) -> np.ndarray:
    """Probability vector over the 32 next symbols at one decoding state."""
    if not 0 <= position < model.sequence_length:
        raise ValueError(f"position {position} out of range [0, {model.sequence_length})")
    if not 0 <= prev <= START_SYMBOL:
        raise ValueError(f"prev symbol {prev} out of range [0, {START_SYMBOL}]")
    return kernels.active.next_probs(model.prev_table, model.feat_table,
                                     feats.as_array(), position, prev, 1.0)


def sample_rollout(model: PolicyModel, feats: QueryFeatures,
                   temperature: float = 1.0,
                   rng: np.random.Generator | int = 0) -> Rollout:
    return sample_rollouts(model, feats, 1, temperature, rng)[0]


def sample_rollouts(model: PolicyModel, feats: QueryFeatures, count: int,
                    temperature: float = 1.0,
                    rng: np.random.Generator | int = 0) -> list[Rollout]:
    """Draw `count` independent sequences at the given temperature."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    uniforms = rng.random((count, model.sequence_length))
    tokens, logprobs = kernels.active.sample_tokens(
        model.prev_table, model.feat_table, feats.as_array(),
        uniforms, 1.0 / temperature)
    return [Rollout(tuple(int(t) for t in tokens[i]),
                    tuple(float(lp) for lp in logprobs[i]))
            for i in range(count)]


def greedy_decode(model: PolicyModel, feats: QueryFeatures) -> str:
    """Argmax decode; ties go to the lexicographically smallest symbol."""
    prev = START_SYMBOL
    out = []
    for t in range(model.sequence_length):
        probs = next_distribution(model, feats, t, prev)
        prev = int(np.argmax(probs))
        out.append(prev)
    return tokens_to_text(out)


def beam_search(model: PolicyModel, feats: QueryFeatures,
                width: int, top_k: int) -> list[tuple[str, float]]:
    """Width-limited breadth search; returns top_k (geohash, log-prob) pairs.

    Ties in log-probability break lexicographically, which (because the
    alphabet is sorted) is the same as ordering by token ids.
    """
    if not 1 <= top_k <= width:
        raise ValueError(f"need 1 <= top_k <= width, got top_k={top_k}, width={width}")
    feats_arr = feats.as_array()
    beams: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    for t in range(model.sequence_length):
        candidates: list[tuple[tuple[int, ...], float]] = []
        for tokens, lp in beams:
            prev = tokens[-1] if tokens else START_SYMBOL
            probs = kernels.active.next_probs(
                model.prev_table, model.feat_table, feats_arr, t, prev, 1.0)
            for k in range(N_SYMBOLS):
                if probs[k] > 0.0:
                    candidates.append((tokens + (k,), lp + math.log(probs[k])))
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beams = candidates[:width]
    return [(tokens_to_text(tokens), lp) for tokens, lp in beams[:top_k]]


# --------------------------------------------------------------------------
# maximum-likelihood training

def _pack_pairs(model: PolicyModel, pairs: Sequence[tuple[str, str]]):
    """Flatten (query, geohash) pairs into the kernel's array layout."""
    feat_idx: list[int] = []
    feat_off = [0]
    targets = np.empty((len(pairs), model.sequence_length), dtype=np.int32)
    for i, (query, target) in enumerate(pairs):
        if len(target) != model.sequence_length:
            raise ValueError(
                f"target {target!r} has length {len(target)}, "
                f"model expects {model.sequence_length}")
        targets[i] = text_to_tokens(target)
        feat_idx.extend(model.featurize(query).feature_ids)
        feat_off.append(len(feat_idx))
    return (np.asarray(feat_idx, dtype=np.int32),
            np.asarray(feat_off, dtype=np.int32), targets)


def mle_train(model: PolicyModel, pairs: Sequence[tuple[str, str]],
              epochs: int, learning_rate: float,
              rng_seed: int = 0, shuffle: bool = True) -> PolicyModel:
    """Per-sample stochastic gradient ascent on token log-likelihood, in place."""
    if not pairs:
        raise ValueError("empty training set")
    feat_idx, feat_off, targets = _pack_pairs(model, pairs)
    rng = np.random.default_rng(rng_seed)
    order = np.arange(len(pairs), dtype=np.int64)
    for _ in range(epochs):
        if shuffle:
            order = rng.permutation(len(pairs)).astype(np.int64)
        kernels.active.mle_sgd_epoch(model.prev_table, model.feat_table,
                                     feat_idx, feat_off, targets, order,
                                     learning_rate)
    return model


def log_likelihood(model: PolicyModel, pairs: Sequence[tuple[str, str]]) -> float:
    """Mean per-sample sequence log-likelihood of the dataset."""
    value, _, _ = log_likelihood_and_gradient(model, pairs)
    return value


def log_likelihood_and_gradient(model: PolicyModel, pairs: Sequence[tuple[str, str]],
                                ) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean log-likelihood and its gradient w.r.t. both weight tables."""
    feat_idx, feat_off, targets = _pack_pairs(model, pairs)
    gprev = np.zeros_like(model.prev_table)
    gfeat = np.zeros_like(model.feat_table)
    total = kernels.active.mle_batch_grad(model.prev_table, model.feat_table,
                                          feat_idx, feat_off, targets,
                                          gprev, gfeat)
    n = len(pairs)
    return total / n, gprev / n, gfeat / n


# --------------------------------------------------------------------------
# GRPO updates

@dataclass(frozen=True)
class GrpoGroup:
    """Rollouts for one prompt plus their already-normalized advantages."""

    feats: QueryFeatures
    rollouts: tuple[Rollout, ...]
    advantages: tuple[float, ...]

    def __post_init__(self):
        if len(self.rollouts) != len(self.advantages):
            raise ValueError("one advantage per rollout required")


def _pack_groups(model: PolicyModel, groups: Sequence[GrpoGroup]):
    if not groups:
        raise ValueError("empty group batch")
    group_size = len(groups[0].rollouts)
    if group_size < 2:
        raise ValueError(f"rollout groups need at least 2 candidates, got {group_size}")
    length = model.sequence_length
    gfeat_idx: list[int] = []
    gfeat_off = [0]
    group_of: list[int] = []
    tokens_rows = []
    old_lp_rows = []
    advantages: list[float] = []
    for g, group in enumerate(groups):
        if len(group.rollouts) != group_size:
            raise ValueError(
                f"mismatched group sizes: expected {group_size}, "
                f"got {len(group.rollouts)}")
        gfeat_idx.extend(group.feats.feature_ids)
        gfeat_off.append(len(gfeat_idx))
        for rollout, adv in zip(group.rollouts, group.advantages):
            if len(rollout.token_ids) != length:
                raise ValueError("rollout length does not match the model")
            group_of.append(g)
            tokens_rows.append(rollout.token_ids)
            old_lp_rows.append(rollout.log_probs)
            advantages.append(adv)
    return (np.asarray(gfeat_idx, dtype=np.int32),
            np.asarray(gfeat_off, dtype=np.int32),
            np.asarray(group_of, dtype=np.int32),
            np.asarray(tokens_rows, dtype=np.int32),
            np.asarray(old_lp_rows, dtype=np.float64),
            np.asarray(advantages, dtype=np.float64))


def grpo_objective_and_gradient(model: PolicyModel, old_model: PolicyModel,
                                groups: Sequence[GrpoGroup],
                                clip_eps: float = 0.2, kl_coeff: float = 0.0,
                                temperature: float = 1.0,
                                ) -> tuple[float, np.ndarray, np.ndarray]:
    """Token-mean clipped surrogate (minus any KL penalty) and its gradient.

    `temperature` must match the one the rollouts were sampled at: the
    probability ratio is taken between the current and the recorded
    sampling-time distributions.
    """
    packed = _pack_groups(model, groups)
    gprev = np.zeros_like(model.prev_table)
    gfeat = np.zeros_like(model.feat_table)
    objective = kernels.active.grpo_batch_grad(
        model.prev_table, model.feat_table,
        old_model.prev_table, old_model.feat_table,
        *packed, clip_eps, kl_coeff, 1.0 / temperature, gprev, gfeat)
    return objective, gprev, gfeat


def grpo_step(model: PolicyModel, old_model: PolicyModel,
              groups: Sequence[GrpoGroup], clip_eps: float = 0.2,
              learning_rate: float = 1.0, kl_coeff: float = 0.0,
              temperature: float = 1.0) -> PolicyModel:
    """One gradient-ascent step on the clipped surrogate, in place."""
    _, gprev, gfeat = grpo_objective_and_gradient(model, old_model, groups,
                                                  clip_eps, kl_coeff, temperature)
    model.prev_table += learning_rate * gprev
    model.feat_table += learning_rate * gfeat
    return model


# --------------------------------------------------------------------------
# persistence

def save_model(model: PolicyModel, path: str | Path,
               config_echo: dict | None = None) -> None:
    """Write the model as JSON; feat_table stores only its nonzero rows."""
    rows = []
    nonzero = np.nonzero(np.any(model.feat_table != 0.0, axis=2))
    for f, t in zip(*nonzero):
        rows.append([int(f), int(t), model.feat_table[f, t].tolist()])
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_hash": model.feature_hash,
        "B": model.bucket_count,
        "sequence_length": model.sequence_length,
        "prev_table": model.prev_table.tolist(),
        "feat_table": rows,
    }
    if config_echo is not None:
        doc["config_echo"] = config_echo
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> PolicyModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format_version {doc.get('format_version')!r} in {path}")
    if doc.get("feature_hash") != FEATURE_HASH_NAME:
        raise ModelFormatError(
            f"unsupported feature_hash {doc.get('feature_hash')!r} in {path}")
    try:
        model = PolicyModel.fresh(int(doc["B"]), int(doc["sequence_length"]))
        prev = np.asarray(doc["prev_table"], dtype=np.float64)
        if prev.shape != model.prev_table.shape:
            raise IndexError(f"prev_table shape {prev.shape}")
        model.prev_table = prev
        for f, t, values in doc["feat_table"]:
            if not (0 <= f < model.bucket_count and 0 <= t < model.sequence_length):
                raise IndexError(f"feat_table row ({f}, {t})")
            model.feat_table[f, t] = values
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    return model
