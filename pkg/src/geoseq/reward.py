"""Distance-deviation reward and group-relative advantage normalization.

The reward for a predicted point is (sqrt(threshold) - sqrt(distance)) /
scale, with the distance taken as the WGS-84 geodesic deviation from the
truth in meters; with the default threshold of 100 m (and scale 1000) the
reward crosses zero exactly at 100 m. Outputs that fail geohash validation
get a flat penalty chosen to be worse than any valid guess, antipodal
included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from geoseq import geodesic, geohash
from geoseq.coords import LatLon

# (sqrt(T) - sqrt(D_antipodal)) / S ~ -4.466; the invalid penalty sits below it.
DEFAULT_INVALID_PENALTY = -4.5


@dataclass(frozen=True)
class RewardParams:
    threshold_m: float = 100.0  # distance at which the reward crosses zero
    scale: float = 1000.0
    invalid_penalty: float = DEFAULT_INVALID_PENALTY

    def __post_init__(self):
        if self.threshold_m <= 0.0 or self.scale <= 0.0:
            raise ValueError("threshold_m and scale must be positive")


DEFAULT_REWARD_PARAMS = RewardParams()


def reward_from_distance(distance_m: float, params: RewardParams = DEFAULT_REWARD_PARAMS) -> float:
    if distance_m < 0.0:
        raise ValueError(f"distance must be >= 0, got {distance_m}")
    return (math.sqrt(params.threshold_m) - math.sqrt(distance_m)) / params.scale


def reward(pred: LatLon, truth: LatLon, params: RewardParams = DEFAULT_REWARD_PARAMS) -> float:
    return reward_from_distance(geodesic.inverse_distance(pred, truth), params)


def reward_of_output(raw: str, truth: LatLon,
                     params: RewardParams = DEFAULT_REWARD_PARAMS,
                     expected_length: int = geohash.DEFAULT_LENGTH) -> float:
    """Reward of a raw model output: validate, decode, score the centroid.

    Malformed outputs absorb the flat invalid penalty instead of raising.
    """
    try:
        cell = geohash.validate(raw, expected_length)
    except geohash.InvalidGeohashError:
        return params.invalid_penalty
    return reward(geohash.decode_centroid(cell), truth, params)


def group_advantages(rewards: Sequence[float], eps: float = 1e-8) -> list[float]:
    """Group-relative advantages: center on the group mean, divide by the
    population standard deviation (plus eps to survive constant groups)."""
    n = len(rewards)
    if n < 2:
        raise ValueError(f"a rollout group needs at least 2 candidates, got {n}")
    mean = sum(rewards) / n
    var = sum((r - mean) ** 2 for r in rewards) / n
    denom = math.sqrt(var) + eps
    return [(r - mean) / denom for r in rewards]


@dataclass(frozen=True)
class RolloutGroup:
    """One prompt's G candidate outputs with their rewards and advantages."""

    prompt_id: str
    candidates: tuple[str, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.candidates) == len(self.rewards) == len(self.advantages)):
            raise ValueError("candidates, rewards and advantages must have equal length")


def score_group(prompt_id: str, candidates: Sequence[str], truth: LatLon,
                params: RewardParams = DEFAULT_REWARD_PARAMS,
                expected_length: int = geohash.DEFAULT_LENGTH,
                eps: float = 1e-8) -> RolloutGroup:
    """Score a group of raw outputs against one truth and normalize in-group."""
    rewards = [reward_of_output(c, truth, params, expected_length) for c in candidates]
    return RolloutGroup(prompt_id, tuple(candidates), tuple(rewards),
                        tuple(group_advantages(rewards, eps)))
