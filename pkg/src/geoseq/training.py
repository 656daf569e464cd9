"""Two-stage training drivers: SFT (maximum likelihood) then GRPO.

The GRPO loop snapshots the policy once per prompt batch, samples a group
of candidates per prompt from the snapshot, scores them with the
distance-deviation reward, normalizes advantages within each group, and
takes one clipped-surrogate ascent step per batch. All randomness comes
from named substreams of the run seed, keyed by epoch and sample id, so
results do not depend on batching or iteration order of unrelated stages.
"""

from __future__ import annotations

from typing import Sequence

from geoseq import policy, reward
from geoseq.config import GrpoParams, substream
from geoseq.dataset import Sample


def sft_pairs(samples: Sequence[Sample]) -> list[tuple[str, str]]:
    return [(s.input, s.target_geohash) for s in samples]


def run_sft(model: policy.PolicyModel, samples: Sequence[Sample],
            epochs: int, learning_rate: float, seed: int = 0,
            shuffle: bool = True) -> policy.PolicyModel:
    return policy.mle_train(model, sft_pairs(samples), epochs, learning_rate,
                            rng_seed=substream(seed, "sft-shuffle").integers(2**63),
                            shuffle=shuffle)


def run_grpo(model: policy.PolicyModel, samples: Sequence[Sample],
             params: GrpoParams = GrpoParams(),
             reward_params: reward.RewardParams = reward.DEFAULT_REWARD_PARAMS,
             seed: int = 0) -> tuple[policy.PolicyModel, list[dict]]:
    """Refine `model` in place; returns it plus one log row per epoch."""
    if params.group_size < 2:
        raise ValueError(f"group_size must be >= 2, got {params.group_size}")
    if not samples:
        raise ValueError("empty GRPO training set")
    expected_length = model.sequence_length
    logs = []
    for epoch in range(1, params.epochs + 1):
        order = substream(seed, f"grpo-order/{epoch}").permutation(len(samples))
        epoch_rewards: list[float] = []
        for start in range(0, len(order), params.batch_size):
            batch = order[start:start + params.batch_size]
            snapshot = model.copy()
            groups = []
            for idx in batch:
                sample = samples[int(idx)]
                feats = model.featurize(sample.input)
                rollouts = policy.sample_rollouts(
                    snapshot, feats, params.group_size, params.temperature,
                    substream(seed, f"grpo-rollout/{epoch}/{sample.id}"))
                scored = reward.score_group(
                    sample.id, [r.geohash for r in rollouts], sample.target,
                    reward_params, expected_length)
                epoch_rewards.extend(scored.rewards)
                groups.append(policy.GrpoGroup(feats, tuple(rollouts),
                                               scored.advantages))
            policy.grpo_step(model, snapshot, groups, params.clip_eps,
                             params.learning_rate, params.kl_coeff,
                             temperature=params.temperature)
        logs.append({"epoch": epoch,
                     "mean_reward": sum(epoch_rewards) / len(epoch_rewards),
                     "n_rollouts": len(epoch_rewards)})
    return model, logs
