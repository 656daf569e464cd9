import json
import math

import numpy as np
import pytest

from geoseq import policy
from geoseq.geohash import ALPHABET


def tiny_model(buckets=8, length=3):
    return policy.PolicyModel.fresh(buckets, length)


def random_model(rng, buckets=8, length=3, scale=0.5):
    model = tiny_model(buckets, length)
    model.prev_table[:] = rng.normal(0.0, scale, model.prev_table.shape)
    model.feat_table[:] = rng.normal(0.0, scale, model.feat_table.shape)
    return model


# --------------------------------------------------------------------------
# featurization

def test_featurize_trigrams_plus_whole_string():
    feats = policy.featurize("abcd", bucket_count=1 << 20)
    assert len(feats.feature_ids) == 3  # "abc", "bcd", whole string


def test_featurize_deterministic_and_case_insensitive():
    assert policy.featurize("No.3 Elm Road") == policy.featurize("No.3 Elm Road")
    assert policy.featurize("No.3 ELM Road") == policy.featurize("no.3 elm road")


def test_featurize_empty_query():
    feats = policy.featurize("")
    assert len(feats.feature_ids) == 1


def test_featurize_ids_in_range():
    feats = policy.featurize("a long query string with many trigrams", 64)
    assert all(0 <= f < 64 for f in feats.feature_ids)
    assert list(feats.feature_ids) == sorted(set(feats.feature_ids))


# --------------------------------------------------------------------------
# next-symbol distribution

def test_uniform_on_fresh_model(backend):
    model = tiny_model()
    probs = policy.next_distribution(model, policy.featurize("x", 8), 0)
    assert probs.shape == (32,)
    np.testing.assert_allclose(probs, 1.0 / 32.0, atol=1e-15)


def test_distribution_sums_to_one(backend):
    rng = np.random.default_rng(0)
    for _ in range(20):
        model = random_model(rng, scale=3.0)
        feats = policy.featurize("query", 8)
        for t in range(model.sequence_length):
            probs = policy.next_distribution(model, feats, t, prev=int(rng.integers(0, 33)))
            assert abs(probs.sum() - 1.0) <= 1e-12
            assert (probs > 0.0).all()


def test_logit_shift_invariance(backend):
    rng = np.random.default_rng(1)
    model = random_model(rng)
    feats = policy.featurize("q", 8)
    before = policy.next_distribution(model, feats, 0, prev=policy.START_SYMBOL)
    model.prev_table[0, policy.START_SYMBOL] += 7.5
    after = policy.next_distribution(model, feats, 0, prev=policy.START_SYMBOL)
    np.testing.assert_allclose(before, after, atol=1e-12)


def test_single_weight_bump_increases_probability(backend):
    rng = np.random.default_rng(2)
    model = random_model(rng)
    feats = policy.featurize("q", 8)
    before = policy.next_distribution(model, feats, 1, prev=4)
    model.prev_table[1, 4, 17] += 0.3
    after = policy.next_distribution(model, feats, 1, prev=4)
    assert after[17] > before[17]


# --------------------------------------------------------------------------
# sampling

def test_same_seed_same_rollout(backend):
    rng = np.random.default_rng(3)
    model = random_model(rng)
    feats = policy.featurize("query", 8)
    a = policy.sample_rollout(model, feats, rng=42)
    b = policy.sample_rollout(model, feats, rng=42)
    assert a == b
    assert len(a.token_ids) == model.sequence_length
    assert all(lp <= 0.0 for lp in a.log_probs)
    assert a.total_log_prob == pytest.approx(sum(a.log_probs))


def test_low_temperature_matches_greedy(backend):
    rng = np.random.default_rng(4)
    for seed in range(5):
        model = random_model(rng, scale=1.0)
        feats = policy.featurize(f"q{seed}", 8)
        rolled = policy.sample_rollout(model, feats, temperature=1e-6, rng=seed)
        assert rolled.geohash == policy.greedy_decode(model, feats)


def test_degenerate_model_samples_single_path(backend):
    model = tiny_model()
    # force symbol 5 at every position regardless of prev
    model.prev_table[:, :, 5] = 50.0
    feats = policy.featurize("q", 8)
    for seed in range(10):
        assert policy.sample_rollout(model, feats, rng=seed).token_ids == (5, 5, 5)


def test_temperature_must_be_positive():
    with pytest.raises(ValueError):
        policy.sample_rollout(tiny_model(), policy.featurize("q", 8), temperature=0.0)


# --------------------------------------------------------------------------
# beam search

def test_beam_two_symbol_toy(backend):
    model = tiny_model(length=2)
    b, c = ALPHABET.index("b"), ALPHABET.index("c")
    logits = np.full(32, -1e9)
    logits[b] = math.log(0.6)
    logits[c] = math.log(0.4)
    model.prev_table[:, :, :] = logits  # independent steps
    feats = policy.featurize("q", 8)
    beams = policy.beam_search(model, feats, width=2, top_k=2)
    assert [g for g, _ in beams] == ["bb", "bc"]  # "bc" beats "cb" on the tie
    assert beams[0][1] == pytest.approx(math.log(0.36), abs=1e-12)
    assert beams[1][1] == pytest.approx(math.log(0.24), abs=1e-12)


def test_beam_width_one_is_greedy(backend):
    rng = np.random.default_rng(5)
    for seed in range(10):
        model = random_model(rng)
        feats = policy.featurize(f"q{seed}", 8)
        (top, _), = policy.beam_search(model, feats, width=1, top_k=1)
        assert top == policy.greedy_decode(model, feats)


def exhaustive_topk(model, feats, k):
    """Oracle: enumerate all 32**3 sequences from stepwise distributions."""
    lp0 = np.log(policy.next_distribution(model, feats, 0, policy.START_SYMBOL))
    lp1 = np.stack([np.log(policy.next_distribution(model, feats, 1, p)) for p in range(32)])
    lp2 = np.stack([np.log(policy.next_distribution(model, feats, 2, p)) for p in range(32)])
    scored = []
    for a in range(32):
        for b in range(32):
            for c in range(32):
                scored.append((lp0[a] + lp1[a, b] + lp2[b, c], (a, b, c)))
    scored.sort(key=lambda s: (-s[0], s[1]))
    return [(policy.tokens_to_text(toks), lp) for lp, toks in scored[:k]]


def test_beam_matches_exhaustive_enumeration(backend):
    rng = np.random.default_rng(6)
    for trial in range(10):
        model = random_model(rng, scale=1.0)
        feats = policy.featurize(f"query {trial}", 8)
        want = exhaustive_topk(model, feats, 5)
        got = policy.beam_search(model, feats, width=1024, top_k=5)
        assert [g for g, _ in got] == [g for g, _ in want]
        for (_, lp_got), (_, lp_want) in zip(got, want):
            assert lp_got == pytest.approx(lp_want, abs=1e-9)


def test_beam_tie_break_is_lexicographic(backend):
    model = tiny_model(length=2)  # uniform: every sequence ties
    beams = policy.beam_search(model, policy.featurize("q", 8), width=4, top_k=4)
    assert [g for g, _ in beams] == ["00", "01", "02", "03"]


def test_beam_validates_arguments():
    model = tiny_model()
    with pytest.raises(ValueError):
        policy.beam_search(model, policy.featurize("q", 8), width=2, top_k=3)
    with pytest.raises(ValueError):
        policy.beam_search(model, policy.featurize("q", 8), width=1, top_k=0)


# --------------------------------------------------------------------------
# MLE training

def test_memorize_single_pair(backend):
    model = tiny_model(buckets=32, length=3)
    policy.mle_train(model, [("central library", "9qx")], epochs=60,
                     learning_rate=0.5, rng_seed=0)
    assert policy.greedy_decode(model, model.featurize("central library")) == "9qx"


def test_memorize_disjoint_pairs(backend):
    model = tiny_model(buckets=256, length=3)
    pairs = [("north gate", "0b1"), ("south pier", "xyz")]
    policy.mle_train(model, pairs, epochs=120, learning_rate=0.4, rng_seed=1)
    for query, target in pairs:
        assert policy.greedy_decode(model, model.featurize(query)) == target


def test_loglik_nondecreasing_without_shuffle(backend):
    rng = np.random.default_rng(7)
    model = tiny_model(buckets=64, length=3)
    pairs = [(f"query {i}", policy.tokens_to_text(rng.integers(0, 32, 3)))
             for i in range(8)]
    history = []
    for _ in range(25):
        policy.mle_train(model, pairs, epochs=1, learning_rate=0.1, shuffle=False)
        history.append(policy.log_likelihood(model, pairs))
    for before, after in zip(history, history[1:]):
        assert after >= before - 1e-9


def test_mle_rejects_bad_targets():
    model = tiny_model(length=3)
    with pytest.raises(ValueError):
        policy.mle_train(model, [("q", "toolong9ch")], 1, 0.1)
    with pytest.raises(ValueError):
        policy.mle_train(model, [("q", "ail")], 1, 0.1)  # bad alphabet


def test_mle_gradient_matches_finite_differences(backend):
    rng = np.random.default_rng(8)
    model = random_model(rng, buckets=5, length=2, scale=0.3)
    pairs = [("ab", "7c"), ("cd", "x2")]
    value, gprev, gfeat = policy.log_likelihood_and_gradient(model, pairs)
    h = 1e-5
    for table, grad in ((model.prev_table, gprev), (model.feat_table, gfeat)):
        flat = table.reshape(-1)
        gflat = grad.reshape(-1)
        idx = rng.choice(flat.size, size=200, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = policy.log_likelihood(model, pairs)
            flat[i] = orig - h
            down = policy.log_likelihood(model, pairs)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            assert fd == pytest.approx(gflat[i], rel=1e-6, abs=1e-9)


# --------------------------------------------------------------------------
# GRPO updates

def make_groups(model, rng, n_groups=2, group_size=4):
    groups = []
    for g in range(n_groups):
        feats = policy.featurize(f"prompt {g}", model.bucket_count)
        rollouts = policy.sample_rollouts(model, feats, group_size,
                                          rng=int(rng.integers(1 << 30)))
        advantages = rng.normal(0.0, 1.0, group_size)
        advantages -= advantages.mean()
        groups.append(policy.GrpoGroup(feats, tuple(rollouts), tuple(advantages)))
    return groups


def test_zero_advantages_leave_weights_unchanged(backend):
    rng = np.random.default_rng(9)
    model = random_model(rng)
    groups = []
    for g in range(2):
        feats = policy.featurize(f"p{g}", model.bucket_count)
        rollouts = policy.sample_rollouts(model, feats, 4, rng=g)
        groups.append(policy.GrpoGroup(feats, tuple(rollouts), (0.0,) * 4))
    before_prev = model.prev_table.copy()
    before_feat = model.feat_table.copy()
    policy.grpo_step(model, model.copy(), groups, learning_rate=0.7)
    np.testing.assert_array_equal(model.prev_table, before_prev)
    np.testing.assert_array_equal(model.feat_table, before_feat)


def test_first_step_gradient_is_plain_policy_gradient(backend):
    # at the snapshot the ratio is 1, so the surrogate gradient must equal
    # mean-over-tokens of advantage * grad log-prob
    rng = np.random.default_rng(10)
    model = random_model(rng)
    groups = make_groups(model, rng)
    _, gprev, gfeat = policy.grpo_objective_and_gradient(model, model.copy(), groups)

    eprev = np.zeros_like(model.prev_table)
    efeat = np.zeros_like(model.feat_table)
    n_tokens = sum(len(r.token_ids) for g in groups for r in g.rollouts)
    for group in groups:
        for rollout, adv in zip(group.rollouts, group.advantages):
            prev = policy.START_SYMBOL
            for t, y in enumerate(rollout.token_ids):
                probs = policy.next_distribution(model, group.feats, t, prev)
                g = -probs * adv / n_tokens
                g[y] += adv / n_tokens
                eprev[t, prev] += g
                for f in group.feats.feature_ids:
                    efeat[f, t] += g
                prev = y
    np.testing.assert_allclose(gprev, eprev, atol=1e-12)
    np.testing.assert_allclose(gfeat, efeat, atol=1e-12)


@pytest.mark.parametrize("kl_coeff,temperature", [(0.0, 1.0), (0.3, 1.0), (0.0, 1.7)])
def test_grpo_gradient_matches_finite_differences(backend, kl_coeff, temperature):
    rng = np.random.default_rng(11)
    model = random_model(rng, buckets=5, length=2, scale=0.3)
    old = random_model(rng, buckets=5, length=2, scale=0.3)
    feats = policy.featurize("prompt", 5)
    rollouts = policy.sample_rollouts(old, feats, 4, temperature=temperature, rng=1)
    advantages = (1.4, -0.2, -0.7, -0.5)
    groups = [policy.GrpoGroup(feats, tuple(rollouts), advantages)]

    def objective():
        value, _, _ = policy.grpo_objective_and_gradient(
            model, old, groups, clip_eps=0.2, kl_coeff=kl_coeff,
            temperature=temperature)
        return value

    _, gprev, gfeat = policy.grpo_objective_and_gradient(
        model, old, groups, clip_eps=0.2, kl_coeff=kl_coeff, temperature=temperature)
    h = 1e-5
    for table, grad in ((model.prev_table, gprev), (model.feat_table, gfeat)):
        flat = table.reshape(-1)
        gflat = grad.reshape(-1)
        idx = rng.choice(flat.size, size=150, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = objective()
            flat[i] = orig - h
            down = objective()
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            assert fd == pytest.approx(gflat[i], rel=1e-6, abs=1e-9)


def test_grpo_rejects_mismatched_groups():
    rng = np.random.default_rng(12)
    model = random_model(rng)
    feats = policy.featurize("p", model.bucket_count)
    r4 = policy.sample_rollouts(model, feats, 4, rng=0)
    r3 = policy.sample_rollouts(model, feats, 3, rng=0)
    groups = [policy.GrpoGroup(feats, tuple(r4), (0.0,) * 4),
              policy.GrpoGroup(feats, tuple(r3), (0.0,) * 3)]
    with pytest.raises(ValueError, match="mismatched group sizes"):
        policy.grpo_step(model, model.copy(), groups)
    with pytest.raises(ValueError):
        policy.grpo_step(model, model.copy(),
                         [policy.GrpoGroup(feats, (r4[0],), (0.0,))])


# --------------------------------------------------------------------------
# persistence

def test_save_load_roundtrip(backend, tmp_path):
    rng = np.random.default_rng(13)
    model = random_model(rng, buckets=16, length=4)
    model.feat_table[3:, :, :] = 0.0  # leave some rows sparse
    path = tmp_path / "model.json"
    policy.save_model(model, path)
    loaded = policy.load_model(path)
    assert loaded.bucket_count == model.bucket_count
    assert loaded.sequence_length == model.sequence_length
    np.testing.assert_array_equal(loaded.prev_table, model.prev_table)
    np.testing.assert_array_equal(loaded.feat_table, model.feat_table)


def test_fresh_model_saves_empty_feat_table(tmp_path):
    path = tmp_path / "fresh.json"
    policy.save_model(policy.PolicyModel.fresh(64, 9), path)
    doc = json.loads(path.read_text())
    assert doc["feat_table"] == []
    assert doc["B"] == 64
    assert doc["format_version"] == 1


def test_load_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.json"
    policy.save_model(policy.PolicyModel.fresh(8, 3), path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(policy.ModelFormatError):
        policy.load_model(path)


def test_load_rejects_corrupt_file(tmp_path):
    path = tmp_path / "corrupt.json"
    path.write_text("{not json")
    with pytest.raises(policy.ModelFormatError):
        policy.load_model(path)
    path.write_text(json.dumps({"format_version": 1, "feature_hash": "fnv1a64",
                                "B": 8, "sequence_length": 3,
                                "prev_table": [[0.0]], "feat_table": []}))
    with pytest.raises(policy.ModelFormatError):
        policy.load_model(path)
