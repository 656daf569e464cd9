"""Parity checks between the compiled kernels and the pure-Python twins."""

import numpy as np
import pytest

import geoseq.kernels as kernels
from geoseq import _pykernels

pytestmark = pytest.mark.skipif("c" not in kernels.available_backends(),
                                reason="compiled backend not built")


def c_backend():
    import geoseq._core as core
    return core


def random_tables(rng, buckets=16, length=4, scale=1.0):
    prev = rng.normal(0.0, scale, (length, 33, 32))
    feat = rng.normal(0.0, scale, (buckets, length, 32))
    return np.ascontiguousarray(prev), np.ascontiguousarray(feat)


def test_geohash_parity():
    core = c_backend()
    rng = np.random.default_rng(30)
    for _ in range(2000):
        lat = rng.uniform(-90, 90)
        lon = rng.uniform(-180, 180)
        length = int(rng.integers(1, 13))
        cell = core.geohash_encode(lat, lon, length)
        assert cell == _pykernels.geohash_encode(lat, lon, length)
        assert core.geohash_decode(cell) == _pykernels.geohash_decode(cell)


def test_vincenty_parity():
    core = c_backend()
    rng = np.random.default_rng(31)
    for _ in range(2000):
        lat1, lat2 = rng.uniform(-89, 89, 2)
        lon1, lon2 = rng.uniform(-180, 180, 2)
        a = core.vincenty_inverse(lat1, lon1, lat2, lon2)
        b = _pykernels.vincenty_inverse(lat1, lon1, lat2, lon2)
        assert a[3] == b[3]
        assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-9)
        assert a[1] == pytest.approx(b[1], rel=1e-12, abs=1e-9)
        assert a[2] == pytest.approx(b[2], rel=1e-12, abs=1e-9)
        bearing = rng.uniform(0, 360)
        d = rng.uniform(0, 5000)
        fa = core.vincenty_forward(lat1, lon1, bearing, d)
        fb = _pykernels.vincenty_forward(lat1, lon1, bearing, d)
        assert fa == pytest.approx(fb, abs=1e-12)


def test_next_probs_parity():
    core = c_backend()
    rng = np.random.default_rng(32)
    for _ in range(100):
        prev_t, feat_t = random_tables(rng)
        feats = np.unique(rng.integers(0, 16, 5)).astype(np.int32)
        pos = int(rng.integers(0, 4))
        prev = int(rng.integers(0, 33))
        inv_temp = float(rng.uniform(0.5, 2.0))
        a = core.next_probs(prev_t, feat_t, feats, pos, prev, inv_temp)
        b = _pykernels.next_probs(prev_t, feat_t, feats, pos, prev, inv_temp)
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_sample_tokens_parity():
    core = c_backend()
    rng = np.random.default_rng(33)
    for _ in range(50):
        prev_t, feat_t = random_tables(rng)
        feats = np.unique(rng.integers(0, 16, 4)).astype(np.int32)
        uniforms = rng.random((6, 4))
        ta, la = core.sample_tokens(prev_t, feat_t, feats, uniforms, 1.0)
        tb, lb = _pykernels.sample_tokens(prev_t, feat_t, feats, uniforms, 1.0)
        np.testing.assert_array_equal(ta, tb)
        np.testing.assert_allclose(la, lb, atol=1e-12)


def pack_dataset(rng, n, buckets, length):
    feat_idx = []
    feat_off = [0]
    for _ in range(n):
        feats = np.unique(rng.integers(0, buckets, 4))
        feat_idx.extend(int(f) for f in feats)
        feat_off.append(len(feat_idx))
    targets = rng.integers(0, 32, (n, length)).astype(np.int32)
    return (np.asarray(feat_idx, dtype=np.int32),
            np.asarray(feat_off, dtype=np.int32), targets)


def test_mle_parity():
    core = c_backend()
    rng = np.random.default_rng(34)
    prev_t, feat_t = random_tables(rng, scale=0.3)
    feat_idx, feat_off, targets = pack_dataset(rng, 12, 16, 4)
    order = np.arange(12, dtype=np.int64)

    pa, fa = prev_t.copy(), feat_t.copy()
    pb, fb = prev_t.copy(), feat_t.copy()
    lla = core.mle_sgd_epoch(pa, fa, feat_idx, feat_off, targets, order, 0.2)
    llb = _pykernels.mle_sgd_epoch(pb, fb, feat_idx, feat_off, targets, order, 0.2)
    assert lla == pytest.approx(llb, abs=1e-10)
    np.testing.assert_allclose(pa, pb, atol=1e-12)
    np.testing.assert_allclose(fa, fb, atol=1e-12)

    ga_p, ga_f = np.zeros_like(prev_t), np.zeros_like(feat_t)
    gb_p, gb_f = np.zeros_like(prev_t), np.zeros_like(feat_t)
    va = core.mle_batch_grad(prev_t, feat_t, feat_idx, feat_off, targets, ga_p, ga_f)
    vb = _pykernels.mle_batch_grad(prev_t, feat_t, feat_idx, feat_off, targets, gb_p, gb_f)
    assert va == pytest.approx(vb, abs=1e-10)
    np.testing.assert_allclose(ga_p, gb_p, atol=1e-12)
    np.testing.assert_allclose(ga_f, gb_f, atol=1e-12)


def test_grpo_parity():
    core = c_backend()
    rng = np.random.default_rng(35)
    prev_t, feat_t = random_tables(rng, scale=0.3)
    old_p, old_f = random_tables(rng, scale=0.3)
    n_groups, group_size, length = 3, 4, 4
    gfeat_idx = []
    gfeat_off = [0]
    for _ in range(n_groups):
        feats = np.unique(rng.integers(0, 16, 4))
        gfeat_idx.extend(int(f) for f in feats)
        gfeat_off.append(len(gfeat_idx))
    gfeat_idx = np.asarray(gfeat_idx, dtype=np.int32)
    gfeat_off = np.asarray(gfeat_off, dtype=np.int32)
    n = n_groups * group_size
    group_of = np.repeat(np.arange(n_groups, dtype=np.int32), group_size)
    tokens = rng.integers(0, 32, (n, length)).astype(np.int32)
    old_logprobs = rng.uniform(-4.0, -2.0, (n, length))
    advantages = rng.normal(0.0, 1.0, n)

    for kl in (0.0, 0.25):
        ga_p, ga_f = np.zeros_like(prev_t), np.zeros_like(feat_t)
        gb_p, gb_f = np.zeros_like(prev_t), np.zeros_like(feat_t)
        va = core.grpo_batch_grad(prev_t, feat_t, old_p, old_f, gfeat_idx,
                                  gfeat_off, group_of, tokens, old_logprobs,
                                  advantages, 0.2, kl, 1.0, ga_p, ga_f)
        vb = _pykernels.grpo_batch_grad(prev_t, feat_t, old_p, old_f, gfeat_idx,
                                        gfeat_off, group_of, tokens, old_logprobs,
                                        advantages, 0.2, kl, 1.0, gb_p, gb_f)
        assert va == pytest.approx(vb, abs=1e-12)
        np.testing.assert_allclose(ga_p, gb_p, atol=1e-12)
        np.testing.assert_allclose(ga_f, gb_f, atol=1e-12)


def test_backend_selection_context():
    assert set(kernels.available_backends()) == {"c", "python"}
    original = kernels.backend_name()
    with kernels.use("python"):
        assert kernels.backend_name() == "python"
        assert kernels.active is _pykernels
    assert kernels.backend_name() == original
