import json
import subprocess
import sys

import pytest

from geoseq import dataset, geohash, policy
from geoseq.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


def make_dataset(tmp_path, n=16, seed=3):
    pois = tmp_path / "pois.jsonl"
    out_dir = tmp_path / "data"
    assert run_cli("dataset", "synth", "--n", n, "--seed", seed, "--out", pois) == 0
    assert run_cli("dataset", "build", "--pois", pois, "--out-dir", out_dir,
                   "--seed", seed, "--cot") == 0
    return pois, out_dir


def train_small_model(tmp_path, epochs=50):
    pois, out_dir = make_dataset(tmp_path)
    model_path = tmp_path / "model.json"
    assert run_cli("train", "sft", "--data", out_dir / "base_train.jsonl",
                   "--epochs", epochs, "--lr", "0.5", "--buckets", 1024,
                   "--seed", 0, "--out", model_path) == 0
    return pois, out_dir, model_path


# --------------------------------------------------------------------------
# geohash

def test_geohash_encode(capsys):
    assert run_cli("geohash", "encode", "--lat", 0, "--lon", 0, "--len", 9) == 0
    out = capsys.readouterr().out.strip()
    assert len(out) == 9
    assert all(c in geohash.ALPHABET for c in out)


def test_geohash_decode(capsys):
    assert run_cli("geohash", "decode", "wx4ej8mdt") == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"geohash", "bbox", "centroid"}
    assert doc["bbox"]["lat_min"] < doc["centroid"]["lat"] < doc["bbox"]["lat_max"]


def test_geohash_decode_invalid_exits_1(capsys):
    assert run_cli("geohash", "decode", "zzz!") == 1
    assert "invalid-geohash" in capsys.readouterr().err


def test_geohash_encode_bad_lat_exits_1(capsys):
    assert run_cli("geohash", "encode", "--lat", 95, "--lon", 0) == 1


# --------------------------------------------------------------------------
# dataset

def test_dataset_synth_and_build(tmp_path):
    pois_path, out_dir = make_dataset(tmp_path)
    pois = dataset.read_pois(pois_path)
    assert len(pois) == 16
    names = {"base_train.jsonl", "base_test.jsonl",
             "anchor_offset_train.jsonl", "anchor_offset_test.jsonl",
             "manifest.json"}
    assert {p.name for p in out_dir.iterdir()} == names
    base_train = dataset.read_jsonl(out_dir / "base_train.jsonl")
    assert all(s.kind == "base" and s.split == "train" for s in base_train)
    assert all(s.thinking for s in base_train)  # --cot was set
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["config_echo"]["seed"] == 3


def test_dataset_build_intercardinal(tmp_path):
    pois, _ = make_dataset(tmp_path)
    out_dir = tmp_path / "inter"
    assert run_cli("dataset", "build", "--pois", pois, "--out-dir", out_dir,
                   "--directions", "intercardinal", "--seed", 1) == 0
    for name in ("anchor_offset_train.jsonl", "anchor_offset_test.jsonl"):
        for s in dataset.read_jsonl(out_dir / name):
            assert s.offset_meta.direction in {"northeast", "southeast",
                                               "southwest", "northwest"}


def test_dataset_build_reruns_byte_identical(tmp_path):
    pois, out1 = make_dataset(tmp_path)
    out2 = tmp_path / "data2"
    assert run_cli("dataset", "build", "--pois", pois, "--out-dir", out2,
                   "--seed", 3, "--cot") == 0
    for name in ("base_train.jsonl", "base_test.jsonl",
                 "anchor_offset_train.jsonl", "anchor_offset_test.jsonl"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_dataset_missing_pois_exits_2(tmp_path):
    assert run_cli("dataset", "build", "--pois", tmp_path / "nope.jsonl",
                   "--out-dir", tmp_path / "d") == 2


# --------------------------------------------------------------------------
# training

def test_train_sft_writes_model(tmp_path):
    _, _, model_path = train_small_model(tmp_path)
    model = policy.load_model(model_path)
    assert model.sequence_length == 9
    doc = json.loads(model_path.read_text())
    assert doc["config_echo"]["seed"] == 0


def test_train_grpo_logs_and_model(tmp_path, capsys):
    _, out_dir, model_path = train_small_model(tmp_path)
    grpo_path = tmp_path / "grpo.json"
    log_path = tmp_path / "grpo.log.jsonl"
    capsys.readouterr()  # drop the sft summary line
    assert run_cli("train", "grpo", "--data", out_dir / "anchor_offset_train.jsonl",
                   "--model-in", model_path, "--out", grpo_path,
                   "--group-size", 8, "--epochs", 2, "--clip", "0.2",
                   "--lr", "0.05", "--seed", 0, "--log", log_path) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    assert len(lines) == 2
    assert all({"epoch", "mean_reward"} <= set(row) for row in lines)
    assert log_path.read_text().strip().splitlines()
    policy.load_model(grpo_path)


def test_train_grpo_group_size_one_exits_1(tmp_path, capsys):
    _, out_dir, model_path = train_small_model(tmp_path)
    assert run_cli("train", "grpo", "--data", out_dir / "anchor_offset_train.jsonl",
                   "--model-in", model_path, "--out", tmp_path / "m.json",
                   "--group-size", 1, "--seed", 0) == 1
    assert "group_size" in capsys.readouterr().err


# --------------------------------------------------------------------------
# eval / predict / render

def test_eval_model_and_baseline(tmp_path, capsys):
    pois, out_dir, model_path = train_small_model(tmp_path)
    report_path = tmp_path / "report.json"
    assert run_cli("eval", "--model", model_path,
                   "--data", out_dir / "base_train.jsonl",
                   "--out", report_path) == 0
    doc = json.loads(report_path.read_text())
    assert set(doc) == {"add_m", "acc", "ec", "n", "config_echo"}
    assert set(doc["acc"]) == {"100", "200", "500"}
    records = (tmp_path / "report.records.jsonl").read_text().strip().splitlines()
    assert len(records) == doc["n"]

    base_report = tmp_path / "lev.json"
    assert run_cli("eval", "--baseline", "lev", "--pois", pois,
                   "--data", out_dir / "base_test.jsonl",
                   "--out", base_report) == 0
    doc = json.loads(base_report.read_text())
    assert doc["ec"] == 0


def test_eval_requires_model_xor_baseline(tmp_path, capsys):
    assert run_cli("eval", "--data", tmp_path / "x.jsonl",
                   "--out", tmp_path / "r.json") == 1
    assert run_cli("eval", "--baseline", "lev", "--data", tmp_path / "x.jsonl",
                   "--out", tmp_path / "r.json") == 1  # --pois missing


def test_eval_unknown_baseline_exits_1(tmp_path, capsys):
    assert run_cli("eval", "--baseline", "bm25", "--data", tmp_path / "x.jsonl",
                   "--out", tmp_path / "r.json") == 1


def test_predict_greedy_and_beam(tmp_path, capsys):
    _, out_dir, model_path = train_small_model(tmp_path)
    sample = dataset.read_jsonl(out_dir / "base_train.jsonl")[0]
    capsys.readouterr()  # drop the sft summary line
    assert run_cli("predict", "--model", model_path, "--query", sample.input) == 0
    (line,) = capsys.readouterr().out.strip().splitlines()
    doc = json.loads(line)
    assert doc["geohash"] == sample.target_geohash
    assert {"rank", "geohash", "lat", "lon", "log_prob"} == set(doc)

    assert run_cli("predict", "--model", model_path, "--query", sample.input,
                   "--beam", 50, "--top", 50) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    assert len(lines) == 50
    lps = [l["log_prob"] for l in lines]
    assert lps == sorted(lps, reverse=True)


def test_render_geojson(tmp_path, capsys):
    _, out_dir, model_path = train_small_model(tmp_path)
    sample = dataset.read_jsonl(out_dir / "base_train.jsonl")[0]
    out = tmp_path / "points.geojson"
    assert run_cli("render", "--model", model_path, "--query", sample.input,
                   "--width", 50, "--top", 20, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["type"] == "FeatureCollection"
    assert len(doc["features"]) == 20
    for rank, feature in enumerate(doc["features"]):
        assert feature["type"] == "Feature"
        assert feature["geometry"]["type"] == "Point"
        lon, lat = feature["geometry"]["coordinates"]
        assert -180 <= lon < 180 and -90 <= lat <= 90
        assert feature["properties"]["rank"] == rank
    lps = [f["properties"]["log_prob"] for f in doc["features"]]
    assert lps == sorted(lps, reverse=True)
    assert "config_echo" in doc


def test_model_file_missing_exits_2(tmp_path):
    assert run_cli("predict", "--model", tmp_path / "nope.json", "--query", "x") == 2


def test_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("GEOSEQ_SEED", "3")
    pois_env = tmp_path / "pois_env.jsonl"
    assert run_cli("dataset", "synth", "--n", 16, "--out", pois_env) == 0
    pois_flag = tmp_path / "pois_flag.jsonl"
    assert run_cli("dataset", "synth", "--n", 16, "--seed", 3, "--out", pois_flag) == 0
    assert pois_env.read_bytes() == pois_flag.read_bytes()


def test_console_script_entrypoint():
    proc = subprocess.run([sys.executable, "-m", "geoseq.cli", "geohash",
                           "encode", "--lat", "57.64911", "--lon", "10.40744",
                           "--len", "11"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "u4pruydqqvj"
