"""Command-line entry point wiring the pipeline into reproducible workflows.

Subcommands: geohash (encode/decode utilities), dataset (synthesize POIs,
build sample files), train (sft, grpo), eval, predict, render (beam
candidates as GeoJSON). Every command takes a --seed (falling back to the
GEOSEQ_SEED environment variable, then 0) and derives all randomness from
it; artifacts embed the resolved configuration, so re-running a command
with the same flags reproduces its outputs byte for byte.

Exit codes: 0 success, 1 usage or validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from geoseq import dataset, evaluate, geohash, policy, training
from geoseq.config import GrpoParams, substream
from geoseq.coords import BBox, LatLon
from geoseq.reward import RewardParams


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("GEOSEQ_SEED")
    return int(env) if env else 0


def _config_echo(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _parse_bbox(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise UsageError(f"--bbox wants lat_min,lat_max,lon_min,lon_max, got {text!r}")
    try:
        return BBox(*(float(p) for p in parts))
    except ValueError as exc:
        raise UsageError(f"bad --bbox {text!r}: {exc}") from exc


def _write_manifest(path: Path, command: str, echo: dict) -> None:
    path.write_text(json.dumps({"command": command, "config_echo": echo}, indent=2)
                    + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# geohash

def cmd_geohash_encode(args) -> int:
    print(geohash.encode(LatLon(args.lat, args.lon), args.len))
    return 0


def cmd_geohash_decode(args) -> int:
    box = geohash.decode(args.hash)
    center = box.center
    print(json.dumps({
        "geohash": args.hash,
        "bbox": {"lat_min": box.lat_min, "lat_max": box.lat_max,
                 "lon_min": box.lon_min, "lon_max": box.lon_max},
        "centroid": {"lat": center.lat, "lon": center.lon},
    }))
    return 0


# --------------------------------------------------------------------------
# dataset

def cmd_dataset_synth(args) -> int:
    args.seed = _resolve_seed(args.seed)
    pois = dataset.synth_city(args.n, _parse_bbox(args.bbox),
                              substream(args.seed, "city"))
    out = Path(args.out)
    dataset.write_pois(out, pois)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                    "dataset synth", _config_echo(args))
    print(f"wrote {len(pois)} POIs to {out}")
    return 0


def cmd_dataset_build(args) -> int:
    args.seed = _resolve_seed(args.seed)
    sources = tuple(args.sources.split(","))
    for s in sources:
        if s not in dataset.BASE_SOURCES:
            raise UsageError(f"unknown source {s!r}; choices: {dataset.BASE_SOURCES}")
    pois = dataset.read_pois(args.pois)

    base = dataset.build_base(pois, sources, substream(args.seed, "base-noise"),
                              args.geohash_len)
    offsets = dataset.build_anchor_offset(
        pois, args.directions, args.offset_min, args.offset_max,
        substream(args.seed, "offset"), sources, args.geohash_len)
    if args.cot:
        dataset.attach_thinking(base, pois)

    # same split substream for both classes: equal-length lists built in the
    # same POI/source order land on the same side of the split
    split_seed = substream(args.seed, "split")
    base_train, base_test = dataset.split_dataset(
        base, args.train_fraction, split_seed, args.coverage_radius)
    split_seed = substream(args.seed, "split")
    off_train, off_test = dataset.split_dataset(
        offsets, args.train_fraction, split_seed, args.coverage_radius)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"base_train.jsonl": base_train, "base_test.jsonl": base_test,
             "anchor_offset_train.jsonl": off_train,
             "anchor_offset_test.jsonl": off_test}
    for name, rows in files.items():
        dataset.write_jsonl(out_dir / name, rows)
    _write_manifest(out_dir / "manifest.json", "dataset build", _config_echo(args))
    counts = ", ".join(f"{name}: {len(rows)}" for name, rows in files.items())
    print(f"wrote {counts} in {out_dir}")
    return 0


# --------------------------------------------------------------------------
# training

def cmd_train_sft(args) -> int:
    args.seed = _resolve_seed(args.seed)
    samples = dataset.read_jsonl(args.data)
    if not samples:
        raise ValueError(f"no samples in {args.data}")
    length = len(samples[0].target_geohash)
    model = policy.PolicyModel.fresh(args.buckets, length)
    training.run_sft(model, samples, args.epochs, args.lr, args.seed)
    policy.save_model(model, args.out, _config_echo(args))
    print(f"trained on {len(samples)} samples for {args.epochs} epochs -> {args.out}")
    return 0


def cmd_train_grpo(args) -> int:
    args.seed = _resolve_seed(args.seed)
    samples = dataset.read_jsonl(args.data)
    model = policy.load_model(args.model_in)
    params = GrpoParams(group_size=args.group_size, epochs=args.epochs,
                        clip_eps=args.clip, kl_coeff=args.kl,
                        learning_rate=args.lr, batch_size=args.batch_size,
                        temperature=args.temperature)
    reward_params = RewardParams(invalid_penalty=args.invalid_penalty)
    model, logs = training.run_grpo(model, samples, params, reward_params,
                                    args.seed)
    log_lines = [json.dumps(row) for row in logs]
    for line in log_lines:
        print(line)
    if args.log:
        Path(args.log).write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    policy.save_model(model, args.out, _config_echo(args))
    return 0


# --------------------------------------------------------------------------
# evaluation / prediction

def cmd_eval(args) -> int:
    if (args.model is None) == (args.baseline is None):
        raise UsageError("exactly one of --model or --baseline is required")
    if args.baseline and not args.pois:
        raise UsageError("--baseline needs --pois (the retrieval database)")
    samples = dataset.read_jsonl(args.data)
    if args.model:
        model = policy.load_model(args.model)
        predictor = evaluate.make_model_predictor(model, args.beam)
        expected_length = model.sequence_length
    else:
        pois = dataset.read_pois(args.pois)
        predictor = evaluate.make_baseline_predictor(args.baseline, pois,
                                                     args.geohash_len)
        expected_length = args.geohash_len
    report, rows = evaluate.run_eval(samples, predictor, expected_length)
    out = Path(args.out)
    evaluate.write_report(out, report, _config_echo(args))
    records_path = Path(args.records) if args.records else \
        out.with_suffix(".records.jsonl")
    evaluate.write_records(records_path, rows)
    print(json.dumps(report.to_dict()))
    return 0


def cmd_predict(args) -> int:
    model = policy.load_model(args.model)
    feats = model.featurize(args.query)
    width = args.beam or 1
    top = min(args.top or 1, width)
    for rank, (cell, log_prob) in enumerate(policy.beam_search(model, feats,
                                                               width, top)):
        center = geohash.decode_centroid(cell)
        print(json.dumps({"rank": rank, "geohash": cell,
                          "lat": center.lat, "lon": center.lon,
                          "log_prob": log_prob}))
    return 0


def cmd_render(args) -> int:
    args.seed = _resolve_seed(args.seed)
    model = policy.load_model(args.model)
    feats = model.featurize(args.query)
    top = min(args.top, args.width)
    beams = policy.beam_search(model, feats, args.width, top)
    features = []
    for rank, (cell, log_prob) in enumerate(beams):
        center = geohash.decode_centroid(cell)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [center.lon, center.lat]},
            "properties": {"rank": rank, "log_prob": log_prob, "geohash": cell},
        })
    doc = {"type": "FeatureCollection", "config_echo": _config_echo(args),
           "features": features}
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(features)} candidate points to {args.out}")
    return 0


# --------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(prog="geoseq", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geohash", help="codec utilities")
    gh = p.add_subparsers(dest="subcommand", required=True)
    enc = gh.add_parser("encode", help="encode a lat/lon to a geohash")
    enc.add_argument("--lat", type=float, required=True)
    enc.add_argument("--lon", type=float, required=True)
    enc.add_argument("--len", type=int, default=geohash.DEFAULT_LENGTH)
    enc.set_defaults(func=cmd_geohash_encode)
    dec = gh.add_parser("decode", help="decode a geohash to bbox + centroid")
    dec.add_argument("hash")
    dec.set_defaults(func=cmd_geohash_decode)

    p = sub.add_parser("dataset", help="synthesize POIs and build sample files")
    ds = p.add_subparsers(dest="subcommand", required=True)
    synth = ds.add_parser("synth", help="generate a procedural POI city")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--bbox", default="39.90,40.00,116.30,116.40",
                       help="lat_min,lat_max,lon_min,lon_max")
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_dataset_synth)
    build = ds.add_parser("build", help="build base + anchor-offset JSONL files")
    build.add_argument("--pois", required=True)
    build.add_argument("--out-dir", required=True)
    build.add_argument("--directions", choices=sorted(dataset.DIRECTION_SETS),
                       default="cardinal")
    build.add_argument("--offset-min", type=float, default=30.0)
    build.add_argument("--offset-max", type=float, default=500.0)
    build.add_argument("--sources", default="name,address",
                       help="comma list from name,address,query")
    build.add_argument("--cot", action="store_true",
                       help="fill base samples' thinking field")
    build.add_argument("--train-fraction", type=float, default=0.9)
    build.add_argument("--coverage-radius", type=float, default=500.0)
    build.add_argument("--geohash-len", type=int, default=geohash.DEFAULT_LENGTH)
    build.add_argument("--seed", type=int, default=None)
    build.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("train", help="SFT and GRPO training")
    tr = p.add_subparsers(dest="subcommand", required=True)
    sft = tr.add_parser("sft", help="maximum-likelihood training from scratch")
    sft.add_argument("--data", required=True)
    sft.add_argument("--epochs", type=int, default=30)
    sft.add_argument("--lr", type=float, default=0.5)
    sft.add_argument("--buckets", type=int, default=policy.DEFAULT_BUCKETS)
    sft.add_argument("--seed", type=int, default=None)
    sft.add_argument("--out", required=True)
    sft.set_defaults(func=cmd_train_sft)
    grpo = tr.add_parser("grpo", help="reward-driven refinement of an SFT model")
    grpo.add_argument("--data", required=True)
    grpo.add_argument("--model-in", required=True)
    grpo.add_argument("--out", required=True)
    grpo.add_argument("--group-size", type=int, default=8)
    grpo.add_argument("--epochs", type=int, default=3)
    grpo.add_argument("--clip", type=float, default=0.2)
    grpo.add_argument("--kl", type=float, default=0.0)
    grpo.add_argument("--lr", type=float, default=0.05)
    grpo.add_argument("--batch-size", type=int, default=64)
    grpo.add_argument("--temperature", type=float, default=1.0)
    grpo.add_argument("--invalid-penalty", type=float, default=-4.5)
    grpo.add_argument("--log", default=None, help="also write the epoch log here")
    grpo.add_argument("--seed", type=int, default=None)
    grpo.set_defaults(func=cmd_train_grpo)

    ev = sub.add_parser("eval", help="metrics over a sample file")
    ev.add_argument("--model", default=None)
    ev.add_argument("--baseline", choices=evaluate.BASELINE_NAMES, default=None)
    ev.add_argument("--pois", default=None, help="retrieval database for baselines")
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--records", default=None,
                    help="per-record JSONL path (default: <out>.records.jsonl)")
    ev.add_argument("--beam", type=int, default=None,
                    help="decode with this beam width instead of greedily")
    ev.add_argument("--geohash-len", type=int, default=geohash.DEFAULT_LENGTH)
    ev.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="geocode one query")
    pr.add_argument("--model", required=True)
    pr.add_argument("--query", required=True)
    pr.add_argument("--beam", type=int, default=None)
    pr.add_argument("--top", type=int, default=None)
    pr.set_defaults(func=cmd_predict)

    rn = sub.add_parser("render", help="beam candidates as GeoJSON points")
    rn.add_argument("--model", required=True)
    rn.add_argument("--query", required=True)
    rn.add_argument("--width", type=int, default=50)
    rn.add_argument("--top", type=int, default=50)
    rn.add_argument("--out", required=True)
    rn.add_argument("--seed", type=int, default=None)
    rn.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, policy.ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
