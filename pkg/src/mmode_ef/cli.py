"""Command-line entry point ``mmode-ef``.

Every training or evaluation command writes ``report.json`` (metrics, config
echo, seed, checkpoint hashes) and, where predictions exist,
``predictions.csv`` into ``--out``.  Reports carry no timestamps, so a rerun
with the same seed and one worker reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from mmode_ef.data_model import load_manifest, load_video
from mmode_ef.errors import MModeError
from mmode_ef.mmode_gen import ClipPolicy, extract_stack, write_stack
from mmode_ef.model import ModelBundle
from mmode_ef.synth import synth_dataset
from mmode_ef.tensor_nn import checkpoint
from mmode_ef.train_eval import experiments
from mmode_ef.train_eval.bench import bench
from mmode_ef.train_eval.config import TrainConfig, load_config
from mmode_ef.train_eval.data import StackStore
from mmode_ef.train_eval.training import evaluate, finetune, pretrain_contrastive, train_supervised

log = logging.getLogger("mmode_ef")

CKPT_NAME = "model.mmck"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, labels: bool = True):
    videos = args.videos or Path(args.manifest).parent
    return load_manifest(args.manifest, videos, labels=labels)


def _config(args) -> TrainConfig:
    overrides = {k: getattr(args, k, None) for k in ("seed", "M", "fusion", "clip", "workers")}
    overrides["label_fraction"] = getattr(args, "fraction", None)
    return load_config(args.config, **overrides)


def _ckpt_info(path: Path) -> dict:
    return {"checkpoint": path.name, "checkpoint_sha256": checkpoint.content_hash(path),
            "checkpoint_git_blob": checkpoint.git_blob_hash(path)}


def _save(bundle: ModelBundle, out: Path, config: TrainConfig, kind: str) -> dict:
    path = out / CKPT_NAME
    bundle.save(path, {"train_config": config.to_dict(), "kind": kind})
    return _ckpt_info(path)


def _finish(out: Path, command: str, config: TrainConfig, report=None, history=None, ckpt=None) -> dict:
    doc = {"command": command, "seed": config.seed, "config": config.to_dict()}
    if ckpt:
        doc.update(ckpt)
    if report is not None:
        doc["metrics"] = report.metrics()
        (out / "predictions.csv").write_text(report.predictions_csv(), encoding="utf-8")
    if history is not None:
        doc["history"] = history.to_dict()
    _write_json(out / "report.json", doc)
    if report is not None:
        print(json.dumps(report.metrics(), sort_keys=True))
    return doc


# commands -------------------------------------------------------------------

def cmd_synth(args) -> int:
    manifest = synth_dataset(args.n, (args.ef_min, args.ef_max), args.seed, args.out,
                             t=args.frames, noise_sigma=args.noise)
    print(f"wrote {len(manifest)} videos to {args.out}")
    return 0


def cmd_extract(args) -> int:
    manifest = _manifest(args, labels=False)
    out = _out_dir(args)
    start = time.perf_counter()
    for i, record in enumerate(manifest.records):
        video = load_video(manifest.video_path(record), record.patient_id)
        stack = extract_stack(video, args.M, ClipPolicy(args.clip), seed=args.seed + i)
        write_stack(stack, out)
    elapsed = time.perf_counter() - start
    n = len(manifest.records)
    print(f"extracted {n} stacks in {elapsed:.2f}s ({n / max(elapsed, 1e-9):.1f} videos/s)")
    return 0


def cmd_train(args) -> int:
    config, manifest, out = _config(args), _manifest(args), _out_dir(args)
    bundle, history = train_supervised(manifest, config)
    ckpt = _save(bundle, out, config, "supervised")
    _finish(out, "train", config, evaluate(bundle, manifest, args.split, config), history, ckpt)
    return 0


def cmd_pretrain(args) -> int:
    config, out = _config(args), _out_dir(args)
    manifest = _manifest(args, labels=False)
    bundle, history = pretrain_contrastive(manifest, config)
    _finish(out, "pretrain", config, history=history, ckpt=_save(bundle, out, config, "contrastive"))
    return 0


def cmd_finetune(args) -> int:
    config, manifest, out = _config(args), _manifest(args), _out_dir(args)
    bundle, history = finetune(manifest, args.ckpt, config, args.freeze)
    ckpt = _save(bundle, out, config, "probe" if args.freeze else "finetune")
    ckpt["encoder_checkpoint_sha256"] = checkpoint.content_hash(args.ckpt)
    _finish(out, "finetune", config, evaluate(bundle, manifest, args.split, config), history, ckpt)
    return 0


def _bundle_and_config(args) -> tuple[ModelBundle, TrainConfig]:
    bundle = ModelBundle.load(args.ckpt)
    stored = bundle.meta.get("train_config")
    config = TrainConfig.from_mapping(stored) if stored else _config(args)
    if getattr(args, "workers", None):
        config = config.with_(workers=args.workers)
    return bundle, config


def cmd_eval(args) -> int:
    bundle, config = _bundle_and_config(args)
    manifest, out = _manifest(args), _out_dir(args)
    report = evaluate(bundle, manifest, args.split, config)
    _finish(out, "eval", config, report, ckpt=_ckpt_info(Path(args.ckpt)))
    return 0


def cmd_curve(args) -> int:
    config, manifest, out = _config(args), _manifest(args), _out_dir(args)
    fractions = [float(p) for p in args.fractions.split(",")]
    methods = args.methods.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = experiments.learning_curve(manifest, fractions, methods, seeds, config, out / "pretrain")
    _write_json(out / "report.json", {"command": "curve", "config": config.to_dict(), "rows": rows})
    (out / "curve.csv").write_text(experiments.rows_to_csv(rows), encoding="utf-8")
    print(experiments.rows_to_csv(rows), end="")
    return 0


def cmd_sweep(args) -> int:
    config, manifest, out = _config(args), _manifest(args), _out_dir(args)
    modes = [int(m) for m in args.modes.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = experiments.mode_sweep(manifest, modes, seeds, config)
    _write_json(out / "report.json", {"command": "sweep", "config": config.to_dict(), "rows": rows})
    (out / "sweep.csv").write_text(experiments.rows_to_csv(rows), encoding="utf-8")
    print(experiments.rows_to_csv(rows), end="")
    return 0


def cmd_bench(args) -> int:
    if args.ckpt:
        bundle, config = _bundle_and_config(args)
    else:
        config = _config(args)
        bundle = ModelBundle(config.model_config(), seed=config.seed)
    manifest = _manifest(args, labels=False)
    records = manifest.split(args.split) or manifest.records
    store = StackStore(manifest, config.M, config.workers)
    report = bench(bundle, store, records, config, args.batch_size, args.repeats)
    doc = {"command": "bench", "config": config.to_dict(), "cost": report.to_dict()}
    if args.out:
        _write_json(_out_dir(args) / "report.json", doc)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


# parser ---------------------------------------------------------------------

def _data_args(p, manifest_required: bool = True) -> None:
    p.add_argument("--manifest", required=manifest_required, help="manifest CSV")
    p.add_argument("--videos", "--in", dest="videos",
                   help="video directory (default: the manifest's directory)")


def _run_args(p, out_required: bool = True) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--M", type=int, help="number of M-mode images per video")
    p.add_argument("--fusion", choices=["early", "concat", "mean", "lstm"])
    p.add_argument("--clip", choices=[c.value for c in ClipPolicy])
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmode-ef", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known EF")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ef-min", type=float, default=0.2)
    p.add_argument("--ef-max", type=float, default=0.8)
    p.add_argument("--frames", type=int, default=112)
    p.add_argument("--noise", type=float, default=6.0, help="pixel noise std on the 0..255 scale")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="write M-mode stacks for every video in a manifest")
    _data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--M", "--modes", dest="M", type=int, default=10)
    p.add_argument("--clip", choices=[c.value for c in ClipPolicy], default="full")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_extract)

    for name, func, text in (("train", cmd_train, "supervised EF regression"),
                             ("pretrain", cmd_pretrain, "contrastive pre-training")):
        p = sub.add_parser(name, help=text)
        _data_args(p)
        _run_args(p)
        if name == "train":
            p.add_argument("--fraction", type=float, help="labeled fraction of the train split")
            p.add_argument("--split", default="test", help="split evaluated after training")
        p.set_defaults(func=func)

    p = sub.add_parser("finetune", help="train on top of a pre-trained encoder")
    _data_args(p)
    _run_args(p)
    p.add_argument("--ckpt", required=True, help="pre-training checkpoint")
    p.add_argument("--freeze", action="store_true", help="keep encoder weights fixed")
    p.add_argument("--fraction", type=float)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _data_args(p)
    _run_args(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="label-fraction learning curve over methods and seeds")
    _data_args(p)
    _run_args(p)
    p.add_argument("--fractions", default=",".join(str(f) for f in experiments.FRACTIONS))
    p.add_argument("--methods", default=",".join(experiments.METHODS))
    p.add_argument("--seeds", default=",".join(str(s) for s in experiments.SEEDS))
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("sweep", help="supervised runs over several mode counts")
    _data_args(p)
    _run_args(p)
    p.add_argument("--modes", default=",".join(str(m) for m in experiments.MODE_COUNTS))
    p.add_argument("--seeds", default=",".join(str(s) for s in experiments.SEEDS))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="parameter count, timings and memory estimate")
    _data_args(p)
    _run_args(p, out_required=False)
    p.add_argument("--ckpt", help="checkpoint (default: a freshly initialized model)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MModeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
