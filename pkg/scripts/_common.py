"""Helpers shared by the experiment scripts."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

from mmode_ef.data_model import load_manifest
from mmode_ef.synth import synth_dataset


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--data", help="existing dataset directory with manifest.csv")
    p.add_argument("--n", type=int, default=857, help="patients to generate when --data is absent")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--out", default="runs", help="directory for the JSON result")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def dataset(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    if args.data:
        return load_manifest(Path(args.data) / "manifest.csv", args.data)
    out = Path(args.out) / f"synthetic_{args.n}_seed{args.data_seed}"
    if (out / "manifest.csv").exists():
        return load_manifest(out / "manifest.csv", out)
    return synth_dataset(args.n, (0.2, 0.8), args.data_seed, out)


def seeds(args) -> list[int]:
    return [int(s) for s in args.seeds.split(",")]


def save(args, name: str, obj) -> Path:
    path = Path(args.out) / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
