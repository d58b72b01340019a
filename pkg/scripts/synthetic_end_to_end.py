"""Supervised EF regression on the synthetic set: M=10, late concat fusion, 30 epochs.

    python scripts/synthetic_end_to_end.py --out runs
"""

import time

from _common import base_parser, dataset, save, seeds

from mmode_ef.train_eval import StackStore, TrainConfig, evaluate, train_supervised


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def main():
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--epochs", type=int, default=30)
    args = p.parse_args()
    manifest = dataset(args)
    store = StackStore(manifest, args.M)
    results = []
    for seed in seeds(args):
        cfg = TrainConfig.desk(M=args.M, epochs_sup=args.epochs, seed=seed)
        start = time.perf_counter()
        bundle, history = train_supervised(manifest, cfg, store)
        metrics = evaluate(bundle, manifest, "test", cfg, store).metrics()
        metrics.update(seed=seed, seconds=time.perf_counter() - start, best_epoch=history.best_epoch)
        results.append(metrics)
        print(f"seed {seed}: R2 {_fmt(metrics['r2'])}  MAE {metrics['mae']:.4f}  "
              f"AUROC {_fmt(metrics['auroc'])}  {metrics['seconds']:.0f}s", flush=True)
    print("wrote", save(args, f"end_to_end_M{args.M}", results))


if __name__ == "__main__":
    main()
