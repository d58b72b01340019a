"""Contrastive pre-training against supervised training with few labels.

Pre-trains on all training patients without labels, fine-tunes on a label
fraction and compares test AUROC with supervised training on the same labels.
``--curve`` runs every method over several fractions instead.

    python scripts/low_label.py --fraction 0.05 --out runs
    python scripts/low_label.py --curve 0.02,0.05,0.1 --methods E2E,CL+,CL+-freeze
"""

from _common import base_parser, dataset, save, seeds

from mmode_ef.train_eval import StackStore, TrainConfig
from mmode_ef.train_eval.experiments import learning_curve, rows_to_csv


def main():
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--curve", help="comma-separated label fractions")
    p.add_argument("--methods", default="E2E,CL+")
    p.add_argument("--epochs-sup", type=int, default=100)
    p.add_argument("--epochs-cl", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    args = p.parse_args()
    manifest = dataset(args)
    cfg = TrainConfig.desk(M=10, epochs_sup=args.epochs_sup, epochs_cl=args.epochs_cl,
                           warmup_epochs=args.warmup)
    fractions = [float(f) for f in args.curve.split(",")] if args.curve else [args.fraction]
    rows = learning_curve(manifest, fractions, args.methods.split(","), seeds(args), cfg,
                          f"{args.out}/pretrain", StackStore(manifest, cfg.M))
    print(rows_to_csv(rows), end="")
    for row in rows:
        print(row["method"], row["fraction"], "AUROC per seed:",
              " ".join(f"{v:.4f}" if v is not None else "n/a" for v in row["auroc"]))
    print("wrote", save(args, "low_label", rows))


if __name__ == "__main__":
    main()
