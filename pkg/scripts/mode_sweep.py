"""Test MAE against the number of M-mode images (supervised, full clips).

    python scripts/mode_sweep.py --modes 1,2,5,10 --out runs
"""

from _common import base_parser, dataset, save, seeds

from mmode_ef.train_eval import TrainConfig
from mmode_ef.train_eval.experiments import mode_sweep, rows_to_csv


def main():
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--modes", default="1,2,5,10")
    p.add_argument("--fusion", default="concat", choices=["early", "concat", "mean", "lstm"])
    p.add_argument("--epochs", type=int, default=30)
    args = p.parse_args()
    cfg = TrainConfig.desk(fusion=args.fusion, epochs_sup=args.epochs)
    rows = mode_sweep(dataset(args), [int(m) for m in args.modes.split(",")], seeds(args), cfg)
    print(rows_to_csv(rows), end="")
    print("wrote", save(args, f"mode_sweep_{args.fusion}", rows))


if __name__ == "__main__":
    main()
