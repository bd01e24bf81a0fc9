"""Small width sweep: held-out loss of embedded vs split heads.

    python3 demos/width_sweep.py [--epochs 1000] [--widths 4,16,64]
"""

import argparse

from momentbnn import TrainConfig, run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--widths", default="4,16,64")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    widths = [int(w) for w in args.widths.split(",")]
    report = run_sweep(widths, ["embedded", "split"], TrainConfig(epochs=args.epochs),
                       workers=args.workers)
    print(f"{'width':>5} {'mode':>9} {'params':>7} {'best val':>9} {'in-dist':>9} {'off-dist':>9}")
    for c in report.cells:
        print(f"{c.width:5d} {c.mode:>9} {c.param_count:7d} {c.best_val_nll:9.4f} "
              f"{c.in_dist_nll:9.4f} {c.out_dist_nll:9.4f}")
    for width, won in report.embedded_wins().items():
        print(f"H={width}: embedded wins in-distribution: {won}")


if __name__ == "__main__":
    main()
