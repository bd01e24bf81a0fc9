"""Train embedded and split heads on the noisy line and compare their
predictive variance with the true noise level.

    python3 demos/heteroscedastic_fit.py [--epochs 3000] [--width 128]
"""

import argparse

import numpy as np

from momentbnn import Architecture, TrainConfig, fit, noise_sigma_squared


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=3000)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    x = np.array([-1.5, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 1.5])
    print(f"{'x':>6} {'true var':>9}", end="")
    preds = {}
    for mode in ("embedded", "split"):
        result = fit(Architecture((args.width,), head_mode=mode), cfg)
        ckpt = result.checkpoint
        print(f" {mode + ' var':>13}", end="")
        preds[mode] = (ckpt, ckpt.to_network().predict(x))
    print()
    for i, xi in enumerate(x):
        true = noise_sigma_squared(xi) if abs(xi) <= 0.5 else float("nan")
        print(f"{xi:6.2f} {true:9.4f}", end="")
        for mode in preds:
            print(f" {preds[mode][1].var_total[i]:13.4f}", end="")
        print()
    for mode, (ckpt, _) in preds.items():
        print(f"{mode}: best validation nll {ckpt.best_val_nll:.4f} at epoch {ckpt.epoch}")


if __name__ == "__main__":
    main()
