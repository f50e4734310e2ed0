"""Classifier test accuracy as generator noise grows.

Writes ``noise_sweep.csv`` with one row per (noise level, seed).
"""

import argparse
import csv
import os

import numpy as np

from edgesac.classifier import ClassifierConfig, build_dataset, confusion_matrix, train_classifier


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", default="0,0.5,1,2,4,8")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--windows", type=int, default=100, help="windows per class")
    parser.add_argument("--architecture", choices=("mlp", "conv1d"), default="mlp")
    parser.add_argument("--out", default="runs/noise_sweep")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    levels = [float(x) for x in args.levels.split(",")]
    rows = []
    for noise in levels:
        accs = []
        for seed in range(args.seeds):
            train, test = build_dataset(args.windows, 0.7, noise, seed=seed, raw=args.architecture == "conv1d")
            model, _ = train_classifier(train, ClassifierConfig(architecture=args.architecture, seed=seed))
            acc = confusion_matrix(model, test).overall
            accs.append(acc)
            rows.append([noise, seed, repr(acc)])
        print(f"noise {noise:4.1f}: median accuracy {np.median(accs):.3f} (min {min(accs):.3f})")
    with open(os.path.join(args.out, "noise_sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["noise_level", "seed", "accuracy"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
