"""Plot a `kfdr simulate` CSV: one line per procedure, metric against n1 (or rho).

    python scripts/plot_sweep.py sweep.csv --metric avg_power --x n1 -o power.png
"""

import argparse
import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("--metric", default="avg_power", choices=["avg_power", "kfdr", "kfwer"])
    ap.add_argument("--x", default="n1", choices=["n1", "rho", "n", "k"])
    ap.add_argument("-o", "--output")
    args = ap.parse_args()

    series = defaultdict(list)
    with open(args.csv, newline="") as f:
        for row in csv.DictReader(f):
            if row[args.x] == "":
                continue
            series[row["procedure"]].append(
                (float(row[args.x]), float(row[args.metric]), float(row["se_" + args.metric.replace("avg_", "")]))
            )

    fig, ax = plt.subplots()
    for name, pts in sorted(series.items()):
        pts.sort()
        xs, ys, ses = zip(*pts)
        ax.errorbar(xs, ys, yerr=[2 * s for s in ses], marker="o", capsize=2, label=name)
    ax.set_xlabel(args.x)
    ax.set_ylabel(args.metric)
    ax.legend()
    if args.output:
        fig.savefig(args.output, dpi=150, bbox_inches="tight")
    else:
        plt.show()


if __name__ == "__main__":
    main()
