#!/usr/bin/env python3
"""Run an SNR x clutter-method metric sweep and optionally plot it.

    python3 scripts/run_sweep.py configs/two_path_sweep.json --plot sweep.png

Prints the per-(SNR, method) summary; ``--plot`` draws the four metrics
over SNR, one line per clutter method (needs matplotlib).
"""

import argparse
import math
import sys

from isacsim.dataset import metrics_to_csv
from isacsim.pipeline import RunConfig, metric_sweep

PANELS = (("p_d", "P_D (%)"), ("sinr_db", "SINR (dB)"),
          ("normalized_prominence", "normalized prominence"), ("isolation", "isolation (m^2)"))


def plot(summary, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(PANELS), figsize=(4 * len(PANELS), 3.2))
    methods = sorted({r["method"] for r in summary}, key=[m["method"] for m in summary].index)
    for ax, (key, label) in zip(axes, PANELS):
        for m in methods:
            rows = [r for r in summary if r["method"] == m]
            ys = [r[key] for r in rows]
            ax.plot([r["snr_db"] for r in rows], [y if math.isfinite(y) else math.nan for y in ys],
                    marker="o", label=m)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(label)
        if key == "isolation":
            ax.set_yscale("log")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("-o", "--output", help="output directory (default: from the config)")
    ap.add_argument("--plot", help="write a PNG of the metrics over SNR")
    args = ap.parse_args()
    summary = metric_sweep(RunConfig.load(args.config), args.output)
    metrics_to_csv(summary, sys.stdout)
    if args.plot:
        plot(summary, args.plot)


if __name__ == "__main__":
    main()
