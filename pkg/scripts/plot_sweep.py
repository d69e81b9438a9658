#!/usr/bin/env python3
"""Plot mean worst-case latency per method from a sweep CSV.

Usage: python3 scripts/plot_sweep.py results.csv out.png
"""

import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def main(csv_path, out_path):
    df = pd.read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, group in df.groupby("method"):
        stats = group.groupby("snr_db")["t_d"].agg(["mean", "sem"])
        ax.errorbar(stats.index, stats["mean"], yerr=stats["sem"], marker="o", label=method)
    ax.set_xlabel("Tx SNR (dB)")
    ax.set_ylabel("mean worst-case latency (s)")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    print(f"wrote {out_path}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
