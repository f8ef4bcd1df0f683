"""Plot CLI outputs: a fault-study or run CSV, or a ks sweep CSV.

    python scripts/plot_results.py out/fault_generalized.csv
    python scripts/plot_results.py out/sweep.csv --save sweep.png
"""
import argparse
import csv

import matplotlib.pyplot as plt
import numpy as np

from gfm3ph.cli import read_run_csv


def plot_sweep(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ks = np.array([float(r["ks"]) for r in rows])
    fig, ax = plt.subplots()
    for name in ("Vuf", "Puf", "Quf"):
        ax.plot(ks, [float(r[name]) for r in rows], "o-", label=name)
    ax.set_xscale("symlog", linthresh=0.1)  # keeps ks = 0 on the axis
    ax.set_xlabel("ks (p.u.)")
    ax.legend()
    return fig


def plot_run(path):
    d = read_run_csv(path)
    fig, axes = plt.subplots(5, 1, sharex=True, figsize=(7, 9))
    for ax, name, label in zip(axes, ("v", "V", "I", "P", "Q"),
                               ("v (p.u.)", "|V| (p.u.)", "|I| (p.u.)", "P (p.u.)", "Q (p.u.)")):
        ax.plot(d["t"], d[name], lw=0.8)
        ax.set_ylabel(label)
    axes[0].legend(["a", "b", "c"], ncol=3, loc="upper right")
    axes[-1].set_xlabel("t (s)")
    return fig


def main():
    p = argparse.ArgumentParser()
    p.add_argument("csv")
    p.add_argument("--save")
    args = p.parse_args()
    with open(args.csv) as fh:
        header = fh.readline().strip()
    fig = plot_sweep(args.csv) if header == "ks,Vuf,Puf,Quf" else plot_run(args.csv)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
