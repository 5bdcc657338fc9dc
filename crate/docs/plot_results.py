#!/usr/bin/env python3
"""Plot the figure tables emitted by `bayesinv report`.

Usage:
    python3 docs/plot_results.py <bundle_dir>/figures [output.png]

Convenience only; nothing in the test suite depends on this script.
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader]
    return header, np.array(rows)


def main():
    figures = Path(sys.argv[1])
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else figures / "summary.png"

    fig, axes = plt.subplots(2, 3, figsize=(15, 8))

    _, basis = read_csv(figures / "basis_curves.csv")
    ax = axes[0][0]
    for j in np.unique(basis[:, 1]):
        sel = basis[basis[:, 1] == j]
        ax.plot(sel[:, 0], sel[:, 2], lw=0.8)
    ax.set_title("basis functions")
    ax.set_xlabel("r [fm]")

    _, score = read_csv(figures / "score_map.csv")
    ax = axes[0][1]
    ls = np.unique(score[:, 0]).astype(int)
    ks = np.unique(score[:, 1]).astype(int)
    img = np.full((len(ks), len(ls)), np.nan)
    for l, k, v in score:
        img[int(k) - ks[0], np.where(ls == int(l))[0][0]] = v
    pcm = ax.imshow(img, origin="lower", aspect="auto",
                    extent=[ls[0] - 0.5, ls[-1] + 0.5, ks[0] - 0.5, ks[-1] + 0.5])
    fig.colorbar(pcm, ax=ax)
    ax.set_title("score over (order, family)")
    ax.set_xlabel("family index l")
    ax.set_ylabel("order k")

    _, fam = read_csv(figures / "family_posterior.csv")
    ax = axes[0][2]
    ax.bar(fam[:, 0], fam[:, 1])
    ax.set_title("family weights")
    ax.set_xlabel("l")

    _, orders = read_csv(figures / "order_posterior.csv")
    ax = axes[1][0]
    ax.bar(orders[:, 0], orders[:, 1])
    ax.set_title("order weights at the selected family")
    ax.set_xlabel("k")

    _, dens = read_csv(figures / "density_overlay.csv")
    ax = axes[1][1]
    ax.plot(dens[:, 0], dens[:, 1], label="truth")
    ax.plot(dens[:, 0], dens[:, 2], "--", label="estimate")
    ax.set_title("density")
    ax.set_xlabel("r [fm]")
    ax.legend()

    _, spec = read_csv(figures / "form_factor_overlay.csv")
    ax = axes[1][2]
    ax.plot(spec[:, 0], spec[:, 4], "o", label="log10 |F| data")
    ax.plot(spec[:, 0], spec[:, 5], "x", label="log10 |F| fit")
    ax.set_title("form factor")
    ax.set_xlabel("q [1/fm]")
    ax.legend()

    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
