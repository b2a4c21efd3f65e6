"""Regenerate the bundled toy CSVs (deterministic)."""

import csv
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "crispforge" / "data"


def write(name, header, rows):
    with open(OUT / name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240501)
    x1, x2 = rng.normal(size=150), rng.normal(size=150)
    noise = rng.normal(scale=0.6, size=150)
    label = np.where(x1 + 0.5 * x2 + noise > 0, "yes", "no")
    write("toy_classification.csv", ["x1", "x2", "label"],
          [[f"{a:.4f}", f"{b:.4f}", c] for a, b, c in zip(x1, x2, label)])

    r1, r2 = rng.uniform(0, 10, size=150), rng.uniform(0, 10, size=150)
    y = 3 * r1 - 2 * r2 + 5 + rng.normal(scale=0.5, size=150)
    write("toy_regression.csv", ["x1", "x2", "y"],
          [[f"{a:.4f}", f"{b:.4f}", f"{c:.4f}"] for a, b, c in zip(r1, r2, y)])

    write("nb_toy.csv", ["outlook", "windy", "play"],
          [["sunny", "no", "yes"], ["sunny", "yes", "yes"], ["rainy", "yes", "no"], ["rainy", "no", "yes"]])


if __name__ == "__main__":
    main()
