"""Regenerates the fixture data files. Run from this directory."""
import json

import numpy as np


def write_column(path, name, values, fmt="{:.6f}"):
    with open(path, "w") as f:
        f.write(name + "\n")
        for v in values:
            f.write(fmt.format(v) + "\n")


def gibbs(energy, sigma):
    w = np.exp(-np.asarray(energy) / sigma**2)
    return w / w.sum()


def qrse_density(x, mu, t, alpha, s):
    z = (x - mu) / t
    p = 1.0 / (1.0 + np.exp(-z))
    h = -(p * np.log(np.clip(p, 1e-300, None)) + (1 - p) * np.log(np.clip(1 - p, 1e-300, None)))
    k = h - np.tanh(z) * (x - alpha) / s
    w = np.exp(k - k.max())
    return w / w.sum()


def main():
    rng = np.random.default_rng(20240611)

    # Statistical mechanics: four levels, sigma = 2.
    q = gibbs([0.0, 1.0, 4.0, 9.0], 2.0)
    write_column("statmech_states.csv", "state", rng.choice(4, size=500, p=q), "{:d}")

    # Regression: y = 1 + 0.5 x + N(0, 0.3^2).
    x = rng.uniform(-2.0, 3.0, size=500)
    y = 1.0 + 0.5 * x + rng.normal(0.0, 0.3, size=500)
    with open("regression.csv", "w") as f:
        f.write("x,y\n")
        for a, b in zip(x, y):
            f.write(f"{a:.6f},{b:.6f}\n")

    # QRSE with alpha = mu: draw cells of a fine grid, jitter within the cell.
    edges = np.linspace(-12.0, 12.0, 4801)
    mid = 0.5 * (edges[1:] + edges[:-1])
    p = qrse_density(mid, 0.0, 0.5, 0.0, 1.0)
    cell = rng.choice(mid.size, size=2000, p=p)
    write_column("qrse.csv", "x", edges[cell] + rng.uniform(0.0, 1.0, size=2000) * (edges[1] - edges[0]))

    # Evidence: equilibrium data drawn from q_hat for penalties (0, 0.5, 2) at
    # sigma = 1, and data from an unrelated distribution.
    qh = gibbs([0.0, 0.5, 2.0], 1.0)
    write_column("evidence_equilibrium.csv", "state", rng.choice(3, size=1000, p=qh), "{:d}")
    write_column("evidence_far.csv", "state", rng.choice(3, size=1000, p=[0.1, 0.3, 0.6]), "{:d}")


if __name__ == "__main__":
    main()
