"""Mean flatness of discrete measures.

Compares the eigenvalue formula with direct minimization, then contrasts
Jones sums on a smooth arc and on a four-corner Cantor set.
"""

import numpy as np

from qvalued.meanflat import (
    DiscreteMeasure,
    beta_bruteforce,
    beta_k,
    dyadic_scales,
    jones_integral,
    jones_terms,
)


def main():
    rng = np.random.default_rng(1)
    mu = DiscreteMeasure(0.4 * rng.standard_normal((30, 3)), rng.random(30))
    for k in range(3):
        a = beta_k(mu, np.zeros(3), 1.0, k).value
        b = beta_bruteforce(mu, np.zeros(3), 1.0, k)
        print(f"k={k}: eigenvalues {a:.10f}  minimization {b:.10f}")

    th = np.linspace(0, np.pi / 2, 256)
    arc = DiscreteMeasure(np.c_[np.cos(th), np.sin(th)], np.full(256, (np.pi / 2) / 256))
    print(f"\nquarter arc Jones sum: {jones_integral(arc, arc.points[128], 1, dyadic_scales(1.0, 8)):.4f}")

    pts = np.zeros((1, 2))
    for _ in range(6):
        pts = np.vstack([pts / 4 + np.array(c) * 0.75 for c in [(0, 0), (1, 0), (0, 1), (1, 1)]])
    cantor = DiscreteMeasure(pts, np.full(len(pts), 1 / len(pts)))
    terms = jones_terms(cantor, pts[0], 1, dyadic_scales(1.0, 8))
    print("Cantor set terms per scale: " + " ".join(f"{t:.4f}" for t in terms))


if __name__ == "__main__":
    main()
