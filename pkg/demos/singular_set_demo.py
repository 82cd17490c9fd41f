"""Singular set of the cylindrical field in three dimensions.

Estimates the Minkowski dimension slope of the branching line and checks
that the frequency is constant along it.
"""

import numpy as np

from qvalued.builtin import builtin_field
from qvalued.covering import FieldOracle, Plane, minkowski_content_estimate, spine_frequency_constancy
from qvalued.grids import RegularGrid


def main():
    f = builtin_field("cylinder3")
    rhos = [0.02, 0.04, 0.08]
    reach = 0.125 + max(rhos) + 0.005
    grid = RegularGrid.with_spacing(f.center - reach, f.center + reach, 0.005)
    rec = minkowski_content_estimate(f, grid, rhos)
    print(f"tube volumes {', '.join(f'{v:.3e}' for v in rec.volumes)}")
    print(f"log-log slope {rec.slope:.3f} (codimension 2 gives 2)")

    V = Plane(np.zeros(3), [[0.0, 0.0, 1.0]])
    spread = spine_frequency_constancy(FieldOracle(f), V, [0.25, 0.5, 1.0], samples=5)
    print(f"frequency spread along the spine: {spread:.1e}")


if __name__ == "__main__":
    main()
