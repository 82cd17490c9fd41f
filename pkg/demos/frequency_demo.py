"""Frequency of branched Q-valued fields.

Prints the smoothed frequency of the built-in fields at a few radii, then
the identity residuals that tie D, H and E together.
"""

import numpy as np

from qvalued.builtin import BUILTIN_FIELDS, builtin_field
from qvalued.frequency import frequency_I, frequency_profile, identity_residuals


def main():
    print("field            r=0.25     r=0.5      r=1")
    for name in BUILTIN_FIELDS:
        f = builtin_field(name)
        vals = [frequency_I(f, f.center, r).I for r in (0.25, 0.5, 1.0)]
        print(f"{name:15s} " + " ".join(f"{v:9.6f}" for v in vals))

    f = builtin_field("mixed")
    prof = frequency_profile(f, [0, 0], np.linspace(0.05, 1.0, 8))
    print("\nmixed field, I(0, r) is nondecreasing:")
    for rep in prof:
        print(f"  r={rep.r:.3f}  I={rep.I:.6f}")

    res = identity_residuals(builtin_field("q3_branch"), [0.1, 0.05], 0.5)
    print("\nidentity residuals for q3_branch at (0.1, 0.05), r=0.5:")
    print(f"  pairing {res.pairing:.1e}, D' {res.d_radial:.1e}, H' {res.h_radial:.1e}")


if __name__ == "__main__":
    main()
