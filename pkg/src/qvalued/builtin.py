"""Named test fields used throughout the checks and the command line.

Every built-in field is balanced (``eta(u) = 0``) and is a branched
holomorphic map, hence stationary for the Dirichlet energy.
"""

from __future__ import annotations

from .errors import InputError
from .multifield import CylindricalExtension, PlanarBranch, Shifted

__all__ = ["BUILTIN_FIELDS", "builtin_field", "builtin_names", "SINGLE_TERM_CASES"]

#: ``(p, Q)`` pairs of the single-term fields, with frequency ``p/Q`` at the origin
SINGLE_TERM_CASES = ((1, 2), (3, 2), (1, 3), (2, 3))

MIXED_TERMS = ((1, 1.0), (3, 0.2))


def _single(p, q):
    return PlanarBranch(q, ((p, 1.0),))


BUILTIN_FIELDS = {
    "q2_branch": lambda: _single(1, 2),
    "q2_cubic": lambda: _single(3, 2),
    "q3_branch": lambda: _single(1, 3),
    "q3_quadratic": lambda: _single(2, 3),
    "mixed": lambda: PlanarBranch(2, MIXED_TERMS),
    "cylinder3": lambda: CylindricalExtension(_single(1, 2), 3),
    "shifted_mixed": lambda: Shifted(PlanarBranch(2, MIXED_TERMS), (0.03, -0.02)),
}


def builtin_names():
    return tuple(BUILTIN_FIELDS)


def builtin_field(name: str):
    """Construct the built-in field called ``name``."""
    try:
        return BUILTIN_FIELDS[name]()
    except KeyError:
        raise InputError(f"unknown built-in field {name!r}; choose from {', '.join(BUILTIN_FIELDS)}") from None
