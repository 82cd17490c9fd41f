"""Regular grids used by scans and discretizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class RegularGrid:
    """Tensor grid with ``shape[i]`` nodes from ``lower[i]`` to ``upper[i]`` (inclusive)."""

    lower: tuple
    upper: tuple
    shape: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.ravel(self.lower))
        hi = tuple(float(v) for v in np.ravel(self.upper))
        sh = tuple(int(v) for v in np.ravel(self.shape))
        if not (len(lo) == len(hi) == len(sh)):
            raise ParameterError("grid bounds and shape must have equal length")
        if any(n < 1 for n in sh) or any(b < a for a, b in zip(lo, hi)):
            raise ParameterError("grid needs upper >= lower and at least one node per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "shape", sh)

    @classmethod
    def cube(cls, center, half_width: float, n: int) -> "RegularGrid":
        """``n`` nodes per axis on ``center + [-half_width, half_width]^m``."""
        c = np.asarray(center, dtype=float).ravel()
        return cls(tuple(c - half_width), tuple(c + half_width), (n,) * len(c))

    @classmethod
    def with_spacing(cls, lower, upper, h: float) -> "RegularGrid":
        """Grid of spacing ``h`` starting at ``lower``, covering ``upper``."""
        lo = np.asarray(lower, dtype=float).ravel()
        hi = np.asarray(upper, dtype=float).ravel()
        n = np.ceil((hi - lo) / h - 1e-9).astype(int) + 1
        return cls(tuple(lo), tuple(lo + (n - 1) * h), tuple(n))

    @property
    def m(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def axes(self):
        return [np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.shape)]

    @property
    def spacing(self) -> np.ndarray:
        return np.array(
            [(b - a) / (n - 1) if n > 1 else 0.0 for a, b, n in zip(self.lower, self.upper, self.shape)]
        )

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)
