"""Unordered Q-tuples of vectors and closed-form Q-valued fields.

A :class:`MultiPoint` stores ``Q`` vectors of ``R^n`` as a ``(Q, n)`` array;
row order is a representation detail and every public operation is
invariant under row permutations.

The analytic fields are branched holomorphic maps of the plane,

    u(z) = { sum_k c_k * w**p_k : w**Q = z },

viewed as maps ``R^2 -> A_Q(R^2)``, together with their cylindrical
extensions to ``R^m`` (constant in the last ``m - 2`` coordinates) and
translates.  Values and Jacobians are exact; branch ``j`` always uses the
root ``w_j = |z|**(1/Q) * exp(i (arg z + 2 pi j) / Q)`` with
``arg z`` in ``(-pi, pi]``, so values and Jacobians returned for the same
point are paired consistently.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from .errors import InputError, SingularPointError

__all__ = [
    "MultiPoint",
    "ClusterSplit",
    "metric_distance",
    "optimal_matching",
    "eta",
    "balance",
    "cluster_split",
    "AnalyticField",
    "PlanarBranch",
    "CylindricalExtension",
    "Shifted",
    "evaluate",
    "gradient",
    "is_q_point",
    "q_point_mask",
    "field_from_dict",
    "field_to_dict",
]

EXHAUSTIVE_MAX_Q = 8


# ---------------------------------------------------------------------------
# Q-points


@dataclass(frozen=True, eq=False)
class MultiPoint:
    """An unordered Q-tuple of points of ``R^n``.

    Parameters
    ----------
    values : array_like, shape (Q, n)
        The Q vectors.  Their order carries no meaning.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InputError(f"MultiPoint needs a (Q, n) array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def q(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def repeated(cls, point, q: int) -> "MultiPoint":
        """Return ``Q [[point]]``."""
        point = np.asarray(point, dtype=float).ravel()
        return cls(np.tile(point, (q, 1)))

    def norm(self) -> float:
        """``|T| = (sum_i |P_i|^2)^(1/2)``, the distance to ``Q [[0]]``."""
        return float(np.sqrt(np.sum(self.values**2)))

    def permuted(self, perm) -> "MultiPoint":
        return MultiPoint(self.values[np.asarray(perm)])

    def __repr__(self):
        pts = " + ".join(f"[[{tuple(np.round(v, 6).tolist())}]]" for v in self.values)
        return f"MultiPoint({pts})"


@lru_cache(maxsize=None)
def _permutations(q: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(q))), dtype=np.intp)


def _check_compatible(a: MultiPoint, b: MultiPoint):
    if a.q != b.q or a.n != b.n:
        raise InputError(
            f"incompatible Q-points: (Q={a.q}, n={a.n}) vs (Q={b.q}, n={b.n})"
        )


def optimal_matching(a: MultiPoint, b: MultiPoint) -> np.ndarray:
    """Permutation ``sigma`` minimizing ``sum_i |a_i - b_sigma(i)|^2``.

    Exhaustive search for ``Q <= 8``, Hungarian algorithm above.
    """
    _check_compatible(a, b)
    cost = np.sum((a.values[:, None, :] - b.values[None, :, :]) ** 2, axis=-1)
    q = a.q
    if q <= EXHAUSTIVE_MAX_Q:
        perms = _permutations(q)
        totals = cost[np.arange(q), perms].sum(axis=1)
        return perms[np.argmin(totals)].copy()
    rows, cols = linear_sum_assignment(cost)
    return cols[np.argsort(rows)]


def metric_distance(a: MultiPoint, b: MultiPoint) -> float:
    """Distance in ``A_Q(R^n)``: the best matching of the two tuples."""
    sigma = optimal_matching(a, b)
    return float(np.sqrt(np.sum((a.values - b.values[sigma]) ** 2)))


def eta(a: MultiPoint) -> np.ndarray:
    """Average of the Q values."""
    return a.values.mean(axis=0)


def balance(a: MultiPoint) -> MultiPoint:
    """Subtract the average from every value, so that ``eta`` vanishes."""
    return MultiPoint(a.values - eta(a))


@dataclass(frozen=True)
class ClusterSplit:
    """Decomposition of a Q-point into well separated sub-tuples.

    ``separation`` is the smallest distance between values lying in
    different parts (``inf`` for a single part).
    """

    parts: tuple
    separation: float

    @property
    def multiplicities(self):
        return tuple(p.q for p in self.parts)


def cluster_split(a: MultiPoint, delta: float) -> ClusterSplit:
    """Single-linkage split of ``a`` at linkage distance ``delta``.

    Values at distance ``<= delta`` (directly or through a chain) end up in
    the same part.  Parts are listed in order of their first value.
    """
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    diff = a.values[:, None, :] - a.values[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    ncomp, labels = connected_components(dist <= delta, directed=False)
    order = []
    for lab in labels:
        if lab not in order:
            order.append(lab)
    parts = tuple(MultiPoint(a.values[labels == lab]) for lab in order)
    if ncomp == 1:
        return ClusterSplit(parts, math.inf)
    cross = labels[:, None] != labels[None, :]
    return ClusterSplit(parts, float(dist[cross].min()))


# ---------------------------------------------------------------------------
# analytic fields


class AnalyticField:
    """Closed-form Q-valued map ``R^m -> A_Q(R^2)``.

    Subclasses implement batched :meth:`values` and :meth:`jacobians`.
    """

    q: int
    m: int
    n = 2
    #: trailing coordinates along which the field is constant
    invariant_dims = 0
    #: the field is given on ``B_domain_radius(domain_center)``
    domain_radius: float = 64.0

    def values(self, y) -> np.ndarray:
        """Branch values at points ``y`` of shape ``(..., m)``; returns ``(..., Q, 2)``."""
        raise NotImplementedError

    def jacobians(self, y) -> np.ndarray:
        """Branch Jacobians ``(..., Q, 2, m)``; NaN on the branch set."""
        raise NotImplementedError

    def branch_points(self) -> np.ndarray:
        """Branch points in the planar coordinates, shape ``(k, 2)``."""
        raise NotImplementedError

    @property
    def domain_center(self) -> np.ndarray:
        return np.zeros(self.m)

    @property
    def center(self) -> np.ndarray:
        """A distinguished point: the branch point (on the spine for m >= 3)."""
        c = np.zeros(self.m)
        bp = self.branch_points()
        if len(bp):
            c[:2] = bp[0]
        return c

    @property
    def degrees(self):
        """Homogeneity degrees ``p/Q`` of the terms."""
        return self.planar.degrees

    @property
    def planar(self) -> "PlanarBranch":
        raise NotImplementedError

    def contains_ball(self, x, r) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(x - self.domain_center) + r <= self.domain_radius)

    def qpoint_tolerance(self, h: float) -> float:
        """Detection threshold for Q-points on a grid of spacing ``h``.

        The size of ``|u|`` at distance ``0.75 h`` from the branch set, as
        dictated by the lowest-degree term.  Grid nodes closer than about
        ``0.75 h`` to a Q-point are flagged.
        """
        terms = self.planar.terms
        if not terms:
            return 0.0
        p, c = min(terms, key=lambda t: t[0])
        return math.sqrt(self.q) * abs(c) * (0.75 * h) ** (p / self.q)

    def to_dict(self) -> dict:
        return field_to_dict(self)


@dataclass(frozen=True, eq=False)
class PlanarBranch(AnalyticField):
    """``u(z) = {sum_k c_k w^p_k : w^Q = z}`` on ``R^2 = C``.

    Parameters
    ----------
    q : int
        Number of values (and branching order).
    terms : sequence of (int, complex)
        Powers ``p >= 1`` and coefficients.  For ``Q >= 2`` no power may be
        a multiple of ``Q`` (such a term would add a single-valued
        holomorphic part and break ``eta(u) = 0``).
    """

    q: int
    terms: tuple = field(default=())
    domain_radius: float = 64.0

    def __post_init__(self):
        q = int(self.q)
        if q < 1:
            raise InputError(f"Q must be >= 1, got {self.q}")
        terms = []
        for t in self.terms:
            p, c = t
            if int(p) != p or p < 1:
                raise InputError(f"powers must be positive integers, got {p}")
            if q >= 2 and int(p) % q == 0:
                raise InputError(
                    f"power {p} is a multiple of Q={q}: the field would not be balanced"
                )
            terms.append((int(p), complex(c)))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "terms", tuple(terms))

    m = 2

    @property
    def planar(self):
        return self

    @property
    def degrees(self):
        return tuple(p / self.q for p, _ in self.terms)

    def branch_points(self):
        if self.q >= 2:
            return np.zeros((1, 2))
        return np.zeros((0, 2))

    def _roots(self, y):
        y = np.asarray(y, dtype=float)
        rad = np.hypot(y[..., 0], y[..., 1])
        th = np.arctan2(y[..., 1], y[..., 0])
        # arctan2 returns -pi for (-x, -0.0); fold onto +pi so arg is in (-pi, pi]
        th = np.where(th == -np.pi, np.pi, th)
        ang = (th[..., None] + 2 * np.pi * np.arange(self.q)) / self.q
        return rad, ang

    def complex_values(self, y) -> np.ndarray:
        rad, ang = self._roots(y)
        out = np.zeros(ang.shape, dtype=complex)
        for p, c in self.terms:
            out += c * rad[..., None] ** (p / self.q) * np.exp(1j * p * ang)
        return out

    def complex_derivatives(self, y) -> np.ndarray:
        """Holomorphic derivative of each branch; NaN at a branch point."""
        rad, ang = self._roots(y)
        out = np.zeros(ang.shape, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for p, c in self.terms:
                a = p / self.q
                out += c * a * rad[..., None] ** (a - 1) * np.exp(1j * (p - self.q) * ang)
        if self.q >= 2:
            out[rad == 0] = np.nan
        return out

    def values(self, y):
        w = self.complex_values(y)
        return np.stack([w.real, w.imag], axis=-1)

    def jacobians(self, y):
        d = self.complex_derivatives(y)
        a, b = d.real, d.imag
        row0 = np.stack([a, -b], axis=-1)
        row1 = np.stack([b, a], axis=-1)
        return np.stack([row0, row1], axis=-2)


@dataclass(frozen=True, eq=False)
class CylindricalExtension(AnalyticField):
    """``u(x_1, ..., x_m) = base(x_1, x_2)``; invariant in the last ``m - 2`` coordinates."""

    base: PlanarBranch
    m: int = 3
    domain_radius: float = 64.0

    def __post_init__(self):
        if not isinstance(self.base, PlanarBranch):
            raise InputError("a cylindrical extension needs a planar base field")
        if int(self.m) < 3:
            raise InputError(f"cylindrical extension needs m >= 3, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def q(self):
        return self.base.q

    @property
    def invariant_dims(self):
        return self.m - 2

    @property
    def planar(self):
        return self.base

    def branch_points(self):
        return self.base.branch_points()

    def values(self, y):
        y = np.asarray(y, dtype=float)
        return self.base.values(y[..., :2])

    def jacobians(self, y):
        y = np.asarray(y, dtype=float)
        jac = self.base.jacobians(y[..., :2])
        pad = np.zeros(jac.shape[:-1] + (self.m - 2,))
        return np.concatenate([jac, pad], axis=-1)


@dataclass(frozen=True, eq=False)
class Shifted(AnalyticField):
    """``u(x) = inner(x - offset)``."""

    inner: AnalyticField
    offset: tuple = ()

    def __post_init__(self):
        off = np.asarray(self.offset, dtype=float).ravel()
        if off.shape != (self.inner.m,):
            raise InputError(
                f"offset must have {self.inner.m} components, got {off.shape[0]}"
            )
        object.__setattr__(self, "offset", tuple(off.tolist()))

    @property
    def _off(self):
        return np.asarray(self.offset)

    @property
    def q(self):
        return self.inner.q

    @property
    def m(self):
        return self.inner.m

    @property
    def invariant_dims(self):
        return self.inner.invariant_dims

    @property
    def domain_radius(self):
        return self.inner.domain_radius

    @property
    def domain_center(self):
        return self.inner.domain_center + self._off

    @property
    def planar(self):
        return self.inner.planar

    def branch_points(self):
        return self.inner.branch_points() + self._off[:2]

    def values(self, y):
        return self.inner.values(np.asarray(y, dtype=float) - self._off)

    def jacobians(self, y):
        return self.inner.jacobians(np.asarray(y, dtype=float) - self._off)


# ---------------------------------------------------------------------------
# point-wise API


def _point(f: AnalyticField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (f.m,):
        raise InputError(f"expected a point of R^{f.m}, got shape {x.shape}")
    return x


def evaluate(f: AnalyticField, x) -> MultiPoint:
    """The Q-point ``f(x)``.  At a branch point this is ``Q [[0]]``."""
    return MultiPoint(f.values(_point(f, x)))


def gradient(f: AnalyticField, x) -> list:
    """Per-branch Jacobians (``2 x m``), in the same branch order as :func:`evaluate`.

    Raises
    ------
    SingularPointError
        If ``x`` lies on the branch set.
    """
    jac = f.jacobians(_point(f, x))
    if not np.all(np.isfinite(jac)):
        raise SingularPointError(f"field is not differentiable at {tuple(np.ravel(x))}")
    return [j for j in jac]


def is_q_point(f: AnalyticField, x, tol: float) -> bool:
    """Whether ``|f(x)| <= tol``, i.e. ``f(x)`` is within ``tol`` of ``Q [[0]]``."""
    return evaluate(f, x).norm() <= tol


def q_point_mask(f: AnalyticField, pts, tol: float) -> np.ndarray:
    """Vectorized :func:`is_q_point` over an ``(N, m)`` array."""
    vals = f.values(np.asarray(pts, dtype=float))
    return np.sqrt(np.sum(vals**2, axis=(-2, -1))) <= tol


# ---------------------------------------------------------------------------
# structured-text form


def field_to_dict(f: AnalyticField) -> dict:
    if isinstance(f, PlanarBranch):
        return {
            "kind": "planar_branch",
            "Q": f.q,
            "terms": [{"p": p, "re": c.real, "im": c.imag} for p, c in f.terms],
        }
    if isinstance(f, CylindricalExtension):
        return {"kind": "cylinder", "base": field_to_dict(f.base), "m": f.m}
    if isinstance(f, Shifted):
        return {"kind": "shifted", "base": field_to_dict(f.inner), "offset": list(f.offset)}
    raise InputError(f"cannot serialize {type(f).__name__}")


def field_from_dict(d: dict) -> AnalyticField:
    """Inverse of :func:`field_to_dict`."""
    try:
        kind = d["kind"]
        if kind == "planar_branch":
            terms = [(t["p"], complex(t.get("re", 0.0), t.get("im", 0.0))) for t in d["terms"]]
            return PlanarBranch(int(d["Q"]), tuple(terms))
        if kind == "cylinder":
            return CylindricalExtension(field_from_dict(d["base"]), int(d.get("m", 3)))
        if kind == "shifted":
            return Shifted(field_from_dict(d["base"]), tuple(d["offset"]))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed field description: {exc!r}") from exc
    raise InputError(f"unknown field kind {d.get('kind')!r}")
