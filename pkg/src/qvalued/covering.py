"""Spine predicates, good/bad-ball coverings and packing diagnostics.

The covering algorithms work on a finite point set ``D`` (a discretized
piece of the Q-point set) and query frequencies ``I(y, r)`` through a
:class:`FrequencyOracle`.  Oracles are either backed by an analytic field
or synthetic (tabulated or callable), which lets the combinatorics run
without quadrature cost.

Scales of the intermediate cover are ``tau * (10 rho)^j``.  A ball
``B_r(x)`` at the current finest scale is *good* when the set::

    F = D ∩ B_r(x) ∩ {y : I(y, rho r) > U - delta}

``rho r``-spans an (m-2)-plane; good balls are refined, every other ball
is kept.  Ball containment is closed (``|p - c| <= r``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from .errors import CoverageError, CoveringLogicError, InputError, ParameterError
from .grids import RegularGrid
from .meanflat import DiscreteMeasure, beta_k
from .multifield import q_point_mask

__all__ = [
    "FrequencyOracle",
    "FieldOracle",
    "FunctionOracle",
    "TableOracle",
    "Plane",
    "Ball",
    "CoveringResult",
    "PackingAudit",
    "ReifenbergRecord",
    "MinkowskiRecord",
    "TelescopingRecord",
    "rho_linearly_independent",
    "spans_k_plane",
    "tube_fallback",
    "greedy_centers",
    "intermediate_cover",
    "final_cover",
    "minkowski_cover_driver",
    "reifenberg_hypothesis_check",
    "packing_verify",
    "minkowski_content_estimate",
    "spine_frequency_constancy",
    "telescoping_check",
    "covering_constant",
    "DEFAULT_DELTA",
    "DEFAULT_RHO",
    "DEFAULT_DELTA0",
]

DEFAULT_DELTA = 0.05
DEFAULT_RHO = 0.01
DEFAULT_DELTA0 = 0.01  # delta0^2 = 1e-4
CONTAIN_TOL = 1e-12


def covering_constant(m: int) -> float:
    """``C(m) = 6^m``, used in the tube and split counts."""
    return 6.0**m


def _threads():
    try:
        return max(1, int(os.environ.get("QVALUED_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# oracles


class FrequencyOracle:
    """Source of frequency values ``I(y, r)``."""

    m: int
    name = "oracle"

    def __call__(self, y, r: float) -> float:
        raise NotImplementedError

    def many(self, points, r: float) -> np.ndarray:
        """Values at each row of ``points``; evaluated in order of rows."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            return np.zeros(0)
        return np.array([self(p, r) for p in pts], dtype=float)

    def fresh(self) -> "FrequencyOracle":
        """An independent oracle with the same values (no shared cache)."""
        return self

    def describe(self) -> dict:
        return {"kind": self.name, "m": self.m}


class FieldOracle(FrequencyOracle):
    """Frequencies of an analytic field, cached by ``(point, radius)`` rounded to ``cache_tol``."""

    name = "field"

    def __init__(self, f, phi=None, q=None, *, cache_tol: float = 1e-9, workers: int = None):
        self.f = f
        self.phi = phi
        self.q = q
        self.m = f.m
        self.cache_tol = cache_tol
        self.workers = workers or _threads()
        self._cache = {}
        self.calls = 0
        self.hits = 0

    def _key(self, y, r):
        t = self.cache_tol
        return tuple(np.round(np.asarray(y, dtype=float) / t).astype(np.int64).tolist()) + (round(r / t),)

    def _compute(self, y, r):
        from .frequency import frequency_I

        return frequency_I(self.f, y, r, self.phi, self.q, with_error=False).I

    def __call__(self, y, r):
        key = self._key(y, r)
        if key in self._cache:
            self.hits += 1
            return self._cache[key]
        self.calls += 1
        val = self._compute(np.asarray(y, dtype=float), float(r))
        self._cache[key] = val
        return val

    def many(self, points, r):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            return np.zeros(0)
        keys = [self._key(p, r) for p in pts]
        todo = {k: p for k, p in zip(keys, pts) if k not in self._cache}
        if todo:
            items = list(todo.items())
            if self.workers > 1 and len(items) > 1:
                with ThreadPoolExecutor(max_workers=self.workers) as ex:
                    vals = list(ex.map(lambda kp: self._compute(kp[1], float(r)), items))
            else:
                vals = [self._compute(p, float(r)) for _, p in items]
            for (k, _), v in zip(items, vals):
                self._cache[k] = v
            self.calls += len(items)
        self.hits += len(keys) - len(todo)
        return np.array([self._cache[k] for k in keys])

    def fresh(self):
        return FieldOracle(self.f, self.phi, self.q, cache_tol=self.cache_tol, workers=self.workers)

    def describe(self):
        return {"kind": self.name, "m": self.m, "field": self.f.to_dict()}


class FunctionOracle(FrequencyOracle):
    """Synthetic oracle from a callable ``func(y, r)``."""

    name = "function"

    def __init__(self, func, m: int, label: str = "synthetic"):
        self.func = func
        self.m = int(m)
        self.label = label

    def __call__(self, y, r):
        return float(self.func(np.asarray(y, dtype=float), float(r)))

    def describe(self):
        return {"kind": self.name, "m": self.m, "label": self.label}

    @classmethod
    def constant(cls, m: int, value: float) -> "FunctionOracle":
        return cls(lambda y, r: value, m, f"constant {value}")


class TableOracle(FrequencyOracle):
    """Tabulated ``I(y, r)`` on a tensor grid, multilinear in ``(y, r)``.

    Queries outside the table are clamped to its bounding box.  Axes with a
    single node are constant directions.

    Parameters
    ----------
    axes : sequence of 1-d arrays
        Node coordinates for ``y_1, ..., y_m`` and finally ``r``.
    values : ndarray
        Array of shape ``tuple(len(a) for a in axes)``.
    """

    name = "table"

    def __init__(self, axes, values, source=None):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.source = source
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise InputError("table values do not match the axes")
        for a in self.axes:
            if len(a) > 1 and np.any(np.diff(a) <= 0):
                raise InputError("table axes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise InputError("table values must be finite")
        if self.values.shape[-1] > 1:
            dr = np.diff(self.values, axis=-1)
            if np.any(dr < -1e-12):
                bad = np.argwhere(dr < -1e-12)[0]
                where = tuple(float(self.axes[i][j]) for i, j in enumerate(bad[:-1]))
                raise InputError(
                    f"table frequency decreases in r at y={where}, "
                    f"r={self.axes[-1][bad[-1]]} -> {self.axes[-1][bad[-1] + 1]}"
                )
        self.m = len(self.axes) - 1

    @classmethod
    def from_rows(cls, rows, source=None) -> "TableOracle":
        """Build from rows ``(y_1, ..., y_m, r, I)`` covering a full tensor grid."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] < 3:
            raise InputError("table rows need at least one coordinate, a radius and a value")
        coords = rows[:, :-1]
        axes = [np.unique(coords[:, i]) for i in range(coords.shape[1])]
        shape = tuple(len(a) for a in axes)
        if int(np.prod(shape)) != len(rows):
            raise InputError(
                f"table rows do not form a full grid: {len(rows)} rows for axes of sizes {shape}"
            )
        idx = tuple(np.searchsorted(a, coords[:, i]) for i, a in enumerate(axes))
        values = np.full(shape, np.nan)
        values[idx] = rows[:, -1]
        if np.any(np.isnan(values)):
            raise InputError("table rows contain duplicate grid nodes")
        return cls(axes, values, source)

    def to_rows(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        cols = [g.ravel() for g in mesh] + [self.values.ravel()]
        return np.stack(cols, axis=-1)

    def _interp(self, q):
        # q: (N, m + 1), clamped multilinear interpolation
        vals = self.values
        out_idx = []
        weights = []
        for i, a in enumerate(self.axes):
            x = np.clip(q[:, i], a[0], a[-1])
            if len(a) == 1:
                out_idx.append((np.zeros(len(q), int), np.zeros(len(q), int)))
                weights.append(np.zeros(len(q)))
                continue
            j = np.clip(np.searchsorted(a, x, side="right") - 1, 0, len(a) - 2)
            t = (x - a[j]) / (a[j + 1] - a[j])
            out_idx.append((j, j + 1))
            weights.append(t)
        res = np.zeros(len(q))
        d = len(self.axes)
        for corner in range(1 << d):
            w = np.ones(len(q))
            ids = []
            for i in range(d):
                bit = (corner >> i) & 1
                ids.append(out_idx[i][bit])
                w = w * (weights[i] if bit else 1 - weights[i])
            res += w * vals[tuple(ids)]
        return res

    def __call__(self, y, r):
        q = np.append(np.asarray(y, dtype=float).ravel(), float(r))[None, :]
        return float(self._interp(q)[0])

    def many(self, points, r):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            return np.zeros(0)
        q = np.hstack([pts, np.full((len(pts), 1), float(r))])
        return self._interp(q)

    def describe(self):
        return {"kind": self.name, "m": self.m, "source": self.source, "shape": list(self.values.shape)}


# ---------------------------------------------------------------------------
# planes and spanning


@dataclass(frozen=True, eq=False)
class Plane:
    """Affine plane ``base + span(basis)``; ``basis`` has orthonormal rows."""

    base: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).ravel()
        basis = np.asarray(self.basis, dtype=float).reshape(-1, len(base))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def m(self) -> int:
        return len(self.base)

    def distances(self, points) -> np.ndarray:
        c = np.atleast_2d(np.asarray(points, dtype=float)) - self.base
        along = c @ self.basis.T
        return np.sqrt(np.clip(np.sum(c**2, axis=1) - np.sum(along**2, axis=1), 0.0, None))

    def sample(self, coords) -> np.ndarray:
        """Points ``base + coords @ basis``."""
        return self.base + np.atleast_2d(np.asarray(coords, dtype=float)) @ self.basis

    def to_dict(self):
        return {"base": self.base.tolist(), "basis": self.basis.tolist()}


def _residual(p, base, basis):
    c = p - base
    if len(basis):
        c = c - (c @ basis.T) @ basis
    return c


def rho_linearly_independent(pts, rho: float, r: float) -> bool:
    """Whether ``x_i`` stays ``rho r`` away from ``x_0 + span{x_1 - x_0, ..., x_{i-1} - x_0}`` for all ``i >= 1``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if len(pts) == 0:
        raise ParameterError("linear independence needs a nonempty point list")
    thr = rho * r
    basis = np.zeros((0, pts.shape[1]))
    for p in pts[1:]:
        res = _residual(p, pts[0], basis)
        nrm = float(np.linalg.norm(res))
        if nrm < thr:
            return False
        basis = np.vstack([basis, res / nrm])
    return True


def _lex_order(points):
    pts = np.atleast_2d(points)
    if pts.size == 0:
        return np.zeros(0, dtype=int)
    return np.lexsort(pts.T[::-1])


def _greedy_span(F, thr, kmax):
    """Greedy chain of ``thr``-independent points, at most ``kmax + 1`` long."""
    order = _lex_order(F)
    x0 = F[order[0]]
    chosen = [int(order[0])]
    basis = np.zeros((0, F.shape[1]))
    while len(chosen) <= kmax:
        c = F - x0
        if len(basis):
            c = c - (c @ basis.T) @ basis
        d = np.linalg.norm(c, axis=1)
        j = int(np.argmax(d))
        if d[j] < thr:
            break
        chosen.append(j)
        basis = np.vstack([basis, c[j] / d[j]])
    return chosen, Plane(x0, basis)


def spans_k_plane(F, x, r: float, rho: float, k: int):
    """The k-plane ``rho r``-spanned greedily by ``F``, or ``None``.

    Starting from the lexicographically first point, repeatedly add the
    point farthest from the current affine span as long as that distance is
    at least ``rho r``.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.size == 0 or k < 0:
        return None
    chosen, plane = _greedy_span(F, rho * r, k)
    return plane if plane.dim == k else None


def tube_fallback(F, x, r: float, rho: float, k: int) -> Plane:
    """A plane ``L`` of dimension at most ``k - 1`` with ``F`` inside ``B_{rho r}(L)``.

    Raises
    ------
    ParameterError
        If ``F`` does span a k-plane.
    CoveringLogicError
        If the containment check fails.
    """
    x = np.asarray(x, dtype=float).ravel()
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.size == 0:
        return Plane(x, np.zeros((0, len(x))))
    chosen, plane = _greedy_span(F, rho * r, k)
    if plane.dim >= k:
        raise ParameterError(f"the set rho*r-spans a {k}-plane; no tube fallback applies")
    worst = float(plane.distances(F).max())
    if not worst < rho * r:
        raise CoveringLogicError(f"tube containment failed: max distance {worst} >= {rho * r}")
    return plane


# ---------------------------------------------------------------------------
# balls and results


@dataclass(frozen=True)
class Ball:
    """A covering ball.

    ``tag`` is ``good`` or ``bad`` (intermediate cover), ``floor`` (radius
    at the stopping scale) or ``drop`` (certified frequency drop).
    """

    center: tuple
    radius: float
    scale_index: int
    tag: str

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(v) for v in np.ravel(self.center)))

    def contains(self, points, tol=CONTAIN_TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) <= self.radius * (1 + tol)


@dataclass
class CoveringResult:
    """Balls covering a point set with the decomposition ``A_i`` of the points.

    ``assigned[i]`` holds indices into ``points`` of the set ``A_i`` carried
    by ``balls[i]``; the sets partition the points.
    """

    points: np.ndarray
    balls: list
    assigned: list
    x: tuple
    r: float
    rounds: int = 0
    drop_log: list = field(default_factory=list)
    kappa: int = 0
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def packing_sum(self) -> float:
        return float(sum(b.radius ** (self.m - 2) for b in self.balls))

    @property
    def normalized_packing(self) -> float:
        return self.packing_sum / self.r ** (self.m - 2)

    def __len__(self):
        return len(self.balls)

    def radii(self) -> np.ndarray:
        return np.array([b.radius for b in self.balls])

    def tags(self):
        return [b.tag for b in self.balls]


def greedy_centers(points, radius: float, order=None):
    """Greedy Vitali selection: scan ``points`` (lexicographic by default) and
    make a point a new center when it lies farther than ``radius`` from all
    centers so far.

    Returns the selected row indices and, for every point, the index (into
    the selection) of the first center covering it.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts) if pts.size else 0
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    order = _lex_order(pts) if order is None else np.asarray(order)
    centers = []
    tree_pts = []
    owner = np.full(n, -1)
    lim = radius * (1 + CONTAIN_TOL)
    for i in order:
        p = pts[i]
        if tree_pts:
            d = np.linalg.norm(np.asarray(tree_pts) - p, axis=1)
            if d.min() <= lim:
                continue
        centers.append(int(i))
        tree_pts.append(p)
    cen = pts[centers]
    tree = cKDTree(cen)
    # first (in selection order) center within reach
    hits = tree.query_ball_point(pts, lim)
    for i, h in enumerate(hits):
        owner[i] = min(h)
    return np.array(centers, dtype=int), owner


# ---------------------------------------------------------------------------
# intermediate cover


@dataclass
class _BallRec:
    center: np.ndarray
    radius: float
    j: int
    tag: str
    members: np.ndarray
    F: np.ndarray = None
    L: Plane = None
    V: Plane = None


def _scales(tau, sigma, rho):
    radii = [tau]
    while radii[-1] > sigma:
        radii.append(radii[-1] * 10 * rho)
        if len(radii) > 10_000:
            raise CoveringLogicError("scale ladder does not reach sigma")
    return radii


def _check_rho(rho):
    if not 0 < rho <= 0.01 + 1e-15:
        raise ParameterError(f"rho must lie in (0, 1/100], got {rho}")


def _members(P, idx, center, radius):
    if len(idx) == 0:
        return idx
    d = np.linalg.norm(P[idx] - center, axis=1)
    return idx[d <= radius * (1 + CONTAIN_TOL)]


def _intermediate(P, idx, oracle, x, tau, sigma, rho, delta, U):
    """Core of :func:`intermediate_cover` on the subset ``P[idx]``."""
    m = P.shape[1]
    radii = _scales(tau, sigma, rho)
    kappa = len(radii) - 1
    kept = []
    current = [_BallRec(np.asarray(x, float), tau, 0, "pending", idx)]
    stats = {"tube_violations": 0, "good": 0, "bad": 0, "kappa": kappa}
    for k in range(kappa):
        r = radii[k]
        goods = []
        for ball in current:
            mem = _members(P, idx, ball.center, r)
            vals = oracle.many(P[mem], rho * r)
            F = mem[vals > U - delta]
            V = spans_k_plane(P[F], ball.center, r, rho, m - 2) if len(F) else None
            if V is None:
                L = tube_fallback(P[F], ball.center, r, rho, m - 2) if m >= 2 else None
                kept.append(_BallRec(ball.center, r, k, "bad", mem, F, L))
                stats["bad"] += 1
            else:
                goods.append((ball, V, mem))
                stats["good"] += 1
        if not goods:
            current = []
            break
        pool = np.unique(np.concatenate([g[2] for g in goods]))
        for ball, V, mem in goods:
            stats["tube_violations"] += int(np.sum(V.distances(P[mem]) > rho * r))
        r1 = radii[k + 1]
        sel, _ = greedy_centers(P[pool], r1)
        new = []
        for c in P[pool[sel]]:
            if all(np.linalg.norm(c - kb.center) >= r1 + kb.radius / 5 for kb in kept):
                new.append(_BallRec(c, r1, k + 1, "pending", None))
        current = new
    floors = [_BallRec(b.center, radii[kappa], kappa, "floor", _members(P, idx, b.center, radii[kappa])) for b in current]
    return kept + floors, stats, radii


def _disjoint_shrunk(recs):
    for i in range(len(recs)):
        for j in range(i + 1, len(recs)):
            a, b = recs[i], recs[j]
            if np.linalg.norm(a.center - b.center) < (a.radius + b.radius) / 5 - 1e-15:
                return False
    return True


def _sup(oracle, pts, r):
    return float(np.max(oracle.many(pts, r))) if len(pts) else -math.inf


def _as_points(D, m=None):
    P = np.asarray(D, dtype=float)
    if P.size == 0:
        if m is None and P.ndim == 2:
            m = P.shape[1]
        return np.zeros((0, m or 0))
    return np.atleast_2d(P)


def intermediate_cover(D, oracle, x, tau, sigma, rho=DEFAULT_RHO, delta=DEFAULT_DELTA, *, U=None) -> CoveringResult:
    """Good/bad-ball cover of ``D`` down to scale ``sigma``.

    Every returned ball has radius ``tau (10 rho)^j`` and is either a kept
    ``bad`` ball with radius above ``sigma`` (its F-set lies in a
    ``rho r``-tube around an (m-3)-plane) or a ``floor`` ball at the first
    scale not exceeding ``sigma``.  Refinement balls are centered at points
    of ``D`` and have pairwise disjoint concentric balls shrunk by 1/5.

    ``info`` records ``U``, the scale ladder, the numbers of good and bad
    balls and ``tube_violations``: points of a good ball farther than
    ``rho r`` from the spanned plane (these are covered all the same).
    """
    _check_rho(rho)
    if not 0 < sigma < tau:
        raise ParameterError(f"need 0 < sigma < tau, got sigma={sigma}, tau={tau}")
    x = np.asarray(x, dtype=float).ravel()
    P = _as_points(D, len(x))
    if len(P) and np.any(np.linalg.norm(P - x, axis=1) > tau * (1 + 1e-9)):
        raise ParameterError("the point set must lie in B_tau(x)")
    idx = np.arange(len(P))
    if len(P) == 0:
        return CoveringResult(P, [], [], tuple(x), float(tau), info={"U": None})
    if U is None:
        U = _sup(oracle, P, tau)
    recs, stats, radii = _intermediate(P, idx, oracle, x, tau, sigma, rho, delta, U)
    assigned = _first_owner(P, recs)
    balls = [Ball(rc.center, rc.radius, rc.j, rc.tag) for rc in recs]
    info = dict(stats, U=U, radii=radii, disjoint=_disjoint_shrunk(recs),
                F=[rc.F for rc in recs], L=[rc.L for rc in recs])
    return CoveringResult(P, balls, assigned, tuple(x), float(tau), rounds=stats["kappa"], drop_log=[U],
                          kappa=stats["kappa"], info=info)


def _first_owner(P, recs):
    owner = np.full(len(P), -1)
    for i, rc in enumerate(recs):
        inside = np.linalg.norm(P - rc.center, axis=1) <= rc.radius * (1 + CONTAIN_TOL)
        owner[(owner < 0) & inside] = i
    if np.any(owner < 0):
        raise CoveringLogicError(f"{int(np.sum(owner < 0))} points left uncovered by the intermediate cover")
    return [np.flatnonzero(owner == i) for i in range(len(recs))]


# ---------------------------------------------------------------------------
# final cover


@dataclass
class _FinalOut:
    floor_idx: np.ndarray
    drops: list  # (center, radius, idx)
    U: float
    levels: int
    stats: dict


def _final(P, idx, oracle, x, r, s, delta, rho):
    m = P.shape[1]
    U = _sup(oracle, P[idx], r)
    cm = covering_constant(m)
    tube_bound = math.ceil(cm * rho ** (3 - m))
    split_bound = math.ceil(cm * rho ** (-m))
    floor_idx = []
    drops = []
    stats = {"max_tube_count": 0, "max_split_count": 0, "tube_violations": 0, "lemma_calls": 0,
             "tube_bound": tube_bound, "split_bound": split_bound}
    queue = [(np.asarray(x, float), r, idx)]
    levels = 0
    while queue:
        levels += 1
        nxt = []
        for c, tau, sub in queue:
            if len(sub) == 0:
                continue
            stats["lemma_calls"] += 1
            U_l = _sup(oracle, P[sub], tau)
            recs, st, _ = _intermediate(P, sub, oracle, c, tau, s, rho, delta, U_l)
            stats["tube_violations"] += st["tube_violations"]
            bad = [rc for rc in recs if rc.tag == "bad"]
            flo = [rc for rc in recs if rc.tag == "floor"]
            pts = P[sub]
            in_floor = np.zeros(len(sub), bool)
            for rc in flo:
                in_floor |= np.linalg.norm(pts - rc.center, axis=1) <= rc.radius * (1 + CONTAIN_TOL)
            floor_idx.append(sub[in_floor])
            rest = ~in_floor
            aprime = [[] for _ in bad]
            tube = [[] for _ in bad]
            for loc in np.flatnonzero(rest):
                g = sub[loc]
                home = None
                for bi, rc in enumerate(bad):
                    if np.linalg.norm(P[g] - rc.center) <= rc.radius * (1 + CONTAIN_TOL) and g not in set(rc.F.tolist()):
                        home = ("a", bi)
                        break
                if home is None:
                    for bi, rc in enumerate(bad):
                        if np.linalg.norm(P[g] - rc.center) <= rc.radius * (1 + CONTAIN_TOL):
                            home = ("t", bi)
                            break
                if home is None:
                    raise CoveringLogicError(f"point {P[g].tolist()} escaped the intermediate cover")
                (aprime if home[0] == "a" else tube)[home[1]].append(g)
            for bi, rc in enumerate(bad):
                ri = rc.radius
                # A'_i: frequency already dropped at scale rho r_i
                A = np.array(aprime[bi], dtype=int)
                if len(A):
                    sel, owner = greedy_centers(P[A], rho * ri)
                    stats["max_split_count"] = max(stats["max_split_count"], len(sel))
                    if len(sel) > split_bound:
                        raise CoveringLogicError(f"split needs {len(sel)} > {split_bound} balls")
                    for k, ci in enumerate(sel):
                        piece = A[owner == k]
                        if rho * ri <= s:
                            floor_idx.append(piece)
                        else:
                            drops.append((P[A[ci]], rho * ri, piece))
                T = np.array(tube[bi], dtype=int)
                if len(T):
                    sel, owner = greedy_centers(P[T], 4 * rho * ri)
                    stats["max_tube_count"] = max(stats["max_tube_count"], len(sel))
                    if len(sel) > tube_bound:
                        raise CoveringLogicError(f"tube cover needs {len(sel)} > {tube_bound} balls")
                    for k, ci in enumerate(sel):
                        piece = T[owner == k]
                        if 4 * rho * ri < s:
                            floor_idx.append(piece)
                        else:
                            nxt.append((P[T[ci]], 4 * rho * ri, piece))
        queue = nxt
    fl = np.unique(np.concatenate(floor_idx)) if floor_idx else np.zeros(0, int)
    return _FinalOut(fl, drops, U, levels, stats)


def _floor_balls(P, floor_idx, s):
    if len(floor_idx) == 0:
        return [], []
    sel, owner = greedy_centers(P[floor_idx], s)
    balls = [Ball(P[floor_idx[c]], s, 0, "floor") for c in sel]
    sets = [floor_idx[owner == k] for k in range(len(sel))]
    return balls, sets


def _audit_drops(oracle, P, drops, U, delta):
    fresh = oracle.fresh()
    worst = -math.inf
    for c, rad, piece in drops:
        sup = _sup(fresh, P[piece], rad)
        worst = max(worst, sup)
        if sup > U - delta + 1e-12:
            raise CoveringLogicError(f"drop certificate failed: sup I = {sup} > U - delta = {U - delta}")
    return worst


def final_cover(D, oracle, x, r, s, delta=DEFAULT_DELTA, *, rho=DEFAULT_RHO) -> CoveringResult:
    """Cover ``D ⊂ B_r(x)`` by balls ``B_{s_i}(x_i)`` with ``s_i >= s`` and sets ``A_i``.

    Each ball is either a ``floor`` ball (``s_i = s``) or a ``drop`` ball
    whose set satisfies ``sup_{A_i} I(y, s_i) <= U - delta`` with
    ``U = sup_D I(y, r)``; drops are re-audited with an independent oracle.
    Bad balls of the intermediate cover pass their F-sets to a tube
    refinement by balls of radius ``4 rho r_i``; the rest ``A'_i`` is split
    into balls of radius ``rho r_i``.  Floor sets are re-covered greedily by
    balls of radius ``s``.

    ``info['C_V']`` is the realized ratio ``packing_sum / r^(m-2)``.
    """
    _check_rho(rho)
    if not 0 < s < r:
        raise ParameterError(f"need 0 < s < r, got s={s}, r={r}")
    x = np.asarray(x, dtype=float).ravel()
    P = _as_points(D, len(x))
    if len(P) == 0:
        return CoveringResult(P, [], [], tuple(x), float(r), info={"C_V": 0.0})
    if np.any(np.linalg.norm(P - x, axis=1) > r * (1 + 1e-9)):
        raise ParameterError("the point set must lie in B_r(x)")
    out = _final(P, np.arange(len(P)), oracle, x, r, s, delta, rho)
    balls, sets = _floor_balls(P, out.floor_idx, s)
    worst = _audit_drops(oracle, P, out.drops, out.U, delta)
    for c, rad, piece in out.drops:
        balls.append(Ball(c, rad, 0, "drop"))
        sets.append(piece)
    res = CoveringResult(P, balls, sets, tuple(x), float(r), rounds=out.levels, drop_log=[out.U])
    res.info.update(out.stats, U=out.U, drop_sup=worst, C_V=res.normalized_packing,
                    geometric_ratio=covering_constant(P.shape[1]) * rho)
    _check_partition(res)
    return res


def _check_partition(res):
    seen = np.zeros(len(res.points), int)
    for b, a in zip(res.balls, res.assigned):
        if len(a) and not np.all(b.contains(res.points[a])):
            raise CoveringLogicError("a set A_i is not contained in its ball")
        seen[a] += 1
    if np.any(seen != 1):
        raise CoveringLogicError("the sets A_i do not partition the points")


# ---------------------------------------------------------------------------
# driver


def minkowski_cover_driver(D, oracle, rho_target, *, delta=DEFAULT_DELTA, rho=DEFAULT_RHO, x=None, r=None,
                           consolidate=True) -> CoveringResult:
    """Iterate :func:`final_cover` on drop sets until every ball has radius ``rho_target``.

    The top ball defaults to the smallest ball around the bounding-box
    midpoint containing ``D``.  Each round lowers the frequency supremum of
    every remaining set by ``delta``, so at most ``floor(U0/delta) + 1``
    rounds run; exceeding this raises :class:`CoveringLogicError`.

    With ``consolidate`` the union of floor balls is re-covered greedily by
    balls of radius ``rho_target`` centered at points of ``D``; the raw
    count is kept in ``info['raw_count']``.
    """
    if not rho_target > 0:
        raise ParameterError(f"rho_target must be positive, got {rho_target}")
    _check_rho(rho)
    P = _as_points(D, None if x is None else len(np.ravel(x)))
    if len(P) == 0:
        m = P.shape[1] if P.ndim == 2 else 0
        return CoveringResult(P, [], [], tuple(np.zeros(m)), float(r or rho_target), info={"N": 0})
    if x is None:
        x = 0.5 * (P.min(axis=0) + P.max(axis=0))
    x = np.asarray(x, dtype=float).ravel()
    if r is None:
        r = float(np.max(np.linalg.norm(P - x, axis=1)))
    r = max(float(r), rho_target)
    m = P.shape[1]
    U0 = _sup(oracle, P, r)
    kappa = math.floor(U0 / delta) + 1 if U0 >= 0 else 1
    info = {"U0": U0, "delta": delta, "rho": rho, "rho_target": rho_target}
    if r <= rho_target * (1 + 1e-12):
        balls = [Ball(x, rho_target, 0, "floor")]
        res = CoveringResult(P, balls, [np.arange(len(P))], tuple(x), r, rounds=0, drop_log=[U0],
                             kappa=kappa, info=dict(info, N=1, raw_count=1, C_V=[]))
        return res
    pending = [(x, r, np.arange(len(P)))]
    floor_idx = []
    raw_balls = []
    rounds = 0
    drop_log = []
    cvs = []
    while pending:
        rounds += 1
        if rounds > kappa:
            raise CoveringLogicError(f"frequency-drop iteration exceeded {kappa} rounds")
        nxt = []
        Us = []
        for c, rad, idx in pending:
            out = _final(P, idx, oracle, c, rad, rho_target, delta, rho)
            _audit_drops(oracle, P, out.drops, out.U, delta)
            Us.append(out.U)
            b, sets = _floor_balls(P, out.floor_idx, rho_target)
            raw_balls += b
            floor_idx.append(out.floor_idx)
            pk = len(b) * rho_target ** (m - 2) + sum(dd[1] ** (m - 2) for dd in out.drops)
            cvs.append(pk / rad ** (m - 2))
            nxt += [(dd[0], dd[1], dd[2]) for dd in out.drops]
        drop_log.append(max(Us))
        pending = nxt
    all_floor = np.unique(np.concatenate(floor_idx)) if floor_idx else np.zeros(0, int)
    if consolidate:
        balls, sets = _floor_balls(P, all_floor, rho_target)
    else:
        balls = raw_balls
        sets = _first_owner(P, [_BallRec(np.asarray(b.center), b.radius, 0, "floor", None) for b in balls])
    info.update(N=len(balls), raw_count=len(raw_balls), C_V=cvs, C_V_max=max(cvs) if cvs else 0.0)
    res = CoveringResult(P, balls, sets, tuple(x), float(r), rounds=rounds, drop_log=drop_log, kappa=kappa,
                         info=info)
    _check_partition(res)
    return res


# ---------------------------------------------------------------------------
# audits and diagnostics


@dataclass(frozen=True)
class PackingAudit:
    packing_sum: float
    normalized: float
    balls: int
    points: int
    covered: bool


def packing_verify(result: CoveringResult, m: int = None) -> PackingAudit:
    """Packing sum ``sum r_i^(m-2)``, its normalization by ``r^(m-2)`` and a coverage audit.

    Raises
    ------
    CoverageError
        Listing the input points outside every ball.
    """
    m = result.m if m is None else int(m)
    P = result.points
    covered = np.zeros(len(P), bool)
    for b in result.balls:
        covered |= b.contains(P)
    ps = float(sum(b.radius ** (m - 2) for b in result.balls))
    audit = PackingAudit(ps, ps / result.r ** (m - 2), len(result.balls), len(P), bool(np.all(covered)))
    if not audit.covered:
        missed = P[~covered]
        raise CoverageError(f"{len(missed)} of {len(P)} points are outside every ball", missed=missed, audit=audit)
    return audit


@dataclass(frozen=True)
class ReifenbergRecord:
    """Largest ratio ``int_{B_r(x)} int_0^r D^k(y,s) ds/s dmu(y) / r^k`` over the test grid."""

    max_ratio: float
    argmax_x: tuple
    argmax_r: float
    threshold: float
    passes: bool
    evaluations: int


def reifenberg_hypothesis_check(mu: DiscreteMeasure, k: int, delta0: float = DEFAULT_DELTA0, *, radii=None,
                                grid_step: float = 0.25, levels: int = 6) -> ReifenbergRecord:
    """Evaluate the integral hypothesis of the discrete Reifenberg theorem.

    ``mu`` has atoms ``s_j^k delta_{x_j}``; pass ``radii`` (the ``s_j``)
    when ``k = 0``.  Test balls ``B_r(x)`` have ``x`` on a grid of step
    ``grid_step`` in ``B_1`` (plus the atoms there), ``r = 2^-i`` for
    ``i < levels`` and ``B_r(x) ⊂ B_2``.  The inner integral is the dyadic
    sum ``sum_{s = r 2^-l} D^k_mu(y, s) ln 2``, stopped once ``B_s(y)``
    holds ``y`` alone.

    Raises
    ------
    InputError
        If two source balls overlap, or ``k > m``.
    """
    m = mu.m
    if not 0 <= k <= m:
        raise InputError(f"k must satisfy 0 <= k <= m, got {k}")
    pts, w = mu.points, mu.weights
    if radii is None:
        if k == 0:
            radii = np.zeros(len(pts))
        else:
            radii = w ** (1.0 / k)
    radii = np.asarray(radii, dtype=float)
    if len(pts) > 1:
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        np.fill_diagonal(dist, np.inf)
        gap = dist - (radii[:, None] + radii[None, :])
        if np.any(gap < -1e-12):
            i, j = np.argwhere(gap < -1e-12)[0]
            raise InputError(f"source balls {i} and {j} overlap")
        nearest = dist.min(axis=1)
    else:
        nearest = np.full(len(pts), np.inf)
    thr = delta0**2
    if len(pts) == 0:
        return ReifenbergRecord(0.0, tuple(np.zeros(m)), 0.0, thr, True, 0)
    if k == m:
        # every measure lies on the whole space
        return ReifenbergRecord(0.0, tuple(np.zeros(m)), 0.0, thr, True, 0)

    cache = {}

    def inner(j, r):
        # sum over s = r, r/2, ... while B_s(y_j) holds another atom
        total = 0.0
        s = r
        while s > nearest[j] * (1 - 1e-12):
            key = (j, round(math.log2(s) * 1e6))
            if key not in cache:
                cache[key] = beta_k(mu, pts[j], s, k).value
            total += cache[key]
            s /= 2
        return total * math.log(2)

    rs =0.5 ** np.arange(levels)
    ax = np.arange(-1.0, 1.0 + 1e-12, grid_step)
    grid = np.stack(np.meshgrid(*([ax] * m), indexing="ij"), -1).reshape(-1, m)
    cands = np.vstack([grid, pts])
    cands = cands[np.linalg.norm(cands, axis=1) < 1.0]
    best = (0.0, tuple(np.zeros(m)), 0.0)
    count = 0
    for xc in cands:
        nx = float(np.linalg.norm(xc))
        for r in rs:
            if nx + r > 2.0:
                continue
            inside = np.flatnonzero(np.linalg.norm(pts - xc, axis=1) < r)
            val = float(sum(w[j] * inner(j, r) for j in inside))
            count += 1
            ratio = val / r**k
            if ratio > best[0]:
                best = (ratio, tuple(xc.tolist()), float(r))
    ratio, bx, br = best
    return ReifenbergRecord(float(ratio), tuple(float(v) for v in bx), br, thr, bool(ratio < thr), count)


@dataclass(frozen=True)
class MinkowskiRecord:
    """Tube volumes ``|B_rho(Q-points) ∩ B_R(c)|`` and their log-log slope."""

    rhos: tuple
    volumes: tuple
    slope: float
    qpoints: int
    spacing: float


def minkowski_content_estimate(f, region: RegularGrid, rhos, *, center=None, radius: float = 0.125,
                               tol=None) -> MinkowskiRecord:
    """Grid estimate of ``|B_rho(Delta_Q) ∩ B_radius(center)|`` for each ``rho``.

    Q-points are grid nodes flagged by ``q_point_mask`` (threshold
    ``f.qpoint_tolerance(h)`` by default).  A node counts towards the tube
    when its Euclidean distance to a flagged node is below ``rho``; the
    volume is the count times the cell volume.  ``slope`` is the least
    squares slope of ``log volume`` against ``log rho``.  The grid should
    reach ``max(rhos)`` beyond the ball so that nearby Q-points are seen.
    """
    rhos = [float(v) for v in rhos]
    if any(v <= 0 for v in rhos):
        raise ParameterError("tube radii must be positive")
    center = f.center if center is None else np.asarray(center, dtype=float).ravel()
    h = region.spacing
    hmax = float(np.max(h))
    tol = f.qpoint_tolerance(hmax) if tol is None else tol
    pts = region.points()
    mask = np.zeros(len(pts), bool)
    chunk = 1 << 20
    for i in range(0, len(pts), chunk):
        mask[i : i + chunk] = q_point_mask(f, pts[i : i + chunk], tol)
    nq = int(mask.sum())
    if nq == 0:
        return MinkowskiRecord(tuple(rhos), (), math.nan, 0, hmax)
    grid_mask = mask.reshape(region.shape)
    dist = distance_transform_edt(~grid_mask, sampling=np.where(h > 0, h, 1.0))
    in_ball = (np.linalg.norm(pts - center, axis=1) < radius).reshape(region.shape)
    cell = float(np.prod(h[h > 0]))
    vols = tuple(float(np.count_nonzero((dist < rho) & in_ball)) * cell for rho in rhos)
    if len(rhos) >= 2 and all(v > 0 for v in vols):
        slope = float(np.polyfit(np.log(rhos), np.log(vols), 1)[0])
    else:
        slope = math.nan
    return MinkowskiRecord(tuple(rhos), vols, slope, nq, hmax)


def spine_frequency_constancy(oracle, V: Plane, radii, samples: int = 10) -> float:
    """Largest spread ``|I(y, r) - I(y', r')|`` over sampled ``y, y'`` in ``V ∩ B_1(base)`` and ``radii``.

    Points are evenly spaced in ``(-1, 1)`` along each direction of ``V``
    and kept inside the unit ball.
    """
    radii = [float(r) for r in radii]
    if V.dim == 0:
        ys = V.base[None, :]
    else:
        per = max(2, int(math.ceil(samples ** (1.0 / V.dim))))
        t = np.linspace(-1, 1, per + 2)[1:-1]
        coords = np.stack(np.meshgrid(*([t] * V.dim), indexing="ij"), -1).reshape(-1, V.dim)
        coords = coords[np.linalg.norm(coords, axis=1) < 1][:samples]
        ys = V.sample(coords)
    vals = np.concatenate([oracle.many(ys, r) for r in radii])
    return float(vals.max() - vals.min())


@dataclass(frozen=True)
class TelescopingRecord:
    """``lhs = ln2 sum_j (I(z, 2^(j+6) s) - I(z, 2^j s))`` against ``rhs = 6 ln2 (I(z, top) - I(z, s))``."""

    lhs: float
    rhs: float
    terms: int
    holds: bool


def telescoping_check(oracle, z, s: float, top: float) -> TelescopingRecord:
    """Dyadic telescoping bound for a nondecreasing frequency profile.

    Uses the largest ``kappa`` with ``2^(kappa+6) s <= top``; for monotone
    ``I`` the inequality ``lhs <= rhs`` is exact.
    """
    if not 0 < 64 * s <= top:
        raise ParameterError("telescoping needs 64 s <= top")
    kappa = int(math.floor(math.log2(top / s) + 1e-12)) - 6
    lhs = 0.0
    for j in range(kappa + 1):
        lhs += oracle(z, 2 ** (j + 6) * s) - oracle(z, 2**j * s)
    lhs *= math.log(2)
    rhs = 6 * math.log(2) * (oracle(z, top) - oracle(z, s))
    return TelescopingRecord(float(lhs), float(rhs), kappa + 1, bool(lhs <= rhs + 1e-12))
