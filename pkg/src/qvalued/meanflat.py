"""Discrete measures, best-fit planes and Jones beta_2 numbers.

The k-th mean flatness of a measure ``mu`` in a ball is::

    D^k_mu(x0, r0) = r0^(-k-2) inf_L int_{B_r0(x0)} dist(y, L)^2 dmu(y)

over affine k-planes ``L``.  The infimum is attained by planes through the
barycenter spanned by the top ``k`` eigenvectors of the centered second
moment, so it equals ``r0^(-k-2)`` times the sum of the ``m - k`` smallest
eigenvalues.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.stats import special_ortho_group

from .errors import InputError, ParameterError
from .grids import RegularGrid
from .multifield import q_point_mask

__all__ = [
    "DiscreteMeasure",
    "PlaneFit",
    "BetaResult",
    "MeanflatPinchingRecord",
    "restrict",
    "plane_fit",
    "beta_k",
    "beta_bruteforce",
    "dyadic_scales",
    "jones_terms",
    "jones_integral",
    "meanflat_vs_pinching_check",
    "measure_from_qpoints",
]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms ``sum_j w_j delta_{p_j}`` in ``R^m``.

    Parameters
    ----------
    points : array_like, shape (N, m)
    weights : array_like, shape (N,), optional
        Nonnegative; unit weights by default.
    m : int, optional
        Ambient dimension, needed only for an empty measure.
    """

    points: np.ndarray
    weights: np.ndarray = None
    m: int = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            if self.m is None and pts.ndim == 2:
                object.__setattr__(self, "m", pts.shape[1])
            if self.m is None:
                raise InputError("an empty measure needs its ambient dimension m")
            pts = np.zeros((0, int(self.m)))
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2:
            raise InputError(f"points must be an (N, m) array, got shape {pts.shape}")
        w = np.ones(len(pts)) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != (len(pts),):
            raise InputError(f"{len(pts)} points but {w.size} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(pts)):
            raise InputError("weights must be finite and nonnegative, coordinates finite")
        if self.m is not None and int(self.m) != pts.shape[1]:
            raise InputError(f"points live in R^{pts.shape[1]}, not R^{self.m}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "m", pts.shape[1])

    def __len__(self):
        return len(self.points)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def transformed(self, rotation=None, shift=None, scale=1.0) -> "DiscreteMeasure":
        """Image under ``p -> scale * R p + shift`` with the same weights."""
        p = self.points
        if rotation is not None:
            p = p @ np.asarray(rotation, dtype=float).T
        p = scale * p
        if shift is not None:
            p = p + np.asarray(shift, dtype=float)
        return DiscreteMeasure(p, self.weights.copy())


def restrict(mu: DiscreteMeasure, x0, r0: float) -> DiscreteMeasure:
    """Atoms in the open ball ``|p - x0| < r0``."""
    if not r0 > 0:
        raise ParameterError(f"radius must be positive, got {r0}")
    x0 = np.asarray(x0, dtype=float).ravel()
    inside = np.linalg.norm(mu.points - x0, axis=1) < r0
    return DiscreteMeasure(mu.points[inside], mu.weights[inside], m=mu.m)


@dataclass(frozen=True)
class PlaneFit:
    """Barycenter and principal axes of a measure.

    ``vectors[:, i]`` is the eigenvector of ``eigenvalues[i]``; eigenvalues
    are sorted in nonincreasing order.
    """

    base: np.ndarray
    vectors: np.ndarray
    eigenvalues: np.ndarray
    mass: float

    def basis(self, k: int) -> np.ndarray:
        """Orthonormal basis (``k x m``) of the best k-plane through ``base``."""
        return self.vectors[:, :k].T

    def tail(self, k: int) -> float:
        """``sum_{l > k} lambda_l``, the least-squares residual of the best k-plane."""
        return float(np.sum(self.eigenvalues[k:]))


def plane_fit(mu: DiscreteMeasure) -> PlaneFit:
    """Barycenter and eigen-decomposition of the centered second moment."""
    mass = mu.mass
    if not mass > 0:
        raise ParameterError("plane fit of a measure with zero mass")
    w = mu.weights
    base = (w @ mu.points) / mass
    c = mu.points - base
    form = (c * w[:, None]).T @ c
    evals, evecs = np.linalg.eigh(form)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    return PlaneFit(base, evecs[:, order], evals, float(mass))


@dataclass(frozen=True)
class BetaResult:
    """``D^k_mu(x0, r0)`` with the fit it came from.

    ``fit`` is ``None`` (and ``empty`` true) when the ball holds no mass.
    """

    x0: tuple
    r0: float
    k: int
    value: float
    fit: PlaneFit = None
    empty: bool = False


def _check_k(k, m):
    if not 0 <= k <= m - 1:
        raise ParameterError(f"k must satisfy 0 <= k <= m-1 = {m - 1}, got {k}")


def beta_k(mu: DiscreteMeasure, x0, r0: float, k: int) -> BetaResult:
    """k-th mean flatness of ``mu`` in ``B_r0(x0)`` from the eigenvalue tail."""
    _check_k(k, mu.m)
    sub = restrict(mu, x0, r0)
    x0t = tuple(np.asarray(x0, dtype=float).ravel().tolist())
    if not sub.mass > 0:
        return BetaResult(x0t, float(r0), k, 0.0, None, True)
    fit = plane_fit(sub)
    return BetaResult(x0t, float(r0), k, r0 ** (-k - 2) * fit.tail(k), fit, False)


def _plane_cost(points, weights, frame, offset, k):
    c = points - offset
    along = c @ frame[:, :k]
    d2 = np.sum(c**2, axis=1) - np.sum(along**2, axis=1)
    return float(weights @ d2)


@functools.lru_cache(maxsize=None)
def _upper(m):
    return np.triu_indices(m, 1)


def _skew(params, m):
    a = np.zeros((m, m))
    a[_upper(m)] = params
    return a - a.T


def beta_bruteforce(mu: DiscreteMeasure, x0, r0: float, k: int, resolution: int = 64, *, seed: int = 0) -> float:
    """Direct minimization of ``int dist(y, L)^2 dmu`` over affine k-planes.

    ``resolution`` random orientations (Haar distributed) are each paired
    with offsets on a small grid around the weighted mean; the best
    candidates are then polished by BFGS over orientation and offset.
    Distances are computed point by point, without eigen-decomposition.
    """
    _check_k(k, mu.m)
    if resolution < 1:
        raise ParameterError("resolution must be positive")
    sub = restrict(mu, x0, r0)
    if not sub.mass > 0:
        return 0.0
    m = mu.m
    pts, w = sub.points, sub.weights
    rng = np.random.default_rng(seed)
    mean = (w @ pts) / w.sum()
    spread = float(np.sqrt((w @ np.sum((pts - mean) ** 2, axis=1)) / w.sum())) or 1.0
    if m == 1:
        frames = [np.eye(1)]
    else:
        frames = list(special_ortho_group.rvs(m, size=resolution, random_state=rng).reshape(-1, m, m))
    shifts = [np.zeros(m)] + [0.1 * spread * v for v in rng.standard_normal((4, m))]
    scored = []
    for fr in frames:
        for sh in shifts:
            scored.append((_plane_cost(pts, w, fr, mean + sh, k), fr, mean + sh))
    scored.sort(key=lambda t: t[0])

    nrot = m * (m - 1) // 2
    best = scored[0][0]
    for _, fr, off in scored[: min(4, len(scored))]:

        def cost(z, fr=fr):
            rot = expm(_skew(z[:nrot], m)) if nrot else np.eye(m)
            return _plane_cost(pts, w, fr @ rot, z[nrot:], k)

        z0 = np.concatenate([np.zeros(nrot), off])
        res = minimize(cost, z0, method="BFGS", options={"gtol": 1e-10, "maxiter": 2000})
        best = min(best, float(res.fun))
    return max(best, 0.0) * r0 ** (-k - 2)


def dyadic_scales(top: float, n: int) -> np.ndarray:
    """``top, top/2, ..., top/2^(n-1)``."""
    return top * 0.5 ** np.arange(n)


def _check_dyadic(scales):
    s = np.asarray(scales, dtype=float).ravel()
    if np.any(s <= 0):
        raise ParameterError("scales must be positive")
    if len(s) > 1:
        ratios = s[:-1] / s[1:]
        logs = np.log2(ratios)
        if np.any(ratios <= 1) or np.any(np.abs(logs - np.round(logs)) > 1e-9):
            raise ParameterError("scales must descend by powers of two")
    return s


def jones_terms(mu: DiscreteMeasure, x0, k: int, scales) -> np.ndarray:
    """Per-scale contributions ``D^k_mu(x0, s) ln 2``."""
    s = _check_dyadic(scales)
    return np.array([beta_k(mu, x0, float(sc), k).value * math.log(2) for sc in s])


def jones_integral(mu: DiscreteMeasure, x0, k: int, scales) -> float:
    """Dyadic discretization of ``int_0^1 D^k_mu(x0, s) ds / s``."""
    return float(np.sum(jones_terms(mu, x0, k, scales)))


@dataclass(frozen=True)
class MeanflatPinchingRecord:
    """``lhs = D^{m-2}_mu(x0, r/8)`` against ``rhs_raw = r^(2-m) sum_{B_{r/8}(x0)} W^{4r}_{r/8} dmu``."""

    lhs: float
    rhs_raw: float
    ratio: float
    atoms: int


def meanflat_vs_pinching_check(f, mu: DiscreteMeasure, x0, r: float, phi=None, q=None, *, pinching=None):
    """Compare the (m-2)-th mean flatness of ``mu`` with the pinching it carries.

    Parameters
    ----------
    pinching : callable, optional
        ``pinching(x, s, r) -> W^r_s(x)``; defaults to
        :func:`~qvalued.frequency.pinch_W` on ``f``.  A synthetic callable
        lets the check run on measures without a field.
    """
    if pinching is None:
        from .frequency import pinch_W

        def pinching(x, s, rr):
            return pinch_W(f, x, s, rr, phi, q)

    m = mu.m
    sub = restrict(mu, x0, r / 8) if len(mu) else mu
    if not len(sub) or not sub.mass > 0:
        return MeanflatPinchingRecord(0.0, 0.0, 0.0, 0)
    lhs = beta_k(mu, x0, r / 8, m - 2).value
    W = np.array([pinching(p, r / 8, 4 * r) for p in sub.points])
    rhs = r ** (2 - m) * float(sub.weights @ W)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return MeanflatPinchingRecord(lhs, rhs, ratio, len(sub))


def measure_from_qpoints(f, region: RegularGrid, tol=None) -> DiscreteMeasure:
    """Atoms at grid nodes where ``f`` is a Q-point, weighted by ``h^(m-2)``.

    ``tol`` defaults to ``f.qpoint_tolerance(h)`` with ``h`` the largest
    grid spacing, which flags nodes within about ``0.75 h`` of the branch
    set.
    """
    h = float(np.max(region.spacing))
    if h <= 0:
        raise ParameterError("the grid needs at least two nodes along some axis")
    tol = f.qpoint_tolerance(h) if tol is None else tol
    pts = region.points()
    if f.q < 2:
        return DiscreteMeasure(np.zeros((0, f.m)), m=f.m)
    mask = q_point_mask(f, pts, tol)
    sel = pts[mask]
    return DiscreteMeasure(sel, np.full(len(sel), h ** (f.m - 2)), m=f.m)
