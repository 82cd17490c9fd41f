"""Smoothed Dirichlet, height and frequency functions and their checks.

For a field ``u`` and a weight profile ``phi``::

    D(x, r) = int |Du|^2 phi(|y-x|/r) dy
    H(x, r) = -int |u|^2 |y-x|^-1 phi'(|y-x|/r) dy
    E(x, r) = -int |d_nu u|^2 |y-x| phi'(|y-x|/r) dy
    I(x, r) = r D(x, r) / H(x, r)

where ``d_nu`` is the derivative along ``(y - x)/|y - x|``.  The pinching
between two radii is ``W^r_s(x) = I(x, r) - I(x, s)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import DegenerateHeightError, ParameterError
from .grids import RegularGrid
from .multifield import q_point_mask
from .quadrature import QuadratureScheme, WeightProfile, ball_nodes, needs_reduction, reduced_nodes

__all__ = [
    "FrequencyReport",
    "IdentityResiduals",
    "FrequencyProfile",
    "Violation",
    "UniformBoundReport",
    "PinchingReport",
    "VariationReport",
    "smoothed_functionals",
    "dirichlet_D",
    "height_H",
    "energy_E",
    "frequency_I",
    "pinch_W",
    "doubling_residual",
    "identity_residuals",
    "frequency_profile",
    "epsilon_regularity_scan",
    "uniform_bound_report",
    "pinching_integral",
    "frequency_variation_check",
]

HEIGHT_FLOOR = 1e-14


@dataclass(frozen=True)
class FrequencyReport:
    x: tuple
    r: float
    D: float
    H: float
    E: float
    I: float
    est_error: float

    def as_row(self):
        return (*self.x, self.r, self.D, self.H, self.E, self.I, self.est_error)


def _defaults(phi, q):
    return (phi or WeightProfile.paper_default()), (q or QuadratureScheme())


def _check_ball(f, x, r):
    if not r > 0:
        raise ParameterError(f"radius must be positive, got {r}")
    if not f.contains_ball(x, r):
        raise ParameterError(f"B_{r}({tuple(np.round(x, 6))}) leaves the field's domain")


def _height_floor(f, r):
    terms = f.planar.terms
    if not terms:
        return 0.0
    amax = max(f.degrees)
    scale = sum(abs(c) ** 2 for _, c in terms)
    return HEIGHT_FLOOR * scale * r ** (f.m - 1 + 2 * amax)


def _raw_reduced(f, x, r, phi, scheme):
    nodes = reduced_nodes(f, x, r, phi, scheme)
    vals = f.values(nodes.y)
    jac = f.jacobians(nodes.y)[..., :2]
    usq = np.sum(vals**2, axis=(-2, -1))
    dusq = np.sum(jac**2, axis=(-3, -2, -1))
    radial = np.einsum("nqij,nj->nqi", jac, nodes.dp)
    w = nodes.w
    return {
        "D": float(np.sum(w * nodes.kvol * dusq)),
        "H": float(np.sum(w * nodes.kshell * usq)),
        "E": float(np.sum(w * nodes.kshell * np.sum(radial**2, axis=(-2, -1)))),
        "C1": float(np.sum(w * nodes.kshell * np.sum(radial * vals, axis=(-2, -1)))) / r,
        "skipped": 0.0,
    }


def _raw(f, x, r, phi, scheme):
    """D, H, E, the radial pairing integral, and skipped-node fractions."""
    if scheme.method == "product" and needs_reduction(f, x, r):
        return _raw_reduced(f, x, r, phi, scheme)
    nodes = ball_nodes(f, x, r * phi.ball_breaks(), scheme)
    vals = f.values(nodes.y)
    jac = f.jacobians(nodes.y)
    bad = ~np.all(np.isfinite(jac), axis=(-3, -2, -1))
    if np.any(bad):
        jac = np.where(bad[:, None, None, None], 0.0, jac)
    t = nodes.R / r
    weight = phi(t)
    dweight = -phi.derivative(t)

    usq = np.sum(vals**2, axis=(-2, -1))
    dusq = np.sum(jac**2, axis=(-3, -2, -1))
    dnu = np.einsum("nqij,nj->nqi", jac, nodes.disp) / nodes.R[:, None, None]
    dnusq = np.sum(dnu**2, axis=(-2, -1))
    pair = np.sum(dnu * vals, axis=(-2, -1))

    w = nodes.w
    D = float(np.sum(w * weight * dusq))
    H = float(np.sum(w * dweight * usq / nodes.R))
    E = float(np.sum(w * dweight * dnusq * nodes.R))
    C1 = float(np.sum(w * dweight * pair)) / r
    skipped = 0.0
    if np.any(bad):
        tot = np.sum(w * weight)
        skipped = float(np.sum((w * weight)[bad]) / tot) if tot > 0 else 0.0
    return {"D": D, "H": H, "E": E, "C1": C1, "skipped": skipped}


def smoothed_functionals(f, x, r, phi=None, q=None, *, with_error=True) -> FrequencyReport:
    """All smoothed functionals at ``(x, r)`` from one set of nodes.

    ``est_error`` estimates the error of ``I`` from the difference with a
    half-resolution rule, plus the share of skipped (singular) nodes.
    ``I`` is NaN when the height is degenerate; :func:`frequency_I` raises
    in that case.
    """
    phi, q = _defaults(phi, q)
    x = np.asarray(x, dtype=float).ravel()
    _check_ball(f, x, r)
    fine = _raw(f, x, r, phi, q)
    D, H, E = fine["D"], fine["H"], fine["E"]
    degenerate = H <= _height_floor(f, r)
    I = math.nan if degenerate else r * D / H
    err = math.nan
    if with_error and not degenerate:
        coarse = _raw(f, x, r, phi, q.coarse())
        if coarse["H"] > 0:
            err = abs(I - r * coarse["D"] / coarse["H"])
        err += abs(I) * fine["skipped"]
    elif not degenerate:
        err = abs(I) * fine["skipped"]
    return FrequencyReport(tuple(x.tolist()), float(r), D, H, E, I, err)


def dirichlet_D(f, x, r, phi=None, q=None) -> float:
    """Smoothed Dirichlet energy ``D_phi(x, r)``."""
    phi, q = _defaults(phi, q)
    _check_ball(f, x, r)
    return _raw(f, np.asarray(x, float).ravel(), r, phi, q)["D"]


def height_H(f, x, r, phi=None, q=None) -> float:
    """Smoothed height ``H_phi(x, r)``.

    Raises
    ------
    DegenerateHeightError
        If the field vanishes on the shell ``r/2 <= |y - x| <= r``.
    """
    phi, q = _defaults(phi, q)
    _check_ball(f, x, r)
    raw = _raw(f, np.asarray(x, float).ravel(), r, phi, q)
    if raw["H"] <= _height_floor(f, r):
        raise DegenerateHeightError("height vanishes", D=raw["D"], H=raw["H"])
    return raw["H"]


def energy_E(f, x, r, phi=None, q=None) -> float:
    """Radial energy ``E_phi(x, r)``."""
    phi, q = _defaults(phi, q)
    _check_ball(f, x, r)
    return _raw(f, np.asarray(x, float).ravel(), r, phi, q)["E"]


def frequency_I(f, x, r, phi=None, q=None, *, with_error=True) -> FrequencyReport:
    """Frequency ``I_phi(x, r) = r D / H`` with the full report."""
    rep = smoothed_functionals(f, x, r, phi, q, with_error=with_error)
    if math.isnan(rep.I):
        raise DegenerateHeightError("height vanishes, frequency undefined", D=rep.D, H=rep.H)
    return rep


def _freq(f, x, r, phi, q):
    return frequency_I(f, x, r, phi, q, with_error=False).I


def pinch_W(f, x, s, r, phi=None, q=None) -> float:
    """Frequency pinching ``I(x, r) - I(x, s)`` for ``0 < s <= r``."""
    if not 0 < s <= r:
        raise ParameterError(f"pinching needs 0 < s <= r, got s={s}, r={r}")
    if s == r:
        return 0.0
    phi, q = _defaults(phi, q)
    return _freq(f, x, r, phi, q) - _freq(f, x, s, phi, q)


def _kinks(f, x, s, r, phi):
    """Log-radii where a knot circle of ``B_t(x)`` passes through a branch point."""
    if f.q < 2 or not len(f.branch_points()):
        return []
    d = float(np.min(np.hypot(*(f.branch_points() - x[:2]).T)))
    if d == 0.0:
        return []
    knots = phi.ball_breaks()[1:]
    cand = [d / k for k in knots] + [d / 2]
    return sorted(math.log(t) for t in cand if s < t < r)


def doubling_residual(f, x, s, r, phi=None, q=None) -> float:
    """Relative defect of the doubling identity between radii ``s <= r``.

    Compares ``s^(1-m) H(s)`` with ``r^(1-m) H(r) exp(-2 int_s^r I(t) dt/t)``,
    the inner integral computed adaptively in ``log t``.
    """
    if not 0 < s <= r:
        raise ParameterError(f"doubling needs 0 < s <= r, got s={s}, r={r}")
    if s == r:
        return 0.0
    phi, q = _defaults(phi, q)
    x = np.asarray(x, dtype=float).ravel()
    m = f.m
    Hs = frequency_I(f, x, s, phi, q, with_error=False).H
    Hr = frequency_I(f, x, r, phi, q, with_error=False).H
    integral, _ = quad(
        lambda tau: _freq(f, x, math.exp(tau), phi, q),
        math.log(s),
        math.log(r),
        points=_kinks(f, x, s, r, phi) or None,
        epsabs=0.0,
        epsrel=1e-9,
        limit=100,
    )
    lhs = s ** (1 - m) * Hs
    rhs = r ** (1 - m) * Hr * math.exp(-2 * integral)
    return abs(lhs - rhs) / abs(lhs)


@dataclass(frozen=True)
class IdentityResiduals:
    """Relative residuals of the first-variation identities at ``(x, r)``.

    ``cauchy_schwarz`` is the slack ``(H E - r^2 D^2) / (H E)``, which is
    nonnegative up to quadrature error.
    """

    pairing: float
    d_radial: float
    h_radial: float
    cauchy_schwarz: float

    @property
    def max_identity(self) -> float:
        return max(self.pairing, self.d_radial, self.h_radial)


def _richardson(g, r, h):
    c1 = (g(r + h) - g(r - h)) / (2 * h)
    c2 = (g(r + h / 2) - g(r - h / 2)) / h
    return (4 * c2 - c1) / 3


def identity_residuals(f, x, r, phi=None, q=None, *, step=1e-2) -> IdentityResiduals:
    """Check the radial identities for ``D`` and ``H`` and Cauchy-Schwarz.

    * ``D = -(1/r) int phi' sum_i d_nu u_i . u_i``
    * ``dD/dr = (m-2)/r D + 2/r^2 E``
    * ``dH/dr = (m-1)/r H + 2 D``

    Radial derivatives use Richardson-extrapolated central differences
    with step ``step * r``.
    """
    phi, q = _defaults(phi, q)
    x = np.asarray(x, dtype=float).ravel()
    h = step * r
    _check_ball(f, x, r + h)
    m = f.m
    base = _raw(f, x, r, phi, q)
    if base["H"] <= _height_floor(f, r):
        raise DegenerateHeightError("height vanishes", D=base["D"], H=base["H"])
    D, H, E = base["D"], base["H"], base["E"]
    cache = {}

    def raw(rr):
        if rr not in cache:
            cache[rr] = _raw(f, x, rr, phi, q)
        return cache[rr]

    dD = _richardson(lambda rr: raw(rr)["D"], r, h)
    dH = _richardson(lambda rr: raw(rr)["H"], r, h)
    rhs_D = (m - 2) / r * D + 2 / r**2 * E
    rhs_H = (m - 1) / r * H + 2 * D
    return IdentityResiduals(
        pairing=abs(D - base["C1"]) / abs(D),
        d_radial=abs(dD - rhs_D) / abs(rhs_D),
        h_radial=abs(dH - rhs_H) / abs(rhs_H),
        cauchy_schwarz=(H * E - r**2 * D**2) / (H * E),
    )


def _pmap(func, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(func, items))
    return [func(it) for it in items]


@dataclass(frozen=True)
class FrequencyProfile:
    """Reports along increasing radii; ``min_increment`` is the smallest step of ``I``."""

    reports: tuple
    min_increment: float

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)

    @property
    def radii(self):
        return np.array([rep.r for rep in self.reports])

    @property
    def values(self):
        return np.array([rep.I for rep in self.reports])

    @property
    def errors(self):
        return np.array([rep.est_error for rep in self.reports])


def frequency_profile(f, x, radii, phi=None, q=None, *, workers=None) -> FrequencyProfile:
    """Frequency reports at ascending ``radii``."""
    radii = [float(r) for r in radii]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ParameterError("radii must be sorted ascending")
    phi, q = _defaults(phi, q)
    reps = tuple(_pmap(lambda r: frequency_I(f, x, r, phi, q), radii, workers))
    vals = np.array([rep.I for rep in reps])
    inc = float(np.min(np.diff(vals))) if len(vals) > 1 else math.inf
    return FrequencyProfile(reps, inc)


@dataclass(frozen=True)
class Violation:
    """A grid point with small frequency but a Q-point nearby."""

    x: tuple
    I: float
    qpoint: tuple


def _as_points(region):
    if isinstance(region, RegularGrid):
        return region.points(), float(np.max(region.spacing)) or None
    pts = np.atleast_2d(np.asarray(region, dtype=float))
    return pts, None


def _detect_qpoints(f, lower, upper, h, tol, chunk=1 << 18):
    grid = RegularGrid.with_spacing(lower, upper, h)
    pts = grid.points()
    mask = np.zeros(len(pts), dtype=bool)
    for i in range(0, len(pts), chunk):
        mask[i : i + chunk] = q_point_mask(f, pts[i : i + chunk], tol)
    return pts[mask]


def epsilon_regularity_scan(
    f, region, r, eps, phi=None, q=None, *, qtol=None, refine=2, workers=None
) -> list:
    """Grid points ``x`` with ``I(x, r) <= eps`` but a Q-point in ``B_{r/4}(x)``.

    Q-points are detected with :func:`~qvalued.multifield.q_point_mask` on a
    grid ``refine`` times finer than ``region`` (spacing ``r/16`` for an
    explicit point list), with threshold ``qtol`` (default
    ``f.qpoint_tolerance(spacing)``).  Single-valued fields (``Q = 1``)
    have no Q-points of interest and return no violations.

    Returns
    -------
    list of Violation
        Expected to be empty for small ``eps``.
    """
    phi = phi or WeightProfile.paper_default()
    q = q or QuadratureScheme.scan()
    pts, h = _as_points(region)
    if len(pts) == 0 or f.q < 2:
        return []
    hf = (h or r / 4) / refine
    tol = f.qpoint_tolerance(hf) if qtol is None else qtol
    lo = pts.min(axis=0) - r / 4 - hf
    hi = pts.max(axis=0) + r / 4 + hf
    detected = _detect_qpoints(f, lo, hi, hf, tol)
    if len(detected) == 0:
        return []
    tree = cKDTree(detected)
    near = tree.query(pts, distance_upper_bound=r / 4)
    candidates = np.flatnonzero(np.isfinite(near[0]))

    def check(i):
        val = frequency_I(f, pts[i], r, phi, q, with_error=False).I
        return val

    values = _pmap(check, candidates, workers)
    out = []
    for i, val in zip(candidates, values):
        if val <= eps:
            out.append(Violation(tuple(pts[i].tolist()), float(val), tuple(detected[near[1][i]].tolist())))
    return out


@dataclass(frozen=True)
class UniformBoundReport:
    """Ratios ``max H(y, rho) / H(x, 4 rho)`` and ``max I(y, rho) / (I(x, 16 rho) + 1)``."""

    h_ratio: float
    i_ratio: float
    h_argmax: tuple
    i_argmax: tuple


def _ball_samples(x, radius, n, seed):
    x = np.asarray(x, dtype=float).ravel()
    m = len(x)
    if n == 1:
        return x[None, :]
    sob = qmc.Sobol(d=m, scramble=True, seed=seed)
    u = sob.random_base2(max(0, math.ceil(math.log2(n - 1))))[: n - 1] * 2 - 1
    # keep points in the unit ball by radial squeezing of the cube
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    u = u / np.maximum(norms, 1e-300) * np.max(np.abs(u), axis=1, keepdims=True) * 0.999
    return np.vstack([x, x + radius * u])


def uniform_bound_report(f, x, rho, phi=None, q=None, *, samples=16) -> UniformBoundReport:
    """Sampled uniform bounds of height and frequency near ``x``.

    The sampling set is ``x`` itself plus ``samples - 1`` quasi-random
    points of the relevant ball.
    """
    if samples < 1:
        raise ParameterError("uniform bounds need at least one sample point")
    phi, q = _defaults(phi, q)
    x = np.asarray(x, dtype=float).ravel()
    _check_ball(f, x, 16 * rho)
    H4 = frequency_I(f, x, 4 * rho, phi, q, with_error=False).H
    I16 = _freq(f, x, 16 * rho, phi, q)
    ys = _ball_samples(x, rho, samples, q.seed)
    hs = np.array([frequency_I(f, y, rho, phi, q, with_error=False).H for y in ys]) / H4
    ys4 = _ball_samples(x, rho / 4, samples, q.seed + 1)
    iv = np.array([_freq(f, y, rho, phi, q) for y in ys4]) / (I16 + 1)
    return UniformBoundReport(
        float(hs.max()), float(iv.max()), tuple(ys[hs.argmax()].tolist()), tuple(ys4[iv.argmax()].tolist())
    )


@dataclass(frozen=True)
class PinchingReport:
    """Homogeneity defect on ``B_{2s}(x) minus B_{s/4}(x)`` against the pinching ``W^{4s}_{s/8}(x)``."""

    defect: float
    pinching: float
    ratio: float
    skipped: float


def _frequencies_at(f, x, radii, phi, q):
    return np.array([_freq(f, x, float(R), phi, q) for R in radii])


def pinching_integral(f, x, phi=None, q=None, *, scale=1.0) -> PinchingReport:
    """``int sum_i |(z-x).Du_i - I(x,|z-x|) u_i|^2 dz`` over ``scale/4 <= |z-x| <= 2 scale``.

    The frequency inside the integrand is evaluated at every radial node
    (product rule) or interpolated from a Chebyshev table (``qmc``).
    """
    phi, q = _defaults(phi, q)
    x = np.asarray(x, dtype=float).ravel()
    s = float(scale)
    _check_ball(f, x, 4 * s)
    nodes = ball_nodes(f, x, [s / 4, s / 2, s, 2 * s], q)
    if nodes.ring is not None:
        freq_nodes = _frequencies_at(f, x, nodes.radii, phi, q)[nodes.ring]
    else:
        k = np.arange(33)
        cheb = 0.5 * (2 * s + s / 4) + 0.5 * (2 * s - s / 4) * np.cos(np.pi * (k + 0.5) / 33)[::-1]
        table = _frequencies_at(f, x, cheb, phi, q)
        freq_nodes = np.interp(nodes.R, cheb, table)
    vals = f.values(nodes.y)
    jac = f.jacobians(nodes.y)
    bad = ~np.all(np.isfinite(jac), axis=(-3, -2, -1))
    jac = np.where(bad[:, None, None, None], 0.0, jac)
    radial = np.einsum("nqij,nj->nqi", jac, nodes.disp)
    defect_density = np.sum((radial - freq_nodes[:, None, None] * vals) ** 2, axis=(-2, -1))
    defect_density[bad] = 0.0
    defect = float(np.sum(nodes.w * defect_density))
    skipped = float(np.sum(nodes.w[bad]) / np.sum(nodes.w)) if np.any(bad) else 0.0
    W = _freq(f, x, 4 * s, phi, q) - _freq(f, x, s / 8, phi, q)
    ratio = defect / W if W > 0 else (0.0 if defect == 0 else math.inf)
    return PinchingReport(defect, W, ratio, skipped)


@dataclass(frozen=True)
class VariationReport:
    """Largest difference quotient of ``I(., r)`` on a segment versus the pinching bound."""

    max_slope: float
    pinching_1: float
    pinching_2: float
    bound: float
    ratio: float
    samples: tuple = field(default=())


def frequency_variation_check(f, x1, x2, r, phi=None, q=None, *, samples=5) -> VariationReport:
    """Compare ``|I(z, r) - I(y, r)| / |z - y|`` on ``[x1, x2]`` with
    ``W^{4r}_{r/8}(x1)^(1/2) + W^{4r}_{r/8}(x2)^(1/2)``."""
    phi, q = _defaults(phi, q)
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if np.linalg.norm(x1 - x2) > r / 4 + 1e-15:
        raise ParameterError("the segment must be shorter than r/4")
    for p in (x1, x2):
        _check_ball(f, p, 4 * r)
    W1 = pinch_W(f, x1, r / 8, 4 * r, phi, q)
    W2 = pinch_W(f, x2, r / 8, 4 * r, phi, q)
    bound = math.sqrt(max(W1, 0.0)) + math.sqrt(max(W2, 0.0))
    if np.allclose(x1, x2):
        return VariationReport(0.0, W1, W2, bound, 0.0)
    ts = np.linspace(0.0, 1.0, samples)
    zs = x1 + ts[:, None] * (x2 - x1)
    vals = np.array([_freq(f, z, r, phi, q) for z in zs])
    dv = np.abs(vals[:, None] - vals[None, :])
    dz = np.linalg.norm(zs[:, None, :] - zs[None, :, :], axis=-1)
    off = dz > 0
    slope = float(np.max(dv[off] / dz[off]))
    ratio = slope / bound if bound > 0 else (0.0 if slope == 0 else math.inf)
    return VariationReport(slope, W1, W2, bound, ratio, tuple(vals.tolist()))
