"""Weight profiles and quadrature nodes on balls and shells.

All radial integrals here have the form ``int g(y) w(|y - x|) dy`` with a
radial weight that is piecewise smooth, with kinks at the knots of the
weight profile.  Two node generators are provided.

``product``
    For fields depending only on two planar coordinates (every built-in
    field), integrate in coordinates ``y - x = R (cos(chi) e(psi), sin(chi)
    s)`` where ``e(psi)`` is a unit vector of the plane, ``s`` a unit vector
    of the invariant directions and ``chi`` the angle out of the plane.  The
    integrand does not depend on ``s``, so that factor is integrated
    exactly.  Gauss-Legendre in ``R`` (one panel per knot interval) and
    ``chi``, trapezoid in ``psi``.  When ``x`` sits on the branch set the
    radial panel at the origin and the ``chi`` rule near the spine are
    graded with exponent ``Q``, which turns the ``|z|**(p/Q)`` behaviour of
    the fields into polynomials.
``qmc``
    Scrambled Sobol points in each shell, any field.  Slower to converge;
    kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gamma as _gamma
from scipy.stats import norm, qmc

from .errors import InputError, ParameterError

__all__ = [
    "WeightProfile",
    "QuadratureScheme",
    "Nodes",
    "sphere_area",
    "ball_nodes",
]


def sphere_area(k: int) -> float:
    """Area of the unit sphere ``S^k`` in ``R^(k+1)``; ``|S^0| = 2``."""
    return 2 * math.pi ** ((k + 1) / 2) / _gamma((k + 1) / 2)


@dataclass(frozen=True)
class WeightProfile:
    """Piecewise-linear, nonincreasing cutoff ``phi`` on ``[0, inf)``.

    ``phi = 1`` on ``[0, 1/2]`` and ``phi = 0`` on ``[1, inf)``.  The default
    knots give ``phi(t) = 2 (1 - t)`` on ``[1/2, 1]``.
    """

    knots: tuple = ((0.0, 1.0), (0.5, 1.0), (1.0, 0.0))

    def __post_init__(self):
        kn = tuple((float(t), float(v)) for t, v in self.knots)
        ts = np.array([t for t, _ in kn])
        vs = np.array([v for _, v in kn])
        if len(kn) < 3 or ts[0] != 0.0 or ts[-1] != 1.0:
            raise InputError("profile knots must start at t=0 and end at t=1")
        if np.any(np.diff(ts) <= 0):
            raise InputError("profile knots must be strictly increasing in t")
        if np.any(np.diff(vs) > 0):
            raise InputError("profile must be nonincreasing")
        if vs[-1] != 0.0 or np.any(vs[ts <= 0.5] != 1.0) or 0.5 not in ts:
            raise InputError("profile must equal 1 on [0, 1/2] and vanish at t=1")
        object.__setattr__(self, "knots", kn)

    @classmethod
    def paper_default(cls) -> "WeightProfile":
        return cls()

    @classmethod
    def piecewise_linear(cls, knots) -> "WeightProfile":
        return cls(tuple(knots))

    @property
    def _t(self):
        return np.array([t for t, _ in self.knots])

    @property
    def _v(self):
        return np.array([v for _, v in self.knots])

    def __call__(self, t):
        return np.interp(t, self._t, self._v, right=0.0)

    def derivative(self, t):
        """``phi'(t)``, using the slope of the piece containing ``t``.

        At a knot the right slope is returned; quadrature nodes never sit on
        knots.
        """
        t = np.asarray(t, dtype=float)
        ts, vs = self._t, self._v
        slopes = np.append(np.diff(vs) / np.diff(ts), 0.0)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 1)
        out = slopes[idx]
        return np.where((t < 0) | (t >= 1), 0.0, out)

    def ball_breaks(self):
        """Knots (scaled to a unit radius) of the support of ``phi``."""
        return self._t

    def shell_breaks(self):
        """Knots of the support of ``phi'``, from 1/2 to 1."""
        return self._t[self._t >= 0.5]

    def max_slope(self) -> float:
        return float(np.max(-np.diff(self._v) / np.diff(self._t)))


@dataclass(frozen=True)
class QuadratureScheme:
    """Node counts for :func:`ball_nodes`.

    ``radial_nodes`` counts Gauss-Legendre nodes per radial panel,
    ``polar_nodes`` the nodes in the out-of-plane angle (``m >= 3`` only),
    ``mc_samples`` the Sobol points per shell for the ``qmc`` method.
    """

    radial_nodes: int = 24
    angular_nodes: int = 64
    polar_nodes: int = 16
    mc_samples: int = 1 << 16
    seed: int = 0
    method: str = "product"

    def __post_init__(self):
        for name in ("radial_nodes", "angular_nodes", "polar_nodes", "mc_samples"):
            if getattr(self, name) < 4:
                raise ParameterError(f"{name} must be >= 4, got {getattr(self, name)}")
        if self.method not in ("product", "qmc"):
            raise ParameterError(f"unknown quadrature method {self.method!r}")

    def coarse(self) -> "QuadratureScheme":
        """Half-resolution companion used for error estimates."""
        return replace(
            self,
            radial_nodes=max(4, self.radial_nodes // 2),
            angular_nodes=max(4, self.angular_nodes // 2),
            polar_nodes=max(4, self.polar_nodes // 2),
            mc_samples=max(4, self.mc_samples // 4),
            seed=self.seed + 1,
        )

    @classmethod
    def scan(cls) -> "QuadratureScheme":
        """Cheap scheme for grid scans where only coarse values matter."""
        return cls(radial_nodes=10, angular_nodes=32, polar_nodes=8)


@dataclass
class Nodes:
    """Quadrature nodes around a center ``x``.

    ``y`` are evaluation points, ``disp`` the displacement ``y - x`` with
    invariant components dropped (the field's Jacobian vanishes along them),
    ``R = |y - x|`` the true distance, ``w`` the weights.  ``ring`` indexes
    ``radii`` for the product rule and is ``None`` otherwise.
    """

    y: np.ndarray
    disp: np.ndarray
    R: np.ndarray
    w: np.ndarray
    ring: np.ndarray | None = None
    radii: np.ndarray | None = None


@dataclass
class _Panel:
    a: float
    b: float
    grade: float = 1.0


def _gl(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1), 0.5 * w


def _radial_rule(panels, n):
    u, wu = _gl(n)
    rs, ws = [], []
    for p in panels:
        if p.grade != 1.0:
            # R = a + (b - a) u^g
            rs.append(p.a + (p.b - p.a) * u**p.grade)
            ws.append((p.b - p.a) * p.grade * u ** (p.grade - 1) * wu)
        else:
            rs.append(p.a + (p.b - p.a) * u)
            ws.append((p.b - p.a) * wu)
    return np.concatenate(rs), np.concatenate(ws)


def _fibered(f) -> bool:
    return f.m - f.invariant_dims == 2


def _split_panels(breaks, extra, grade_at_zero):
    pts = sorted(set(float(b) for b in breaks) | {float(e) for e in extra if breaks[0] < e < breaks[-1]})
    panels = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 1e-14 * max(1.0, b):
            continue
        panels.append(_Panel(a, b, grade_at_zero if a == 0.0 else 1.0))
    return panels


def ball_nodes(f, x, breaks, scheme: QuadratureScheme) -> Nodes:
    """Nodes for ``{y : breaks[0] <= |y - x| <= breaks[-1]}``.

    ``breaks`` are absolute radii; the radial rule uses one panel per
    consecutive pair.
    """
    x = np.asarray(x, dtype=float).ravel()
    breaks = np.asarray(breaks, dtype=float)
    if scheme.method == "qmc" or not _fibered(f):
        return _qmc_nodes(f, x, breaks, scheme)
    return _product_nodes(f, x, breaks, scheme)


def _product_nodes(f, x, breaks, scheme):
    m = f.m
    bp = f.branch_points()
    dists = np.hypot(*(bp - x[:2]).T) if len(bp) else np.zeros(0)
    on_branch = bool(len(dists)) and float(dists.min()) <= 1e-12 * max(1.0, breaks[-1])
    grade = float(f.q) if on_branch else 1.0
    extra = dists if m == 2 else ()
    panels = _split_panels(breaks, extra, grade)
    R, wR = _radial_rule(panels, scheme.radial_nodes)

    na = scheme.angular_nodes
    psi = 2 * np.pi * (np.arange(na) + 0.5) / na
    wpsi = np.full(na, 2 * np.pi / na)

    if m == 2:
        chi = np.zeros(1)
        wchi = np.ones(1)
    else:
        v, wv = _gl(scheme.polar_nodes)
        g = grade
        # chi = pi/2 (1 - v^g): graded toward the invariant directions
        chi = 0.5 * np.pi * (1 - v**g)
        wchi = 0.5 * np.pi * g * v ** (g - 1) * wv
        wchi = wchi * np.cos(chi) * np.sin(chi) ** (m - 3) * sphere_area(m - 3)

    RR, CC, PP = np.meshgrid(np.arange(len(R)), np.arange(len(chi)), np.arange(na), indexing="ij")
    RR, CC, PP = RR.ravel(), CC.ravel(), PP.ravel()
    rad = R[RR]
    planar = rad * np.cos(chi[CC])
    disp = np.zeros((len(rad), m))
    disp[:, 0] = planar * np.cos(psi[PP])
    disp[:, 1] = planar * np.sin(psi[PP])
    w = wR[RR] * rad ** (m - 1) * wchi[CC] * wpsi[PP]
    return Nodes(y=x + disp, disp=disp, R=rad, w=w, ring=RR, radii=R)


def _qmc_nodes(f, x, breaks, scheme):
    m = f.m
    ys, ds, Rs, ws = [], [], [], []
    n = scheme.mc_samples
    log2n = int(math.ceil(math.log2(n)))
    for i, (a, b) in enumerate(zip(breaks[:-1], breaks[1:])):
        sob = qmc.Sobol(d=m + 1, scramble=True, seed=scheme.seed + 7919 * i)
        u = sob.random_base2(log2n)
        u = np.clip(u, 1e-12, 1 - 1e-12)
        rad = (a**m + u[:, 0] * (b**m - a**m)) ** (1.0 / m)
        g = norm.ppf(u[:, 1:])
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        disp = rad[:, None] * dirs
        vol = sphere_area(m - 1) / m * (b**m - a**m)
        ys.append(x + disp)
        ds.append(disp)
        Rs.append(rad)
        ws.append(np.full(len(rad), vol / len(rad)))
    return Nodes(
        y=np.concatenate(ys), disp=np.concatenate(ds), R=np.concatenate(Rs), w=np.concatenate(ws)
    )


# ---------------------------------------------------------------------------
# planar reduction around an off-center branch point


@dataclass
class PlanarNodes:
    """Nodes of a planar integral ``int g(p) K(|p - c|) dp``.

    ``y`` are points of ``R^m`` (planar part ``p``, invariant coordinates of
    the center), ``dp = p - c``, ``w`` the area weights and ``kvol``,
    ``kshell`` the two radial kernels at the nodes.
    """

    y: np.ndarray
    dp: np.ndarray
    w: np.ndarray
    kvol: np.ndarray
    kshell: np.ndarray


def radial_kernels(rho, r: float, phi: WeightProfile, m: int, nodes: int = 16):
    """Kernels obtained by integrating out the ``m - 2`` invariant directions.

    Returns ``(K_vol, K_shell)`` at planar distances ``rho`` where::

        K_vol(rho)   = int phi(R / r) dt
        K_shell(rho) = int -phi'(R / r) / R dt,   R = sqrt(rho^2 + |t|^2)

    over ``t`` in ``R^(m-2)``; for ``m = 2`` these are ``phi(rho/r)`` and
    ``-phi'(rho/r)/rho``.
    """
    rho = np.asarray(rho, dtype=float)
    if m == 2:
        t = rho / r
        with np.errstate(divide="ignore", invalid="ignore"):
            ksh = np.where(rho > 0, -phi.derivative(t) / rho, 0.0)
        return phi(t), ksh
    radii = r * phi.ball_breaks()[1:]
    tb = np.sqrt(np.clip(radii[None, :] ** 2 - rho[:, None] ** 2, 0.0, None))
    tb = np.concatenate([np.zeros((len(rho), 1)), tb], axis=1)
    u, wu = _gl(nodes)
    a, b = tb[:, :-1, None], tb[:, 1:, None]
    # knots split the t-axis where R crosses a knot radius, so each panel is smooth
    t = a + (b - a) * u
    wt = (b - a) * wu * t ** (m - 3) * sphere_area(m - 3)
    R = np.sqrt(rho[:, None, None] ** 2 + t**2)
    s = R / r
    kvol = np.sum(wt * phi(s), axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(R > 0, -phi.derivative(s) / R, 0.0)
    ksh = np.sum(wt * dens, axis=(1, 2))
    return kvol, ksh


def _cosine_map(u):
    return 0.5 * (1 - np.cos(np.pi * u)), 0.5 * np.pi * np.sin(np.pi * u)


def _graded_map(u, g):
    # graded like u^(2g) at 0, quadratic contact at 1
    sn = np.sin(0.5 * np.pi * u)
    return sn ** (2 * g), 2 * g * sn ** (2 * g - 1) * np.cos(0.5 * np.pi * u) * 0.5 * np.pi


def _angular_panels(d, radii, theta_c, n_trap, n_panel):
    """Ray directions around the branch point and their weights."""
    tangent = [math.asin(a / d) for a in radii if a < d]
    if not tangent:
        th = 2 * np.pi * (np.arange(n_trap) + 0.5) / n_trap
        return th, np.full(n_trap, 2 * np.pi / n_trap)
    outer = max(tangent) if radii[-1] < d else None
    cuts = sorted({0.0, *tangent, *(2 * np.pi - t for t in tangent)})
    cuts.append(2 * np.pi)
    u, wu = _gl(n_panel)
    g, dg = _cosine_map(u)
    ths, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        if outer is not None and outer < mid < 2 * np.pi - outer:
            continue  # rays missing the support
        ths.append(a + (b - a) * g)
        ws.append((b - a) * dg * wu)
    # offsets measured from the direction pointing at the center
    return np.concatenate(ths) + theta_c, np.concatenate(ws)


def reduced_nodes(f, x, r, phi: WeightProfile, scheme: QuadratureScheme) -> PlanarNodes:
    """Polar nodes around the branch point for a ball ``B_r(x)`` off the branch set.

    Used when the planar projection of ``x`` is at distance ``0 < d < 2r``
    from the branch point.  Rays leave the branch point; each ray is split
    where it crosses a knot circle ``|p - c| = r t_k`` and the panel at the
    branch point is graded.  Ray directions are split at tangencies to the
    knot circles.
    """
    x = np.asarray(x, dtype=float).ravel()
    c = x[:2]
    bp = f.branch_points()
    b = bp[np.argmin(np.hypot(*(bp - c).T))]
    d = float(np.hypot(*(c - b)))
    theta_c = math.atan2(c[1] - b[1], c[0] - b[0])
    radii = r * phi.ball_breaks()[1:]
    th, wth = _angular_panels(d, radii, theta_c, scheme.angular_nodes, max(4, scheme.angular_nodes // 2))

    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    beta = np.cos(th - theta_c) * d  # (c - b) . e
    disc = beta[:, None] ** 2 - d**2 + radii[None, :] ** 2
    sq = np.sqrt(np.clip(disc, 0.0, None))
    roots = np.concatenate([beta[:, None] - sq, beta[:, None] + sq], axis=1)
    roots = np.where(disc[:, [*range(len(radii))] * 2] >= 0, roots, 0.0)
    s_out = np.clip(beta + np.sqrt(np.clip(beta**2 - d**2 + radii[-1] ** 2, 0.0, None)), 0.0, None)
    s_lo = 0.0 if d < radii[-1] else None
    if s_lo is None:
        s_lo_arr = np.clip(beta - np.sqrt(np.clip(beta**2 - d**2 + radii[-1] ** 2, 0.0, None)), 0.0, None)
    else:
        s_lo_arr = np.zeros_like(beta)
    brk = np.concatenate([s_lo_arr[:, None], np.clip(roots, s_lo_arr[:, None], s_out[:, None]), s_out[:, None]], axis=1)
    brk = np.sort(brk, axis=1)

    u, wu = _gl(scheme.radial_nodes)
    a, bb = brk[:, :-1, None], brk[:, 1:, None]
    first = (a <= 0.0) if s_lo == 0.0 else np.zeros(a.shape, dtype=bool)
    gq, dgq = _graded_map(u, float(f.q))
    gc, dgc = _cosine_map(u)
    g = np.where(first, gq, gc)
    dg = np.where(first, dgq, dgc)
    s = a + (bb - a) * g
    ws = (bb - a) * dg * wu * s * wth[:, None, None]
    p = b + s[..., None] * e[:, None, None, :]
    p = p.reshape(-1, 2)
    ws = ws.ravel()
    keep = ws > 0
    p, ws = p[keep], ws[keep]
    dp = p - c
    kvol, ksh = radial_kernels(np.hypot(dp[:, 0], dp[:, 1]), r, phi, f.m)
    y = np.empty((len(p), f.m))
    y[:, :2] = p
    y[:, 2:] = x[2:]
    return PlanarNodes(y=y, dp=dp, w=ws, kvol=kvol, kshell=ksh)


def needs_reduction(f, x, r) -> bool:
    """Whether a branch point projects into ``B_2r`` of ``x`` without being at ``x``."""
    if not _fibered(f) or f.q < 2:
        return False
    bp = f.branch_points()
    if not len(bp):
        return False
    x = np.asarray(x, dtype=float).ravel()
    d = float(np.min(np.hypot(*(bp - x[:2]).T)))
    return 1e-12 * max(1.0, r) < d < 2 * r
