import math

import numpy as np
import pytest

from qvalued.builtin import builtin_field
from qvalued.errors import InputError, ParameterError
from qvalued.quadrature import (
    QuadratureScheme,
    WeightProfile,
    ball_nodes,
    needs_reduction,
    radial_kernels,
    reduced_nodes,
    sphere_area,
)

PHI = WeightProfile.paper_default()

# int_{B_r} phi(|y|/r) dy for the default profile, by hand:
# m=2: 2 pi r^2 (1/8 + 1/6); m=3: 4 pi r^3 (1/24 + 11/96)
PHI_MASS = {2: 7 * math.pi / 12, 3: 5 * math.pi / 8}
# int -phi'(|y|/r)/|y| dy = 2 |S^{m-1}| int_{r/2}^{r} R^{m-2} dR
SHELL_MASS = {2: lambda r: 2 * math.pi * r, 3: lambda r: 3 * math.pi * r**2}


def test_sphere_areas():
    assert sphere_area(0) == pytest.approx(2.0)
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)


def test_profile_values_and_slope():
    t = np.array([0.0, 0.3, 0.5, 0.75, 1.0, 1.5])
    assert np.allclose(PHI(t), [1, 1, 1, 0.5, 0, 0])
    assert np.allclose(PHI.derivative(np.array([0.25, 0.6, 0.99, 1.2])), [0, -2, -2, 0])
    assert PHI.max_slope() == pytest.approx(2.0)


@pytest.mark.parametrize(
    "knots",
    [
        ((0.0, 1.0), (1.0, 0.0)),
        ((0.0, 1.0), (0.5, 1.0), (0.7, 0.8), (0.6, 0.2), (1.0, 0.0)),
        ((0.0, 1.0), (0.5, 1.0), (0.7, 0.2), (0.8, 0.4), (1.0, 0.0)),
        ((0.0, 1.0), (0.5, 0.9), (1.0, 0.0)),
    ],
)
def test_profile_rejects_bad_knots(knots):
    with pytest.raises(InputError):
        WeightProfile.piecewise_linear(knots)


def test_scheme_validation():
    with pytest.raises(ParameterError):
        QuadratureScheme(radial_nodes=2)
    with pytest.raises(ParameterError):
        QuadratureScheme(method="spectral")
    assert QuadratureScheme().coarse().radial_nodes == 12


@pytest.mark.parametrize("name,offset", [("q2_branch", 0.0), ("q2_branch", 0.3), ("cylinder3", 0.0),
                                         ("cylinder3", 0.2)])
def test_product_rule_integrates_the_weight(name, offset):
    f = builtin_field(name)
    x = f.center.copy()
    x[0] += offset
    r = 0.7
    nodes = ball_nodes(f, x, r * PHI.ball_breaks(), QuadratureScheme())
    vol = sphere_area(f.m - 1) / f.m * r**f.m
    assert nodes.w.sum() == pytest.approx(vol, rel=1e-12)
    assert np.sum(nodes.w * PHI(nodes.R / r)) == pytest.approx(PHI_MASS[f.m] * r**f.m, rel=1e-12)


def test_graded_rule_is_exact_for_root_singularity():
    # int_{B_1} |y|^(1/2) dy = 2 pi / (5/2)
    f = builtin_field("q2_branch")
    nodes = ball_nodes(f, f.center, np.array([0.0, 1.0]), QuadratureScheme())
    assert np.sum(nodes.w * np.sqrt(nodes.R)) == pytest.approx(4 * math.pi / 5, rel=1e-13)


def test_qmc_rule_volume():
    f = builtin_field("cylinder3")
    nodes = ball_nodes(f, f.center, np.array([0.0, 0.5, 1.0]), QuadratureScheme(method="qmc", mc_samples=4096))
    assert nodes.w.sum() == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert np.sum(nodes.w * PHI(nodes.R)) == pytest.approx(PHI_MASS[3], rel=2e-3)


@pytest.mark.parametrize("m", [2, 3])
def test_kernels_carry_the_full_mass(m):
    # integrate the kernels over the plane with adaptive quadrature (kink at r/2)
    from scipy.integrate import quad

    r = 0.8

    def planar(i):
        return quad(lambda s: 2 * math.pi * s * radial_kernels(np.array([s]), r, PHI, m)[i][0], 0, r,
                    points=[r / 2], epsabs=0, epsrel=1e-13, limit=200)[0]

    assert planar(0) == pytest.approx(PHI_MASS[m] * r**m, rel=1e-10)
    assert planar(1) == pytest.approx(SHELL_MASS[m](r), rel=1e-10)


@pytest.mark.parametrize("name,x,r", [("q2_branch", (0.3, 0.1), 0.5), ("q2_branch", (0.6, 0.0), 0.5),
                                      ("cylinder3", (0.1, 0.0, 0.2), 0.5), ("cylinder3", (0.45, 0.3, -0.1), 0.4),
                                      ("q3_quadratic", (0.0, 0.2), 0.5)])
def test_reduced_rule_masses(name, x, r):
    f = builtin_field(name)
    assert needs_reduction(f, x, r)
    nodes = reduced_nodes(f, x, r, PHI, QuadratureScheme())
    assert np.sum(nodes.w * nodes.kvol) == pytest.approx(PHI_MASS[f.m] * r**f.m, rel=1e-10)
    assert np.sum(nodes.w * nodes.kshell) == pytest.approx(SHELL_MASS[f.m](r), rel=1e-8)


def test_reduced_rule_resolves_the_branch_point():
    """int_{B_r(c)} |p|^(1/2) dp with the branch point inside, against a fine polar oracle."""
    f = builtin_field("q2_branch")
    c, r = np.array([0.2, 0.1]), 0.5
    nodes = reduced_nodes(f, c, r, PHI, QuadratureScheme())
    got = np.sum(nodes.w * nodes.kvol * np.linalg.norm(nodes.y, axis=1) ** 0.5)
    # oracle: polar coordinates about the branch point, scipy adaptive quadrature
    from scipy.integrate import dblquad

    def g(s, th):
        p = np.array([s * math.cos(th), s * math.sin(th)])
        return s * math.sqrt(s) * float(PHI(np.linalg.norm(p - c) / r))

    ref, _ = dblquad(g, 0, 2 * math.pi, 0, lambda th: 1.0, epsabs=1e-12, epsrel=1e-11)
    assert got == pytest.approx(ref, rel=1e-8)


def test_needs_reduction_cases():
    f = builtin_field("q2_branch")
    assert not needs_reduction(f, (0.0, 0.0), 0.5)
    assert not needs_reduction(f, (1.5, 0.0), 0.5)
    assert needs_reduction(f, (0.9, 0.0), 0.5)
    assert not needs_reduction(builtin_field("cylinder3"), (0.0, 0.0, 0.7), 0.5)
