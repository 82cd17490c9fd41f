import math

import numpy as np
import pytest

from qvalued.builtin import SINGLE_TERM_CASES, builtin_field
from qvalued.errors import DegenerateHeightError, ParameterError
from qvalued.frequency import (
    dirichlet_D,
    doubling_residual,
    energy_E,
    epsilon_regularity_scan,
    frequency_I,
    frequency_profile,
    frequency_variation_check,
    height_H,
    identity_residuals,
    pinch_W,
    pinching_integral,
    smoothed_functionals,
    uniform_bound_report,
)
from qvalued.grids import RegularGrid
from qvalued.multifield import CylindricalExtension, PlanarBranch
from qvalued.quadrature import QuadratureScheme, WeightProfile

# Closed forms for the default profile at r = 1, by hand:
#   u = z:        |Du|^2 = 2, |u|^2 = R^2, |d_nu u|^2 = 1  ->  D = H = E = 7 pi / 6
#   u = z^(1/2):  |Du|^2 = 2 * 2 * (1/4) / R, |u|^2 = 2 R   ->  D = 3 pi / 2, H = 3 pi
LINEAR = PlanarBranch(1, ((1, 1.0),))


def test_linear_field_closed_form():
    rep = frequency_I(LINEAR, [0, 0], 1.0)
    for val in (rep.D, rep.H, rep.E):
        assert val == pytest.approx(7 * math.pi / 6, rel=1e-13)
    assert rep.I == pytest.approx(1.0, abs=1e-13)


def test_square_root_closed_form():
    f = builtin_field("q2_branch")
    assert dirichlet_D(f, [0, 0], 1.0) == pytest.approx(1.5 * math.pi, rel=1e-13)
    assert height_H(f, [0, 0], 1.0) == pytest.approx(3 * math.pi, rel=1e-13)
    assert energy_E(f, [0, 0], 1.0) == pytest.approx(0.75 * math.pi, rel=1e-13)


@pytest.mark.parametrize("p,q", SINGLE_TERM_CASES)
@pytest.mark.parametrize("r", [0.1, 0.7])
def test_homogeneous_fields_have_constant_frequency(p, q, r):
    f = PlanarBranch(q, ((p, 1.0),))
    assert frequency_I(f, [0, 0], r).I == pytest.approx(p / q, abs=1e-12)


def test_cylinder_frequency_along_spine():
    f = builtin_field("cylinder3")
    for z in (-0.3, 0.0, 0.5):
        assert frequency_I(f, [0, 0, z], 0.4).I == pytest.approx(0.5, abs=1e-12)


def test_scale_covariance():
    # g(x) = f(lam x) has coefficients c lam^(p/Q); I_g(0, r/lam) = I_f(0, r)
    lam = 3.0
    f = builtin_field("mixed")
    g = PlanarBranch(2, tuple((p, c * lam ** (p / 2)) for p, c in f.terms))
    for r in (0.2, 0.9):
        assert frequency_I(g, [0, 0], r / lam).I == pytest.approx(frequency_I(f, [0, 0], r).I, abs=1e-12)


def test_translation_invariance():
    f = builtin_field("mixed")
    g = builtin_field("shifted_mixed")
    a = frequency_I(f, [0.1, 0.05], 0.3).I
    b = frequency_I(g, np.array([0.1, 0.05]) + [0.03, -0.02], 0.3).I
    assert a == pytest.approx(b, abs=1e-9)


def test_mixed_field_increases():
    f = builtin_field("mixed")
    prof = frequency_profile(f, [0, 0], [0.05, 0.25, 0.5, 1.0])
    assert np.all(np.diff(prof.values) > 0)
    # frozen regression values
    assert prof.values == pytest.approx([0.500062, 0.50156, 0.50621, 0.52439], abs=1e-5)


def _mixed_polar_oracle(r):
    # branches u = zeta + 0.2 zeta^3, zeta^2 = z; |Du|^2 = 2|u'(z)|^2
    from scipy.integrate import dblquad

    def sums(rho, th):
        zeta = np.sqrt(rho * np.exp(1j * th))
        g = h = 0.0
        for w in (zeta, -zeta):
            g += 2 * abs(0.5 / w + 0.3 * w) ** 2
            h += abs(w + 0.2 * w**3) ** 2
        return g, h

    def phi(t):
        return 1.0 if t <= 0.5 else 2 - 2 * t

    opts = dict(epsabs=1e-12, epsrel=1e-12)
    D = dblquad(lambda rho, th: phi(rho / r) * sums(rho, th)[0] * rho, 0, 2 * np.pi, 0, r, **opts)[0]
    # -phi' = 2 on [r/2, r]; |u|^2/|z| times the area element rho
    H = dblquad(lambda rho, th: 2 * sums(rho, th)[1], 0, 2 * np.pi, r / 2, r, **opts)[0]
    return r * D / H


@pytest.mark.parametrize("r", [0.05, 0.25, 0.5, 1.0])
def test_mixed_field_matches_polar_oracle(r):
    assert frequency_I(builtin_field("mixed"), [0, 0], r).I == pytest.approx(_mixed_polar_oracle(r), abs=1e-8)


def test_cauchy_schwarz_and_identities_off_center():
    f = builtin_field("q2_branch")
    res = identity_residuals(f, [0.2, 0.1], 0.5)
    assert res.max_identity < 1e-6
    assert res.cauchy_schwarz > -1e-9


def test_pinching_and_doubling():
    f = builtin_field("q3_branch")
    assert pinch_W(f, [0, 0], 0.1, 1.0) == pytest.approx(0.0, abs=1e-12)
    m = builtin_field("mixed")
    assert pinch_W(m, [0, 0], 0.1, 1.0) > 0.01
    assert doubling_residual(m, [0, 0], 0.2, 1.0) < 1e-8
    assert pinch_W(m, [0, 0], 0.5, 0.5) == 0.0
    with pytest.raises(ParameterError):
        pinch_W(m, [0, 0], 0.5, 0.1)


def test_degenerate_height():
    zero = PlanarBranch(2, ())
    rep = smoothed_functionals(zero, [0, 0], 0.5)
    assert math.isnan(rep.I)
    with pytest.raises(DegenerateHeightError):
        frequency_I(zero, [0, 0], 0.5)
    with pytest.raises(DegenerateHeightError):
        height_H(zero, [0, 0], 0.5)


def test_ball_preconditions():
    f = builtin_field("q2_branch")
    with pytest.raises(ParameterError):
        frequency_I(f, [0, 0], 0.0)
    with pytest.raises(ParameterError):
        frequency_I(f, [60, 0], 10.0)


def test_profile_rejects_unsorted_radii():
    with pytest.raises(ParameterError):
        frequency_profile(builtin_field("q2_branch"), [0, 0], [0.5, 0.2])


def test_qmc_cross_check():
    f = builtin_field("cylinder3")
    x, r = [0.05, 0.02, 0.1], 0.5
    a = frequency_I(f, x, r).I
    b = frequency_I(f, x, r, q=QuadratureScheme(method="qmc")).I
    assert b == pytest.approx(a, abs=1e-2)


def test_custom_profile_keeps_homogeneous_frequency():
    phi = WeightProfile.piecewise_linear(((0, 1), (0.5, 1), (0.75, 0.3), (1, 0)))
    f = builtin_field("q2_cubic")
    assert frequency_I(f, [0, 0], 0.6, phi).I == pytest.approx(1.5, abs=1e-12)
    assert identity_residuals(f, [0, 0], 0.6, phi).max_identity < 1e-6


def test_epsilon_regularity_detects_large_threshold():
    """With eps above the frequency every node near the branch point is flagged."""
    f = builtin_field("q2_branch")
    grid = RegularGrid.cube([0, 0], 0.2, 9)
    assert epsilon_regularity_scan(f, grid, 0.4, 0.05) == []
    flagged = epsilon_regularity_scan(f, grid, 0.4, 10.0)
    assert len(flagged) > 0
    assert all(np.linalg.norm(np.subtract(v.x, v.qpoint)) <= 0.1 + 1e-12 for v in flagged)
    assert epsilon_regularity_scan(LINEAR, grid, 0.4, 10.0) == []


def test_uniform_bounds_are_finite():
    rep = uniform_bound_report(builtin_field("mixed"), [0, 0], 0.05)
    assert 0 < rep.h_ratio < 10
    assert 0 < rep.i_ratio < 1


def test_pinching_integral_vanishes_for_homogeneous_fields():
    rep = pinching_integral(builtin_field("q2_cubic"), [0, 0], scale=0.2)
    assert rep.defect < 1e-20 and abs(rep.pinching) < 1e-12
    mixed = pinching_integral(builtin_field("mixed"), [0, 0], scale=0.2)
    assert mixed.defect > 0 and mixed.pinching > 0
    assert math.isfinite(mixed.ratio)


def test_variation_check_on_spine_and_degenerate_segment():
    f = builtin_field("cylinder3")
    rep = frequency_variation_check(f, [0, 0, 0], [0, 0, 0.1], 0.4)
    assert rep.max_slope < 1e-9 and rep.bound < 1e-5
    same = frequency_variation_check(f, [0, 0, 0], [0, 0, 0], 0.4)
    assert same.max_slope == 0.0
    mixed = frequency_variation_check(builtin_field("mixed"), [0, 0], [0.05, 0], 0.4)
    assert math.isfinite(mixed.ratio) and mixed.max_slope > 0
    with pytest.raises(ParameterError):
        frequency_variation_check(f, [0, 0, 0], [0, 0, 0.5], 0.4)


def test_higher_dimensional_cylinder():
    f = CylindricalExtension(PlanarBranch(2, ((1, 1.0),)), 4)
    assert frequency_I(f, np.zeros(4), 0.5).I == pytest.approx(0.5, abs=1e-12)
