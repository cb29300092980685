import math

import numpy as np
import pytest

from app.errors import DomainError
from app.utils.quadrature import (
    PF_SYSTEMS,
    annulus,
    arc_integral_dx,
    arc_integral_dy,
    arc_parametrization,
    contour_integral_dy,
    first_integral,
    green_residual,
    oval_endpoints,
    pf_residual,
    segment_integral,
)
from app.utils.reduction import Contour, GeneratorId


def test_annulus():
    assert annulus(1) == (-0.5, 0.0)
    assert annulus("1/2") == (-1.0, 0.0)


def test_oval_corners():
    geom = oval_endpoints(-0.25, 1)
    assert geom.A == pytest.approx((0.0, 2 + math.sqrt(2)))
    assert geom.C == pytest.approx((0.0, 2 - math.sqrt(2)))
    assert geom.B == pytest.approx((0.5, 1.0))
    assert geom.D == pytest.approx((-0.5, 1.0))
    assert max(geom.residuals().values()) < 1e-12
    assert geom.y_C < 1 < geom.y_A


def test_oval_collapses_at_center():
    geom = oval_endpoints(-0.5, 1)
    assert geom.A == geom.B == geom.C == geom.D == (0.0, 1.0)
    assert arc_integral_dy(1, 0, 1, -0.5, 1) == 0.0


def test_arc_parametrization_lies_on_oval():
    arc = arc_parametrization(2, -0.2, 2)
    lo, hi = arc.y_range
    for y in (lo + 0.1 * (hi - lo), 0.5 * (lo + hi), hi - 0.1 * (hi - lo)):
        assert arc.x(y) > 0
        assert first_integral(arc.x(y), y, 2) == pytest.approx(-0.2, abs=1e-12)


def test_i01_value():
    assert arc_integral_dy(1, 0, 1, -0.25, 1) == pytest.approx(-math.sqrt(2) / 2, rel=1e-10)


def test_left_arcs_mirror_right_arcs():
    # even i flips sign, odd i keeps it
    assert arc_integral_dy(3, 0, 1, -0.25, 1) == pytest.approx(-arc_integral_dy(2, 0, 1, -0.25, 1), rel=1e-10)
    assert arc_integral_dy(4, 1, 2, -0.3, 1) == pytest.approx(arc_integral_dy(1, 1, 2, -0.3, 1), rel=1e-10)


def test_upsilon_vanishes_for_even_i():
    assert contour_integral_dy(Contour.UPSILON, 0, 1, -0.3, 1) == pytest.approx(0.0, abs=1e-12)


def test_segments():
    assert segment_integral(1, 0, -0.25, 1) == pytest.approx(-0.5)
    assert segment_integral(4, 1, -0.25, 1) == pytest.approx(0.125)


@pytest.mark.parametrize("side", [1, 2, 3, 4])
@pytest.mark.parametrize("i, exponent", [(0, -3), (1, -1), (2, 0), (3, 2), (4, -2)])
def test_green_identity(side, i, exponent):
    assert abs(green_residual(side, i, exponent, -0.3, 1, 1e-12)) < 1e-8


def test_dx_integral_rejects_bad_input():
    with pytest.raises(DomainError):
        arc_integral_dx(1, 0, -4, -0.25, 1)
    with pytest.raises(DomainError):
        arc_integral_dx(1, 0, 0, 0.0, 1)
    with pytest.raises(DomainError):
        arc_integral_dy(5, 0, 0, -0.25, 1)


def test_pf_first_system():
    r1, r2 = pf_residual((GeneratorId.I01, GeneratorId.I20), -0.25, 1, 1e-5)
    assert abs(r1) < 1e-6
    assert abs(r2) < 1e-6


def test_pf_inhomogeneous_term_discriminates():
    h = -0.25
    s = math.sqrt(h + 0.5)
    r1, r2 = pf_residual((GeneratorId.V10, GeneratorId.V11), h, 1, 1e-5)
    assert abs(r1) < 1e-6
    assert abs(r2) < 1e-6
    # same residual with the one-arc coefficient -s in place of -2s
    assert abs(r2 - s) > 1e-3


@pytest.mark.slow
@pytest.mark.parametrize("pair", list(PF_SYSTEMS))
@pytest.mark.parametrize("eta", ["1/2", "1", "2"])
def test_pf_all_systems(pair, eta):
    center, _ = annulus(eta)
    for fraction in (0.2, 0.5, 0.8):
        r1, r2 = pf_residual(pair, center * (1 - fraction), eta, 1e-5)
        assert abs(r1) < 1e-6 and abs(r2) < 1e-6


def test_pf_rejects_step_outside_annulus():
    with pytest.raises(DomainError):
        pf_residual((GeneratorId.I01, GeneratorId.I20), -1e-6, 1, 1e-5)
    with pytest.raises(DomainError):
        pf_residual((GeneratorId.I01, GeneratorId.I10), -0.25, 1)


@pytest.mark.parametrize("eta, indices", [(1, (5, 6)), (2, (3, 4))])
def test_dx_integrals_accept_roundoff_limited_results(eta, indices):
    center, _ = annulus(eta)
    for fraction in (0.15, 0.5, 0.85):
        h = center * (1 - fraction)
        for side in (1, 2, 3, 4):
            for i in indices:
                fine = arc_integral_dx(side, i, 0, h, eta, 1e-12)
                coarse = arc_integral_dx(side, i, 0, h, eta, 1e-10)
                assert abs(fine - coarse) <= 1e-9 * max(1.0, abs(coarse))


def test_refining_tolerance_is_stable():
    rng = np.random.default_rng(29)
    for _ in range(20):
        side = int(rng.integers(1, 5))
        i = int(rng.integers(0, 5))
        j = int(rng.integers(-1, 5))
        h = -0.5 * float(rng.uniform(0.1, 0.9))
        coarse = arc_integral_dy(side, i, j, h, 1, 1e-9)
        fine = arc_integral_dy(side, i, j, h, 1, 1e-10)
        assert abs(fine - coarse) < 1e-9 * max(1.0, abs(coarse))


@pytest.mark.parametrize("contour, sides", [(Contour.GAMMA, (1, 2)), (Contour.GAMMA_TILDE, (3, 4))])
def test_gamma_in_one_pass_equals_sum_of_sides(contour, sides):
    rng = np.random.default_rng(31)
    for _ in range(10):
        i = int(rng.integers(0, 5))
        j = int(rng.integers(-1, 5))
        h = -0.5 * float(rng.uniform(0.1, 0.9))
        whole = contour_integral_dy(contour, i, j, h, 1, 1e-12)
        parts = sum(arc_integral_dy(side, i, j, h, 1, 1e-12) for side in sides)
        assert abs(whole - parts) <= 1e-10 * max(1.0, abs(parts))
