import math
from fractions import Fraction

import numpy as np
import pytest

from app.errors import CalibrationError, DomainError
from app.utils.generators import (
    GeneratorConstants,
    calibrate,
    closed_form,
    cross_check_bases,
    pf_residual_closed_form,
    published_form,
)
from app.utils.quadrature import PF_SYSTEMS, arc_integral_dy, generator_quadrature
from app.utils.reduction import GeneratorId


def test_linear_constant(constants):
    assert constants.c1 == pytest.approx(-math.pi / (2 * math.sqrt(2)), rel=1e-9)
    assert constants.residual < 1e-8
    assert constants.eta == "1/1"
    assert len(constants.calibration_h) == 5


def test_vanishing_constant(constants):
    # I20 closed form is zero at h = -1/2
    assert constants.c2 == pytest.approx((1 + math.log(0.5)) / 2, abs=1e-12)


def test_i11_matches_quadrature(constants):
    assert closed_form(GeneratorId.I11, constants, 1, -0.3) == pytest.approx(
        arc_integral_dy(1, 1, 1, -0.3, 1, 1e-12), abs=1e-8
    )


@pytest.mark.parametrize("gen", list(GeneratorId))
def test_closed_forms_match_quadrature(constants, gen):
    for h in (-0.45, -0.3, -0.12, -0.05):
        assert closed_form(gen, constants, 1, h) == pytest.approx(generator_quadrature(gen, h, 1, 1e-12), abs=1e-8)


@pytest.mark.parametrize("gen", list(GeneratorId))
def test_closed_forms_vanish_at_center(constants, gen):
    assert closed_form(gen, constants, 1, -0.5) == 0.0


def test_closed_forms_other_eta(constants_half):
    h = -0.6
    for gen in (GeneratorId.J20, GeneratorId.V11, GeneratorId.Vt11, GeneratorId.U20):
        assert closed_form(gen, constants_half, "1/2", h) == pytest.approx(
            generator_quadrature(gen, h, "1/2", 1e-12), abs=1e-8
        )


def test_closed_form_accepts_arrays(constants):
    h = np.array([-0.4, -0.2])
    values = closed_form(GeneratorId.J11, constants, 1, h)
    assert values.shape == (2,)
    assert values[1] == pytest.approx(closed_form(GeneratorId.J11, constants, 1, -0.2))


def test_closed_form_domain(constants):
    with pytest.raises(DomainError):
        closed_form(GeneratorId.I01, constants, 1, 0.0)
    with pytest.raises(DomainError):
        closed_form(GeneratorId.I01, constants, 1, -0.7)
    with pytest.raises(DomainError):
        closed_form(GeneratorId.I01, constants, 2, -0.1)


def test_calibration_needs_three_samples():
    with pytest.raises(CalibrationError):
        calibrate(1, h_samples=[-0.3, -0.2])
    with pytest.raises(DomainError):
        calibrate(1, h_samples=[-0.3, -0.2, 0.1])


def test_calibration_rejects_inconsistent_oracle():
    def noisy(contour, i, j, h, eta):
        return 1.0 + h

    with pytest.raises(CalibrationError):
        calibrate(1, oracle=noisy)


def test_constants_json_round_trip(constants):
    restored = GeneratorConstants.model_validate_json(constants.model_dump_json())
    assert restored == constants
    assert restored.eta_value == 1


def test_published_u01_differs(constants):
    h = -0.25
    reference = generator_quadrature(GeneratorId.U01, h, 1, 1e-12)
    assert closed_form(GeneratorId.U01, constants, 1, h) == pytest.approx(reference, abs=1e-10)
    assert abs(published_form(GeneratorId.U01, constants, 1, h) - reference) > 1e-3


def test_cross_check_report(constants):
    rows = {row["generator"]: row for row in cross_check_bases(constants, 1, -0.3)}
    assert set(rows) == {"U01", "U20", "U10", "U11", "V10", "V11", "Vt10", "Vt11", "V01", "Vt01"}
    for row in rows.values():
        assert "closed_form" not in row["flags"]
        assert "constituent_sum" not in row["flags"]
    assert "published_form" in rows["U01"]["flags"]
    assert "published_form" in rows["U20"]["flags"]
    assert rows["V01"]["quadrature"] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("pair", list(PF_SYSTEMS))
def test_closed_forms_satisfy_picard_fuchs(constants, pair):
    for h in (-0.4, -0.25, -0.1):
        r1, r2 = pf_residual_closed_form(pair, h, constants, 1)
        assert abs(r1) < 1e-6
        assert abs(r2) < 1e-6


@pytest.mark.parametrize("fixture, eta", [("constants", 1), ("constants_half", "1/2")])
def test_line_integrals_negative_on_annulus(request, fixture, eta):
    k = request.getfixturevalue(fixture)
    center = -0.5 / float(Fraction(eta))
    for fraction in np.linspace(0.02, 0.98, 9):
        h = center * (1 - fraction)
        for gen in (GeneratorId.I01, GeneratorId.J01):
            assert closed_form(gen, k, eta, h) < 0
            assert generator_quadrature(gen, h, eta, 1e-12) < 0


@pytest.mark.parametrize("fixture, eta", [("constants", 1), ("constants_half", "1/2")])
@pytest.mark.parametrize("gen", list(GeneratorId))
def test_closed_forms_vanish_approaching_center(request, fixture, eta, gen):
    # square-root rate at worst: |G(center + delta)| <= 5 sqrt(delta)
    k = request.getfixturevalue(fixture)
    center = -0.5 / float(Fraction(eta))
    for delta in (1e-6, 1e-8):
        assert abs(closed_form(gen, k, eta, center + delta)) <= 5 * math.sqrt(delta)
