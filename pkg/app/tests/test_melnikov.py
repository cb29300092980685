import math
from fractions import Fraction

import numpy as np
import pytest

from app.errors import DegenerateMelnikovError, DomainError, SpecValidationError
from app.utils.algebra import AlgebraicTail, PolyH
from app.utils.melnikov import (
    assemble,
    count_zeros,
    envelope_degree_table,
    eval_M,
    eval_numerator,
    four_arc_quadrature,
    max_observed_counts,
    published_degree_table,
    scan_grid,
    structure_check,
    theoretical_bound,
    zero_samples_frame,
)
from app.utils.perturbation import Case, PerturbationSpec, random_spec
from app.utils.reduction import GeneratorId, ReducedExpr

G = GeneratorId


@pytest.mark.parametrize(
    "n, case, expected",
    [(1, "general", 18), (2, "general", 59), (2, "thm2", 14), (2, "thm3", 12), (5, "smooth", 5)],
)
def test_theoretical_bound(n, case, expected):
    assert theoretical_bound(n, case) == expected


def test_theoretical_bound_rejects_bad_input():
    with pytest.raises(DomainError):
        theoretical_bound(0, "general")
    with pytest.raises(ValueError):
        theoretical_bound(1, "cusp")


def test_assemble_cycle_spec(cycle_spec):
    # -I01 - 4 s^2
    expected = ReducedExpr({G.I01: -1}, AlgebraicTail.single(2, -4), 0, 1)
    assert assemble(cycle_spec) == expected


def test_assemble_dx_term(dx_spec):
    expected = ReducedExpr({G.I10: 3}, AlgebraicTail({1: PolyH([2, 2])}), 0, 1)
    expr = assemble(dx_spec)
    assert expr == expected
    assert expr.degrees() == {"I10": 0, "psi": 1}


def test_cycle_spec_zero(cycle_spec, constants):
    report = count_zeros(assemble(cycle_spec), constants, n=1, case="general")
    assert report.count == 1
    assert report.zeros[0].refined_h == pytest.approx(-0.375, abs=1e-9)
    assert report.bound == 18
    assert report.within_bound


def test_zero_of_hand_built_expression(constants):
    # -sqrt(2) s + 1/2 vanishes at s^2 = 1/8
    expr = ReducedExpr({G.I01: 1}, AlgebraicTail.single(0, Fraction(1, 2)), 0, 1)
    report = count_zeros(expr, constants, samples=2000)
    assert [round(z.refined_h, 9) for z in report.zeros] == [-0.375]
    assert report.scan_params.samples == 2000
    assert report.bound is None


def test_zero_expression_is_degenerate(constants):
    with pytest.raises(DegenerateMelnikovError):
        count_zeros(ReducedExpr.zero(1), constants)


def test_scan_grid_clusters_at_ends():
    grid = scan_grid(1, samples=101, endpoint_margin=1e-6)
    assert grid[0] > -0.5 and grid[-1] < 0
    assert np.all(np.diff(grid) > 0)
    assert grid[1] - grid[0] < grid[51] - grid[50]
    with pytest.raises(DomainError):
        scan_grid(1, samples=1)


def test_eval_matches_four_arc_quadrature(constants):
    spec = PerturbationSpec.from_json(
        {
            "eta": "1",
            "n": 2,
            "f": {"1": [[1, 0, "2"], [0, 2, "-1/3"]], "3": [[1, 1, "1"]], "4": [[0, 0, "-2"]]},
            "g": {"2": [[2, 0, "1"], [0, 1, "3/2"]], "3": [[0, 0, "1/4"]], "4": [[1, 0, "-1"]]},
        }
    )
    expr = assemble(spec)
    for h in (-0.45, -0.3, -0.1):
        assert eval_M(expr, constants, h) == pytest.approx(four_arc_quadrature(spec, h, 1e-12), rel=1e-7, abs=1e-9)


def test_eval_numerator_has_same_sign(constants):
    spec = PerturbationSpec.from_json({"eta": "1", "n": 2, "f": {"2": [[0, 2, "1"]]}})
    expr = assemble(spec)
    assert expr.denom_power >= 1
    h = -0.2
    assert eval_numerator(expr, constants, h) == pytest.approx(eval_M(expr, constants, h) * h**expr.denom_power)


def test_eval_rejects_h_outside_annulus(cycle_spec, constants):
    with pytest.raises(DomainError):
        eval_M(assemble(cycle_spec), constants, 0.0)
    with pytest.raises(DomainError):
        eval_M(assemble(cycle_spec), constants, -0.5)


def test_linearity():
    rng = np.random.default_rng(3)
    a = random_spec(3, "general", 1, rng)
    b = random_spec(3, "general", 1, rng)
    assert assemble(a + b) == assemble(a) + assemble(b)


def test_smooth_spec_through_both_paths(constants):
    spec = random_spec(3, "smooth", 1, np.random.default_rng(11))
    general = assemble(spec, "general")
    gamma = assemble(spec)
    assert set(gamma.generators) <= {G.U01, G.U20, G.U10, G.U11}
    for h in (-0.4, -0.25, -0.12):
        assert eval_M(gamma, constants, h) == pytest.approx(eval_M(general, constants, h), rel=1e-8, abs=1e-9)


def test_assemble_override_revalidates(dx_spec):
    with pytest.raises(SpecValidationError):
        assemble(dx_spec, "thm2")


def test_smooth_keeps_only_odd_i():
    spec = PerturbationSpec.from_json(
        {"eta": 1, "n": 1, "case": "smooth", "f": {str(k): [[0, 0, "1"]] for k in range(1, 5)}}
    )
    assert assemble(spec).is_zero()


def test_degree_tables():
    assert published_degree_table(2, "general") == {"alpha": 2, "beta": 1, "gamma": 1, "delta": 2, "phi": 3, "psi": 2}
    assert published_degree_table(4, "general")["alpha"] == 2
    assert published_degree_table(5, "general")["alpha"] == 4
    assert set(published_degree_table(4, "thm3")) == {"gamma", "delta", "phi", "psi"}
    assert envelope_degree_table(4, "general")["alpha"] == 3


def test_structure_published_table_exceeded():
    # b^1_{3,0} reaches I_{4,-1}, whose I01 coefficient has degree 1
    spec = PerturbationSpec.from_json({"eta": 1, "n": 4, "g": {"1": [[3, 0, "1"]]}})
    report = structure_check(assemble(spec), 4, "general")
    assert report.passed
    assert not report.published_passed
    assert report.passed_against == "envelope"
    assert "published table is exceeded" in report.message
    alpha = next(row for row in report.rows if row.name == "I01")
    assert alpha.degree == 3 and alpha.published_bound == 2 and alpha.envelope_bound == 3


def test_structure_rejects_foreign_generators(cycle_spec):
    report = structure_check(assemble(cycle_spec), 1, "thm2")
    assert not report.passed


def test_structure_zero_expression():
    report = structure_check(ReducedExpr.zero(1), 3, "smooth")
    assert report.passed and report.message == "zero expression"


@pytest.mark.parametrize("case", list(Case))
def test_structure_of_random_specs(case):
    rng = np.random.default_rng(5)
    for n in range(1, 7):
        for _ in range(3):
            spec = random_spec(n, case, "1/2", rng)
            report = structure_check(assemble(spec), n, case)
            assert report.passed, report.model_dump()


def test_zero_samples_frame(cycle_spec, constants):
    frame = zero_samples_frame(assemble(cycle_spec), constants, samples=200)
    assert list(frame.columns) == ["h", "M"]
    assert len(frame) == 200
    assert frame["M"].iloc[0] > 0 > frame["M"].iloc[-1]


@pytest.mark.slow
def test_max_observed_counts(constants):
    frame = max_observed_counts(constants, n_values=(1, 2), trials=10, seed=1, samples=1000)
    assert len(frame) == 8
    assert (frame["violations"] == 0).all()
    assert (frame["max_count"] <= frame["bound"]).all()
