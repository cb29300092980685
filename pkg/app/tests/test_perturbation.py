import json
from fractions import Fraction

import numpy as np
import pytest

from app.errors import SpecValidationError
from app.utils.perturbation import Case, PerturbationSpec, load_spec, random_spec


def test_parses_both_coefficient_layouts():
    listed = PerturbationSpec.from_json({"eta": "1/2", "n": 2, "f": {"1": [[1, 1, "3/4"], [0, 2, "-1"]]}})
    mapped = PerturbationSpec.from_json({"eta": "1/2", "n": 2, "f": {"1": {"1,1": "3/4", "0,2": -1}}})
    assert listed == mapped
    assert listed.coefficient("f", 1, 1, 1) == Fraction(3, 4)
    assert listed.coefficient("g", 3, 0, 0) == 0
    assert list(listed.terms("f", 1)) == [(0, 2, Fraction(-1)), (1, 1, Fraction(3, 4))]


def test_zero_coefficients_dropped():
    spec = PerturbationSpec.from_json({"eta": 1, "n": 1, "g": {"2": [[0, 0, "0"]]}})
    assert spec.is_zero()


@pytest.mark.parametrize(
    "data",
    [
        {"eta": "1", "n": 1, "f": {"1": [[1, 1, "1"]]}},
        {"eta": "0", "n": 1},
        {"eta": "-1/2", "n": 1},
        {"eta": "1", "n": 0},
        {"eta": "1", "n": 2, "f": {"5": [[0, 0, "1"]]}},
        {"eta": "1", "n": 2, "f": {"1": [[0, 0, "1"], [0, 0, "2"]]}},
        {"eta": "1", "n": 2, "f": {"1": [[0, 0]]}},
        {"eta": "1", "n": 2, "g": {"1": [[-1, 1, "1"]]}},
        {"eta": "1", "n": 2, "g": {"1": [[0, 1, "x"]]}},
        {"eta": "1", "n": 1, "case": "thm2", "f": {"1": [[0, 0, "1"]]}},
        {"eta": "1", "n": 1, "case": "cusp"},
    ],
)
def test_invalid_specs(data):
    with pytest.raises(SpecValidationError):
        PerturbationSpec.from_json(data)


def test_case_ties():
    thm3 = PerturbationSpec.from_json(
        {"eta": 1, "n": 1, "case": "thm3", "g": {"1": [[1, 0, "2"]], "4": [[1, 0, "2"]]}}
    )
    assert thm3.piece("g", 4) == {(1, 0): Fraction(2)}
    with pytest.raises(SpecValidationError):
        thm3.with_case(Case.THM2)
    assert thm3.with_case("general").case is Case.GENERAL


def test_one_line_layouts():
    spec = PerturbationSpec.one_line("x", 1, 1, first={"f": [[0, 0, "1"]]}, second={"g": [[1, 0, "2"]]})
    assert spec.case is Case.THM2
    assert spec.piece("f", 2) == spec.piece("f", 1)
    assert spec.piece("g", 4) == {(1, 0): Fraction(2)}
    spec = PerturbationSpec.one_line("y", 1, 1, first={"f": [[0, 1, "1"]]})
    assert spec.case is Case.THM3
    assert spec.piece("f", 4) == {(0, 1): Fraction(1)}
    assert spec.piece("f", 2) == {}
    with pytest.raises(SpecValidationError):
        PerturbationSpec.one_line("z", 1, 1)


def test_json_round_trip():
    spec = PerturbationSpec.from_json(
        {"eta": "2/3", "n": 2, "case": "general", "f": {"3": [[2, 0, "5/7"]]}, "g": {"1": [[0, 1, "-1/2"]]}}
    )
    data = spec.to_json()
    assert data["eta"] == "2/3"
    assert data["f"] == {"3": [[2, 0, "5/7"]]}
    assert PerturbationSpec.from_json(json.loads(json.dumps(data))) == spec


def test_evaluate_piece():
    spec = PerturbationSpec.from_json({"eta": 1, "n": 2, "f": {"2": [[1, 1, "2"], [0, 0, "1"]]}})
    assert spec.evaluate("f", 2, 0.5, 3.0) == pytest.approx(4.0)
    assert spec.evaluate("f", 1, 0.5, 3.0) == 0.0


def test_sum_of_specs():
    a = PerturbationSpec.from_json({"eta": 1, "n": 1, "case": "smooth", "f": {str(k): [[0, 0, "1"]] for k in range(1, 5)}})
    b = PerturbationSpec.from_json({"eta": 1, "n": 2, "f": {"1": [[0, 0, "-1"]], "2": [[2, 0, "1"]]}})
    total = a + b
    assert total.case is Case.GENERAL
    assert total.n == 2
    assert total.piece("f", 1) == {}
    assert total.piece("f", 2) == {(0, 0): Fraction(1), (2, 0): Fraction(1)}
    with pytest.raises(SpecValidationError):
        a + PerturbationSpec.from_json({"eta": 2, "n": 1})


def test_load_spec(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"eta": "1", "n": 1, "f": {"1": [[0, 0, "4"]]}}))
    assert load_spec(path).coefficient("f", 1, 0, 0) == 4
    with pytest.raises(SpecValidationError):
        load_spec(tmp_path / "missing.json")
    path.write_text("{not json")
    with pytest.raises(SpecValidationError):
        load_spec(path)
    path.write_text("[1, 2]")
    with pytest.raises(SpecValidationError):
        load_spec(path)


@pytest.mark.parametrize("case", list(Case))
def test_random_specs_respect_case(case):
    rng = np.random.default_rng(7)
    for n in (1, 3):
        spec = random_spec(n, case, "1/2", rng)
        assert spec.case is case
        assert spec.n == n
        for kind in ("f", "g"):
            for k in (1, 2, 3, 4):
                assert all(i + j <= n for i, j in spec.piece(kind, k))
