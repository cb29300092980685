import pytest
from pydantic import ValidationError

from app.errors import DomainError
from app.utils.perturbation import PerturbationSpec
from app.utils.quadrature import first_integral
from app.utils.simulate import (
    PhaseState,
    SimConfig,
    find_limit_cycles,
    integrate_orbit,
    locate,
    poincare_displacement,
    region_of,
    section_ordinate,
    trajectory_frame,
    vector_field,
)


@pytest.fixture
def zero_spec() -> PerturbationSpec:
    return PerturbationSpec.from_json({"eta": "1", "n": 1})


def test_vector_field(cycle_spec):
    state = PhaseState(x=0.5, y=1.0, region=1)
    assert vector_field(state, SimConfig(eta=1, eps=0), cycle_spec) == pytest.approx((-0.5, -1.0))
    # f^1(0.5, 1) = 1
    assert vector_field(state, SimConfig(eta=1, eps=0.1), cycle_spec) == pytest.approx((-0.4, -1.0))
    # region 2 has no perturbation
    assert vector_field(PhaseState(x=0.5, y=1.0, region=2), SimConfig(eta=1, eps=0.1), cycle_spec) == pytest.approx(
        (-0.5, -1.0)
    )


def test_regions(cycle_spec):
    assert [region_of(x, y, 1) for x, y in [(0.5, 2), (0.5, 0.5), (-0.5, 0.5), (-0.5, 2)]] == [1, 2, 3, 4]
    assert region_of(0, 2, 1) is None
    assert region_of(0.3, 1, 1) is None
    cfg = SimConfig(eta=1, eps=0)
    assert locate(0.0, 2.0, cfg, cycle_spec).region == 1
    assert locate(0.0, 2.0, cfg, cycle_spec, reverse=True).region == 4


def test_unperturbed_orbit_is_closed(zero_spec):
    cfg = SimConfig(eta=1, eps=0)
    start = PhaseState(x=0.0, y=2.0, region=1)
    result = integrate_orbit(start, cfg, zero_spec)
    assert result.event_lines == ["y", "x", "y", "x"]
    assert [(e.from_region, e.to_region) for e in result.events] == [(1, 2), (2, 3), (3, 4), (4, 1)]
    assert all(e.residual < 1e-12 for e in result.events)
    assert result.end.y == pytest.approx(2.0, abs=1e-9)
    assert abs(first_integral(result.end.x, result.end.y, 1) - first_integral(0.0, 2.0, 1)) < 1e-9


def test_time_reversal(cycle_spec):
    cfg = SimConfig(eta=1, eps=1e-3)
    forward = integrate_orbit(PhaseState(x=0.0, y=2.2, region=1), cfg, cycle_spec)
    back = integrate_orbit(locate(0.0, forward.end.y, cfg, cycle_spec, reverse=True), cfg, cycle_spec, reverse=True)
    assert back.event_lines == ["y", "x", "y", "x"]
    assert back.end.y == pytest.approx(2.2, abs=1e-8)


def test_displacement_matches_melnikov(cycle_spec):
    # dH/dy on the section is (y - 1) / y^3 for eta = 1
    eps = 1e-4
    y0 = 2.5
    h0 = first_integral(0.0, y0, 1)
    s = (h0 + 0.5) ** 0.5
    melnikov = 2**0.5 * s - 4 * s * s
    d = poincare_displacement(y0, SimConfig(eta=1, eps=eps), cycle_spec)
    assert (y0 - 1) / y0**3 * d / eps == pytest.approx(melnikov, rel=1e-2)


def test_displacement_scales_with_eps(cycle_spec):
    small = poincare_displacement(1.8, SimConfig(eta=1, eps=1e-4), cycle_spec)
    large = poincare_displacement(1.8, SimConfig(eta=1, eps=2e-4), cycle_spec)
    assert large / small == pytest.approx(2.0, rel=1e-2)


def test_limit_cycle_near_melnikov_zero(cycle_spec):
    cfg = SimConfig(eta=1, eps=1e-3)
    report = find_limit_cycles(cfg, cycle_spec, [1.6, 2.5], melnikov_zeros=[-0.375])
    assert not report.degenerate
    assert len(report.cycles) == 1
    cycle = report.cycles[0]
    assert cycle.y_star == pytest.approx(2.0, abs=0.05)
    assert cycle.h_star == pytest.approx(-0.375, abs=0.01)
    assert 0.9 < cycle.multiplier < 1.0
    assert cycle.matched_zero == -0.375
    assert cycle.within_tolerance


def test_zero_perturbation_is_degenerate(zero_spec):
    report = find_limit_cycles(SimConfig(eta=1, eps=1e-3), zero_spec, [1.5, 2.5, 3.5], noise_floor=1e-8)
    assert report.degenerate
    assert report.cycles == []


def test_section_ordinate():
    assert section_ordinate(-0.375, 1) == pytest.approx(2.0)
    assert first_integral(0.0, section_ordinate(-0.2, 2), 2) == pytest.approx(-0.2)
    with pytest.raises(DomainError):
        section_ordinate(0.0, 1)
    with pytest.raises(DomainError):
        section_ordinate(-0.6, 1)


def test_displacement_rejects_low_ordinate(cycle_spec):
    with pytest.raises(DomainError):
        poincare_displacement(1.0, SimConfig(eta=1, eps=1e-3), cycle_spec)


def test_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(eta=1, eps=2.0)
    with pytest.raises(ValidationError):
        SimConfig(eta=1, rtol=1e-6)
    with pytest.raises(ValidationError):
        SimConfig(eta=0)


def test_eta_mismatch(cycle_spec):
    with pytest.raises(DomainError):
        integrate_orbit(PhaseState(x=0.0, y=3.0, region=1), SimConfig(eta=2, eps=0), cycle_spec)


def test_trajectory_frame(zero_spec):
    result = integrate_orbit(PhaseState(x=0.0, y=2.0, region=1), SimConfig(eta=1, eps=0), zero_spec)
    frame = trajectory_frame(result)
    assert list(frame.columns) == ["t", "x", "y", "region"]
    assert frame["t"].is_monotonic_increasing
    assert set(frame["region"]) == {1, 2, 3, 4}
