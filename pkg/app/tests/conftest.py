import logging

import pytest

from app.utils.generators import GeneratorConstants, calibrate, quadrature_oracle
from app.utils.perturbation import PerturbationSpec

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")


@pytest.fixture(scope="session")
def constants() -> GeneratorConstants:
    """Calibrated closed-form constants for eta = 1"""
    return calibrate(1, quadrature_oracle(1e-12))


@pytest.fixture(scope="session")
def constants_half() -> GeneratorConstants:
    return calibrate("1/2", quadrature_oracle(1e-12))


@pytest.fixture
def cycle_spec() -> PerturbationSpec:
    """f^1 = 4 - 3y on region 1 only; M(h) = sqrt(2) s - 4 s^2 vanishes at h = -3/8"""
    return PerturbationSpec.from_json({"eta": "1", "n": 1, "f": {"1": [[0, 0, "4"], [0, 1, "-3"]]}})


@pytest.fixture
def dx_spec() -> PerturbationSpec:
    """g^1 = 1 on region 1 only"""
    return PerturbationSpec.from_json({"eta": "1", "n": 1, "g": {"1": [[0, 0, "1"]]}})
