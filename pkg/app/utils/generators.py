"""
Closed forms of the generator integrals and calibration of their free
integration constants against the quadrature oracle.
"""

import logging
import math
import time
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from app.errors import CalibrationError, DomainError
from app.utils.algebra import as_fraction, format_fraction
from app.utils.quadrature import (
    DEFAULT_TOL,
    PF_SYSTEMS,
    annulus,
    contour_integral_dy,
    generator_contour,
    generator_quadrature,
    pf_residual,
)
from app.utils.reduction import Contour, GeneratorId

logger = logging.getLogger(__name__)

Oracle = Callable[[Contour, int, int, float, Any], float]

MIN_CALIBRATION_SAMPLES = 3
CALIBRATION_TOL = 1e-8

# constant fixed by I_{1,0}-type ratios, per contour
_LINEAR_CONSTANTS = (
    ("c1", Contour.SIDE1),
    ("d1", Contour.SIDE2),
    ("e1", Contour.GAMMA),
    ("c1_hat", Contour.UPSILON),
    ("d1_hat", Contour.UPSILON_TILDE),
)

# constant fixed by vanishing of the logarithmic generator at the center
_VANISHING_CONSTANTS = (
    ("c2", GeneratorId.I20),
    ("d2", GeneratorId.J20),
    ("e2", GeneratorId.U20),
)

# generators whose published closed form differs from the one used here
PUBLISHED_VARIANTS = (GeneratorId.U01, GeneratorId.U20, GeneratorId.U11, GeneratorId.Vt11)

GENERATOR_GROUPS = {
    "U": (GeneratorId.U01, GeneratorId.U20, GeneratorId.U10, GeneratorId.U11),
    "V": (GeneratorId.V10, GeneratorId.V11),
    "Vt": (GeneratorId.Vt10, GeneratorId.Vt11),
}


class GeneratorConstants(BaseModel):
    """Calibrated integration constants for one eta"""

    model_config = ConfigDict(frozen=True)

    c1: float
    c2: float
    d1: float
    d2: float
    e1: float
    e2: float
    c1_hat: float
    d1_hat: float
    eta: str
    calibration_h: List[float] = []
    residual: float = 0.0

    @field_validator("eta", mode="before")
    @classmethod
    def _normalise_eta(cls, value: Any) -> str:
        eta = as_fraction(value)
        if eta <= 0:
            raise ValueError("eta must be a positive rational")
        return format_fraction(eta)

    @property
    def eta_value(self) -> Fraction:
        return Fraction(self.eta)

    def as_dict(self) -> Dict[str, float]:
        return {
            name: getattr(self, name)
            for name in ("c1", "c2", "d1", "d2", "e1", "e2", "c1_hat", "d1_hat")
        }


def _terms(h: np.ndarray, eta: float) -> Dict[str, np.ndarray]:
    """Elementary pieces shared by the closed forms"""
    s2 = np.maximum(h + 0.5 / eta, 0.0)
    s = np.sqrt(s2)
    p = 2 * eta * h
    w = np.sqrt(np.maximum(p + 1, 0.0))
    root_h = np.sqrt(-h)
    with np.errstate(divide="ignore"):
        # ln((1-w)/(1+w)) written without the 1-w cancellation near h = 0
        log_ratio = np.log(-p) - 2 * np.log1p(w)
        log_abs_h = np.log(-h)
    gap = np.sqrt(np.maximum(-p * (p + 1), 0.0))
    return {
        "s": s,
        "s2": s2,
        "w": w,
        "root_h": root_h,
        "log_ratio": log_ratio,
        "log_abs_h": log_abs_h,
        "arc": np.arctan2(p + 0.5, gap),
        "arc_shifted": np.arctan2(p - 0.5, gap),
    }


def _raw_closed_form(gen: GeneratorId, k: Dict[str, float], eta: float, h: np.ndarray, published: bool = False) -> np.ndarray:
    t = _terms(h, eta)
    s, s2, w, rh = t["s"], t["s2"], t["w"], t["root_h"]
    r2e = math.sqrt(2 * eta)
    quarter = math.pi / 4

    if gen in (GeneratorId.I01, GeneratorId.J01):
        return -math.sqrt(2 / eta) * s
    if gen is GeneratorId.U01:
        if published:
            return -(2 / eta) * s
        return -2 * math.sqrt(2 / eta) * s

    linear = {
        GeneratorId.I10: "c1",
        GeneratorId.J10: "d1",
        GeneratorId.U10: "e1",
        GeneratorId.V10: "c1_hat",
        GeneratorId.Vt10: "d1_hat",
    }
    if gen in linear:
        return k[linear[gen]] * s2

    if gen is GeneratorId.I20:
        return 0.5 * h * t["log_ratio"] + 0.5 * h * t["log_abs_h"] - w / (2 * eta) - k["c2"] * h - 1 / (4 * eta)
    if gen is GeneratorId.J20:
        return 0.5 * h * t["log_ratio"] - 0.5 * h * t["log_abs_h"] - w / (2 * eta) - k["d2"] * h + 1 / (4 * eta)
    if gen is GeneratorId.U20:
        if published:
            return 0.5 * h * t["log_ratio"] - w / (2 * eta) - k["e2"] * h
        return h * t["log_ratio"] - w / eta - k["e2"] * h

    if gen is GeneratorId.I11:
        c1 = k["c1"]
        return 0.5 * rh * t["arc"] - s + (quarter - c1 * r2e) * rh + c1
    if gen is GeneratorId.J11:
        d1 = k["d1"]
        return -0.5 * rh * t["arc"] + s - (quarter + d1 * r2e) * rh + d1
    if gen is GeneratorId.U11:
        e1 = k["e1"]
        if published:
            return (quarter - e1 * r2e) * rh + e1
        return e1 - e1 * r2e * rh
    if gen is GeneratorId.V11:
        c = k["c1_hat"]
        return rh * t["arc"] - 2 * s + (2 * quarter - c * r2e) * rh + c
    if gen is GeneratorId.Vt11:
        d = k["d1_hat"]
        if published:
            return -rh * t["arc_shifted"] - 2 * s - (2 * quarter + d * r2e) * rh + d
        return -rh * t["arc"] + 2 * s - (2 * quarter + d * r2e) * rh + d
    raise DomainError(f"unknown generator {gen}")


def _evaluate(gen: GeneratorId, k: GeneratorConstants, eta: Any, h: Any, published: bool) -> Any:
    eta_f = float(as_fraction(eta))
    if eta_f <= 0:
        raise DomainError("eta must be positive")
    if as_fraction(eta) != k.eta_value:
        raise DomainError(f"constants calibrated for eta={k.eta}, not {format_fraction(as_fraction(eta))}")
    h_arr = np.asarray(h, dtype=float)
    center, _ = annulus(eta_f)
    if np.any(h_arr >= 0) or np.any(h_arr < center - 1e-15 * abs(center)):
        raise DomainError(f"h outside [{center}, 0)")
    h_arr = np.maximum(h_arr, center)
    values = _raw_closed_form(GeneratorId(gen), k.as_dict(), eta_f, h_arr, published)
    values = np.where(h_arr <= center, 0.0, values)
    if values.ndim == 0:
        return float(values)
    return values


def closed_form(gen: GeneratorId, k: GeneratorConstants, eta: Any, h: Any) -> Any:
    """
    Generator value from its closed form; h may be a float or an array.

    Every generator is 0 at h = -1/(2*eta); arctan terms use atan2 so their
    arguments' infinite limits at both annulus ends come out as +-pi/2.
    """
    return _evaluate(gen, k, eta, h, published=False)


def published_form(gen: GeneratorId, k: GeneratorConstants, eta: Any, h: Any) -> Any:
    """Closed form as originally stated, kept for the cross-check report"""
    return _evaluate(gen, k, eta, h, published=True)


def default_samples(eta: Any, count: int = 5) -> List[float]:
    center, _ = annulus(eta)
    return [center * (1 - f) for f in np.linspace(0.15, 0.85, count)]


def quadrature_oracle(tol: float = 1e-12) -> Oracle:
    def oracle(contour: Contour, i: int, j: int, h: float, eta: Any) -> float:
        return contour_integral_dy(contour, i, j, h, eta, tol)

    return oracle


def calibrate(
    eta: Any,
    oracle: Optional[Oracle] = None,
    h_samples: Optional[Sequence[float]] = None,
    tol: float = CALIBRATION_TOL,
) -> GeneratorConstants:
    """
    Fit the free constants of the closed forms.

    c1, d1, e1, c1_hat, d1_hat are the ratios of the (1,0) integrals on
    their contours to h + 1/(2*eta), which must be the same at every sample;
    c2, d2, e2 make the logarithmic generators vanish at the center. The
    result is then checked generator by generator against the oracle.
    """
    eta = as_fraction(eta)
    if eta <= 0:
        raise DomainError("eta must be a positive rational")
    eta_f = float(eta)
    oracle = oracle or quadrature_oracle()
    samples = list(h_samples) if h_samples is not None else default_samples(eta)
    if len(samples) < MIN_CALIBRATION_SAMPLES:
        raise CalibrationError(
            f"need at least {MIN_CALIBRATION_SAMPLES} h samples, got {len(samples)}"
        )
    center, _ = annulus(eta_f)
    for h in samples:
        if not center < h < 0:
            raise DomainError(f"calibration sample h={h} outside the open annulus")

    start_time = time.time()
    constants: Dict[str, float] = {}
    spread = 0.0
    for name, contour in _LINEAR_CONSTANTS:
        ratios = np.array([oracle(contour, 1, 0, h, eta) / (h + 0.5 / eta_f) for h in samples])
        constants[name] = float(np.mean(ratios))
        spread = max(spread, float(np.max(np.abs(ratios - constants[name]))))

    for name, gen in _VANISHING_CONSTANTS:
        trial = dict(constants, c2=0.0, d2=0.0, e2=0.0)
        at_center = float(_raw_closed_form(gen, trial, eta_f, np.asarray(center)))
        constants[name] = at_center / center

    k = GeneratorConstants(eta=eta, calibration_h=samples, residual=0.0, **constants)

    mismatch = 0.0
    worst = ""
    for gen in GeneratorId:
        i, j = gen.indices
        contour = generator_contour(gen)
        for h in samples:
            diff = abs(closed_form(gen, k, eta, h) - oracle(contour, i, j, h, eta))
            if diff > mismatch:
                mismatch, worst = diff, f"{gen.value} at h={h}"
    residual = max(spread, mismatch)
    logger.info(
        f"Calibrated eta={format_fraction(eta)} in {(time.time() - start_time) * 1000:.0f} ms: "
        f"spread {spread:.2e}, closed-form mismatch {mismatch:.2e} ({worst})"
    )
    if residual > tol:
        raise CalibrationError(
            f"calibration residual {residual:.3e} exceeds {tol:g} "
            f"(ratio spread {spread:.3e}, worst closed form {worst})"
        )
    return k.model_copy(update={"residual": residual})


def constituent_sum(gen: GeneratorId, k: GeneratorConstants, eta: Any, h: float) -> float:
    """U, V and Vt generators rebuilt from the one-arc closed forms"""
    i, j = gen.indices
    prefix = gen.value[:-2]
    if prefix == "U":
        return closed_form(GeneratorId(f"I{i}{j}"), k, eta, h) + closed_form(GeneratorId(f"J{i}{j}"), k, eta, h)
    if prefix == "V":
        return 2 * closed_form(GeneratorId(f"I{i}{j}"), k, eta, h)
    if prefix == "Vt":
        return 2 * closed_form(GeneratorId(f"J{i}{j}"), k, eta, h)
    return closed_form(gen, k, eta, h)


def cross_check_bases(
    k: GeneratorConstants,
    eta: Any,
    h: float,
    tol: float = CALIBRATION_TOL,
    quad_tol: float = DEFAULT_TOL,
) -> List[Dict[str, Any]]:
    """
    Compare the combined-contour generators against their one-arc
    constituents and the quadrature oracle.

    One row per generator with the closed form used here, the published
    closed form, the constituent sum and the quadrature value; `flags` names
    every comparison off by more than tol, quadrature being the reference.
    The rows for V01 and Vt01 record the vanishing of even-i integrals over
    the symmetric contours.
    """
    rows: List[Dict[str, Any]] = []
    for gen in (*GENERATOR_GROUPS["U"], *GENERATOR_GROUPS["V"], *GENERATOR_GROUPS["Vt"]):
        reference = generator_quadrature(gen, h, eta, quad_tol)
        values = {
            "closed_form": closed_form(gen, k, eta, h),
            "published_form": published_form(gen, k, eta, h),
            "constituent_sum": constituent_sum(gen, k, eta, h),
        }
        rows.append(_cross_check_row(gen.value, h, values, reference, tol))

    for name, contour in (("V01", Contour.UPSILON), ("Vt01", Contour.UPSILON_TILDE)):
        reference = contour_integral_dy(contour, 0, 1, h, eta, quad_tol)
        side = Contour.SIDE1 if contour is Contour.UPSILON else Contour.SIDE2
        one_arc = contour_integral_dy(side, 0, 1, h, eta, quad_tol)
        # the mirrored arc carries (-1)^(i+1) = -1 times the same integral
        mirrored = -one_arc
        values = {"closed_form": 0.0, "published_form": 0.0, "constituent_sum": one_arc + mirrored}
        rows.append(_cross_check_row(name, h, values, reference, tol))
    return rows


def _cross_check_row(name: str, h: float, values: Dict[str, float], reference: float, tol: float) -> Dict[str, Any]:
    row: Dict[str, Any] = {"generator": name, "h": h, "quadrature": reference}
    flags = []
    for label, value in values.items():
        row[label] = value
        error = abs(value - reference)
        row[f"{label}_error"] = error
        if error > tol:
            flags.append(label)
    row["flags"] = ",".join(flags)
    return row


def pf_residual_closed_form(
    pair: Tuple[GeneratorId, GeneratorId],
    h: float,
    k: GeneratorConstants,
    eta: Any,
    step: float = 1e-5,
) -> Tuple[float, float]:
    """Picard-Fuchs residuals with the closed forms in place of quadrature"""
    return pf_residual(pair, h, eta, step, evaluate=lambda gen, x: closed_form(gen, k, eta, x))


__all__ = [
    "GeneratorConstants",
    "PF_SYSTEMS",
    "PUBLISHED_VARIANTS",
    "calibrate",
    "closed_form",
    "constituent_sum",
    "cross_check_bases",
    "default_samples",
    "pf_residual_closed_form",
    "published_form",
    "quadrature_oracle",
]
