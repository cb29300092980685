"""
Independent numerical oracle: oval geometry, arc integrals by adaptive
quadrature and finite-difference Picard-Fuchs residuals.

Arcs are parametrised through 1/y = 1/eta + R*sin(theta) with
R = sqrt(2/eta) * sqrt(h + 1/(2*eta)). On the oval this gives
x = +-sqrt(eta/2) * R * cos(theta) * y, so every integrand below is smooth in
theta, including at the corners A and C where x vanishes.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.integrate import quad

from app.config import get_settings
from app.errors import DomainError, QuadratureError
from app.utils.algebra import as_fraction
from app.utils.reduction import Contour, GeneratorId

logger = logging.getLogger(__name__)

# MELNIKOV_QUAD_TOL overrides
DEFAULT_TOL = get_settings().quad_tol
QUAD_LIMIT = 200
ROUNDOFF_ULPS = 1e3

# oriented theta range and sign of x on each side (clockwise flow)
_SIDE_THETA = {
    1: (-math.pi / 2, 0.0, 1.0),
    2: (0.0, math.pi / 2, 1.0),
    3: (math.pi / 2, 0.0, -1.0),
    4: (0.0, -math.pi / 2, -1.0),
}

_GENERATOR_CONTOUR = {
    "I": Contour.SIDE1,
    "J": Contour.SIDE2,
    "U": Contour.GAMMA,
    "V": Contour.UPSILON,
    "Vt": Contour.UPSILON_TILDE,
}

# inhomogeneous coefficient kappa of each Picard-Fuchs system:
#   even pair: G = s^2 F' + h G' - kappa s^2
#   odd pair:  G = F' + 2h G' - kappa s
PF_SYSTEMS: Dict[Tuple[GeneratorId, GeneratorId], float] = {
    (GeneratorId.I01, GeneratorId.I20): 0.5,
    (GeneratorId.I10, GeneratorId.I11): 1.0,
    (GeneratorId.J01, GeneratorId.J20): -0.5,
    (GeneratorId.J10, GeneratorId.J11): -1.0,
    (GeneratorId.U01, GeneratorId.U20): 0.0,
    (GeneratorId.U10, GeneratorId.U11): 0.0,
    (GeneratorId.V10, GeneratorId.V11): 2.0,
    (GeneratorId.Vt10, GeneratorId.Vt11): -2.0,
}


def _eta_float(eta) -> float:
    value = float(as_fraction(eta)) if not isinstance(eta, float) else eta
    if value <= 0:
        raise DomainError("eta must be positive")
    return value


def annulus(eta) -> Tuple[float, float]:
    """Closed-open energy range [-1/(2*eta), 0) of the period annulus"""
    return -0.5 / _eta_float(eta), 0.0


def first_integral(x: float, y: float, eta) -> float:
    """H(x, y) = (x^2 - y + eta/2) / y^2"""
    eta = _eta_float(eta)
    return (x * x - y + eta / 2) / (y * y)


def _check_level(h: float, eta: float) -> float:
    center = -0.5 / eta
    if h >= 0 or h < center - 1e-15 * abs(center):
        raise DomainError(f"h={h} outside the annulus [{center}, 0)")
    return max(h, center)


def _radius(h: float, eta: float) -> float:
    base = max(h + 0.5 / eta, 0.0)
    return math.sqrt(2.0 / eta) * math.sqrt(base)


@dataclass(frozen=True)
class OvalGeometry:
    """Corners of the oval H = h cut by the switching lines"""

    h: float
    eta: float
    A: Tuple[float, float]
    B: Tuple[float, float]
    C: Tuple[float, float]
    D: Tuple[float, float]

    @property
    def y_A(self) -> float:
        return self.A[1]

    @property
    def y_C(self) -> float:
        return self.C[1]

    @property
    def x_B(self) -> float:
        return self.B[0]

    def residuals(self) -> Dict[str, float]:
        """|H(P) - h| at each corner"""
        return {
            name: abs(first_integral(p[0], p[1], self.eta) - self.h)
            for name, p in (("A", self.A), ("B", self.B), ("C", self.C), ("D", self.D))
        }


@dataclass(frozen=True)
class ArcParametrization:
    """One side of the oval as a graph x(y) over its y-range"""

    side: int
    h: float
    eta: float
    y_start: float
    y_end: float
    x_sign: float

    @property
    def y_range(self) -> Tuple[float, float]:
        return min(self.y_start, self.y_end), max(self.y_start, self.y_end)

    def x(self, y: float) -> float:
        radicand = self.h * y * y + y - self.eta / 2
        return self.x_sign * math.sqrt(max(radicand, 0.0))


def oval_endpoints(h: float, eta) -> OvalGeometry:
    """
    Corner points A, B, C, D of the oval H = h.

    y_C uses the cancellation-free form eta/(1 + sqrt(2*eta*h + 1)).
    """
    eta = _eta_float(eta)
    h = _check_level(float(h), eta)
    w = math.sqrt(max(2 * eta * h + 1, 0.0))
    if w == 0.0:
        center = (0.0, eta)
        return OvalGeometry(h, eta, center, center, center, center)
    y_a = -(1 + w) / (2 * h)
    y_c = eta / (1 + w)
    x_b = math.sqrt(max(eta * eta * h + eta / 2, 0.0))
    return OvalGeometry(h, eta, (0.0, y_a), (x_b, eta), (0.0, y_c), (-x_b, eta))


def arc_parametrization(side: int, h: float, eta) -> ArcParametrization:
    geom = oval_endpoints(h, eta)
    ends = {
        1: (geom.y_A, geom.eta, 1.0),
        2: (geom.eta, geom.y_C, 1.0),
        3: (geom.y_C, geom.eta, -1.0),
        4: (geom.eta, geom.y_A, -1.0),
    }
    if side not in ends:
        raise DomainError(f"side must be 1..4, got {side}")
    y_start, y_end, sign = ends[side]
    return ArcParametrization(side, geom.h, geom.eta, y_start, y_end, sign)


def _integrate(func: Callable[[float], float], a: float, b: float, tol: float, label: str) -> float:
    """
    scipy quad with absolute and relative tolerance tol.

    When quad stops on roundoff, the result is kept if its error estimate is
    within ROUNDOFF_ULPS machine epsilons of the integral of |func|.
    """
    out = quad(func, a, b, epsabs=tol, epsrel=tol, limit=QUAD_LIMIT, full_output=1)
    value, abserr = out[0], out[1]
    if len(out) > 3 and abserr > max(tol, tol * abs(value)):
        if "roundoff" in out[3]:
            magnitude = quad(lambda t: abs(func(t)), a, b, epsrel=1e-6, limit=QUAD_LIMIT, full_output=1)[0]
            floor = ROUNDOFF_ULPS * np.finfo(float).eps * magnitude
            if abserr <= floor:
                logger.debug(f"{label}: roundoff limited, estimate {abserr:.3g} within {floor:.3g}")
                return value
        raise QuadratureError(f"{label}: tolerance {tol:g} not met (estimate {abserr:.3g}): {out[3]}")
    return value


def _dy_over_span(
    theta_a: float, theta_b: float, x_sign: float, i: int, j: int, h: float, eta, tol: float, label: str
) -> float:
    """
    integral of x^i y^(j-3) dy for theta from theta_a to theta_b on the half
    of the oval where x has sign x_sign.

    With u = 1/y = 1/eta + R sin(theta) the integrand becomes
    -x_sign^i (eta/2)^(i/2) R^(i+1) cos^(i+1)(theta) u^(1-i-j).
    """
    if i < 0:
        raise DomainError(f"i must be non-negative, got {i}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    eta_f = _eta_float(eta)
    h = _check_level(float(h), eta_f)
    radius = _radius(h, eta_f)
    if radius == 0.0:
        return 0.0
    u0 = 1.0 / eta_f
    power = 1 - i - j
    prefactor = -(x_sign**i) * (eta_f / 2) ** (i / 2) * radius ** (i + 1)

    def integrand(theta: float) -> float:
        return math.cos(theta) ** (i + 1) * (u0 + radius * math.sin(theta)) ** power

    return prefactor * _integrate(integrand, theta_a, theta_b, tol, label)


def arc_integral_dy(side: int, i: int, j: int, h: float, eta, tol: float = DEFAULT_TOL) -> float:
    """integral of x^i y^(j-3) dy along one oriented side"""
    if side not in _SIDE_THETA:
        raise DomainError(f"side must be 1..4, got {side}")
    theta_a, theta_b, x_sign = _SIDE_THETA[side]
    return _dy_over_span(theta_a, theta_b, x_sign, i, j, h, eta, tol, f"dy side {side} ({i},{j})")


def arc_integral_dx(side: int, i: int, exponent: int, h: float, eta, tol: float = DEFAULT_TOL) -> float:
    """
    integral of x^i y^exponent dx along one oriented side.

    In theta, dx = -x_sign sqrt(eta/2) R (sin(theta)/eta + R) u^-2 dtheta, so
    no corner singularity survives.
    """
    if i < 0:
        raise DomainError(f"i must be non-negative, got {i}")
    if exponent < -3:
        raise DomainError(f"exponent must be >= -3, got {exponent}")
    eta_f = _eta_float(eta)
    h = _check_level(float(h), eta_f)
    if side not in _SIDE_THETA:
        raise DomainError(f"side must be 1..4, got {side}")
    radius = _radius(h, eta_f)
    if radius == 0.0:
        return 0.0
    theta_a, theta_b, x_sign = _SIDE_THETA[side]
    u0 = 1.0 / eta_f
    power = -i - exponent - 2
    prefactor = -(x_sign ** (i + 1)) * (eta_f / 2) ** ((i + 1) / 2) * radius ** (i + 1)

    def integrand(theta: float) -> float:
        sin_t = math.sin(theta)
        return math.cos(theta) ** i * (u0 * sin_t + radius) * (u0 + radius * sin_t) ** power

    value = _integrate(integrand, theta_a, theta_b, tol, f"dx side {side} ({i},{exponent})")
    return prefactor * value


def _joined_span(sides: Tuple[int, ...]) -> Optional[Tuple[float, float, float]]:
    """Single theta range for consecutive sides on one half of the oval, else None"""
    spans = [_SIDE_THETA[side] for side in sides]
    for (_, end, sign), (start, _, next_sign) in zip(spans, spans[1:]):
        if end != start or sign != next_sign:
            return None
    return spans[0][0], spans[-1][1], spans[0][2]


def contour_integral_dy(contour: Contour, i: int, j: int, h: float, eta, tol: float = DEFAULT_TOL) -> float:
    """
    integral of x^i y^(j-3) dy over a contour. Gamma and gamma-tilde are
    integrated in one pass; contours crossing x = 0 are summed side by side.
    """
    span = _joined_span(contour.sides)
    if span is not None and len(contour.sides) > 1:
        return _dy_over_span(*span, i, j, h, eta, tol, f"dy {contour.value} ({i},{j})")
    return sum(arc_integral_dy(side, i, j, h, eta, tol) for side in contour.sides)


def segment_integral(side: int, i: int, h: float, eta) -> float:
    """
    integral of x^i dx over the oriented segment on y = eta closing a side:
    BG, GB, DG, GD for sides 1..4.
    """
    geom = oval_endpoints(h, eta)
    x_b = geom.x_B
    ends = {1: (x_b, 0.0), 2: (0.0, x_b), 3: (-x_b, 0.0), 4: (0.0, -x_b)}
    if side not in ends:
        raise DomainError(f"side must be 1..4, got {side}")
    start, end = ends[side]
    return (end ** (i + 1) - start ** (i + 1)) / (i + 1)


def green_residual(side: int, i: int, exponent: int, h: float, eta, tol: float = DEFAULT_TOL) -> float:
    """
    Residual of the Green's-formula conversion of a dx integral:
    arc_dx + exponent/(i+1) * arc_dy(i+1, exponent+2) + eta^exponent * segment.
    """
    eta_f = _eta_float(eta)
    lhs = arc_integral_dx(side, i, exponent, h, eta, tol)
    area = 0.0
    if exponent != 0:
        area = exponent / (i + 1) * arc_integral_dy(side, i + 1, exponent + 2, h, eta, tol)
    return lhs + area + eta_f**exponent * segment_integral(side, i, h, eta)


def generator_contour(gen: GeneratorId) -> Contour:
    return _GENERATOR_CONTOUR[gen.value[:-2]]


def generator_quadrature(gen: GeneratorId, h: float, eta, tol: float = DEFAULT_TOL) -> float:
    """Value of a generator as an integral over its contour"""
    i, j = gen.indices
    return contour_integral_dy(generator_contour(gen), i, j, h, eta, tol)


def central_difference(func: Callable[[float], float], h: float, step: float, richardson: bool = False) -> float:
    """Central difference, optionally Richardson-extrapolated from step and step/2"""
    coarse = (func(h + step) - func(h - step)) / (2 * step)
    if not richardson:
        return coarse
    half = step / 2
    fine = (func(h + half) - func(h - half)) / (2 * half)
    return (4 * fine - coarse) / 3


def pf_residual(
    pair: Tuple[GeneratorId, GeneratorId],
    h: float,
    eta,
    step: float = 1e-5,
    evaluate: Optional[Callable[[GeneratorId, float], float]] = None,
    tol: float = 1e-12,
) -> Tuple[float, float]:
    """
    Residuals of the Picard-Fuchs system satisfied by a generator pair, with
    derivatives from central differences.

    `evaluate(gen, h)` supplies generator values; quadrature by default.
    Within 1000 steps of an annulus end the derivative is
    Richardson-extrapolated.
    """
    pair = (GeneratorId(pair[0]), GeneratorId(pair[1]))
    if pair not in PF_SYSTEMS:
        raise DomainError(f"no Picard-Fuchs system for {pair[0].value}, {pair[1].value}")
    eta_f = _eta_float(eta)
    lo, hi = annulus(eta_f)
    if h - step <= lo or h + step >= hi:
        raise DomainError(f"h +- step must stay inside ({lo}, {hi})")
    if evaluate is None:

        def evaluate(gen: GeneratorId, x: float) -> float:
            return generator_quadrature(gen, x, eta_f, tol)

    near_end = min(h - lo, hi - h) < 1000 * step
    first, second = pair
    kappa = PF_SYSTEMS[pair]
    s2 = h + 0.5 / eta_f
    f_val = evaluate(first, h)
    g_val = evaluate(second, h)
    f_der = central_difference(lambda x: evaluate(first, x), h, step, near_end)
    g_der = central_difference(lambda x: evaluate(second, x), h, step, near_end)

    if first.indices == (0, 1):
        r1 = f_val - 2 * s2 * f_der
        r2 = g_val - s2 * f_der - h * g_der + kappa * s2
    else:
        r1 = f_val - s2 * f_der
        r2 = g_val - f_der - 2 * h * g_der + kappa * math.sqrt(s2)
    logger.debug(f"PF {first.value},{second.value} at h={h}: {r1:.3e}, {r2:.3e}")
    return r1, r2
