"""
Reduction of the Abelian integrals

    I_{i,j}(h) = integral of x^i y^(j-3) dy over an arc of the oval H = h

to a four-element generator basis plus an algebraic tail, in exact rational
arithmetic.

Arcs follow the clockwise flow: side 1 runs A -> B (x > 0, y > eta),
side 2 B -> C, side 3 C -> D, side 4 D -> A. On each arc
x^2 = h*y^2 + y - eta/2 and s = sqrt(h + 1/(2*eta)) is the half-width of the
oval on the line y = eta divided by eta.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from app.errors import DomainError
from app.utils.algebra import (
    AlgebraicTail,
    PolyH,
    RealLike,
    as_fraction,
    format_fraction,
    poly_eval,
    tail_eval,
)

logger = logging.getLogger(__name__)

SIDES = (1, 2, 3, 4)
REDUCTION_CACHE_SIZE = 8192


class GeneratorId(str, Enum):
    I01 = "I01"
    I20 = "I20"
    I10 = "I10"
    I11 = "I11"
    J01 = "J01"
    J20 = "J20"
    J10 = "J10"
    J11 = "J11"
    U01 = "U01"
    U20 = "U20"
    U10 = "U10"
    U11 = "U11"
    V10 = "V10"
    V11 = "V11"
    Vt10 = "Vt10"
    Vt11 = "Vt11"

    @property
    def indices(self) -> Tuple[int, int]:
        """(i, j) of the integral this generator stands for"""
        digits = self.value[-2:]
        return int(digits[0]), int(digits[1])

    @property
    def role(self) -> str:
        """Name of its coefficient polynomial in the reduced form"""
        return {
            (0, 1): "alpha",
            (2, 0): "beta",
            (1, 0): "gamma",
            (1, 1): "delta",
        }[self.indices]


GENERAL_BASIS = (
    GeneratorId.I01,
    GeneratorId.I20,
    GeneratorId.I10,
    GeneratorId.I11,
    GeneratorId.J01,
    GeneratorId.J20,
    GeneratorId.J10,
    GeneratorId.J11,
)
GAMMA_BASIS = (GeneratorId.U01, GeneratorId.U20, GeneratorId.U10, GeneratorId.U11)
UPSILON_BASIS = (GeneratorId.V10, GeneratorId.V11, GeneratorId.Vt10, GeneratorId.Vt11)


class Contour(str, Enum):
    """Arcs and unions of arcs the integrals are taken over"""

    SIDE1 = "side1"
    SIDE2 = "side2"
    SIDE3 = "side3"
    SIDE4 = "side4"
    GAMMA = "gamma"  # L1 + L2, right half A -> C
    GAMMA_TILDE = "gamma_tilde"  # L3 + L4, left half C -> A
    UPSILON = "upsilon"  # L4 + L1, upper half D -> B
    UPSILON_TILDE = "upsilon_tilde"  # L2 + L3, lower half B -> D
    OVAL = "oval"

    @property
    def sides(self) -> Tuple[int, ...]:
        return _CONTOUR_SIDES[self]

    @classmethod
    def for_side(cls, side: int) -> "Contour":
        return (cls.SIDE1, cls.SIDE2, cls.SIDE3, cls.SIDE4)[side - 1]


_CONTOUR_SIDES = {
    Contour.SIDE1: (1,),
    Contour.SIDE2: (2,),
    Contour.SIDE3: (3,),
    Contour.SIDE4: (4,),
    Contour.GAMMA: (1, 2),
    Contour.GAMMA_TILDE: (3, 4),
    Contour.UPSILON: (4, 1),
    Contour.UPSILON_TILDE: (2, 3),
    Contour.OVAL: (1, 2, 3, 4),
}

# generators standing for (0,1), (2,0), (1,0), (1,1) and the sign of the
# corner term [x^i y^k] picked up by the recurrence on that contour
_FAMILIES = {
    Contour.SIDE1: ((GeneratorId.I01, GeneratorId.I20, GeneratorId.I10, GeneratorId.I11), 1),
    Contour.SIDE2: ((GeneratorId.J01, GeneratorId.J20, GeneratorId.J10, GeneratorId.J11), -1),
    Contour.GAMMA: ((GeneratorId.U01, GeneratorId.U20, GeneratorId.U10, GeneratorId.U11), 0),
}

_DOUBLED = {
    Contour.UPSILON: (Contour.SIDE1, {GeneratorId.I10: GeneratorId.V10, GeneratorId.I11: GeneratorId.V11}),
    Contour.UPSILON_TILDE: (Contour.SIDE2, {GeneratorId.J10: GeneratorId.Vt10, GeneratorId.J11: GeneratorId.Vt11}),
}


@dataclass(frozen=True)
class IntegralId:
    """I_{i,j} on one side of the oval"""

    side: int
    i: int
    j: int

    def __post_init__(self):
        if self.side not in SIDES:
            raise DomainError(f"side must be one of {SIDES}, got {self.side}")
        if self.i < 0:
            raise DomainError(f"i must be non-negative, got {self.i}")
        if self.j < -1:
            raise DomainError(f"j must be >= -1, got {self.j}")

    @property
    def total(self) -> int:
        return self.i + self.j

    def __str__(self) -> str:
        name = {1: "I", 2: "J", 3: "Jt", 4: "It"}[self.side]
        return f"{name}_{{{self.i},{self.j}}}"


class ReducedExpr:
    """
    [sum_g coeff_g(h) * g(h) + tail(h)] / h**denom_power

    Stored in canonical form: tail folded to half-power indices 0 and 1,
    zero coefficients dropped, and common factors of h cancelled against the
    denominator. Equality is structural on that form.
    """

    __slots__ = ("_basis", "_tail", "_denom_power", "_eta")

    def __init__(
        self,
        basis_coeffs: Optional[Mapping[GeneratorId, Any]] = None,
        tail: Optional[AlgebraicTail] = None,
        denom_power: int = 0,
        eta: Any = 1,
    ):
        if denom_power < 0:
            raise ValueError("denom_power must be non-negative")
        self._eta = as_fraction(eta)
        if self._eta <= 0:
            raise DomainError("eta must be a positive rational")
        basis: Dict[GeneratorId, PolyH] = {}
        for gen, coeff in (basis_coeffs or {}).items():
            poly = coeff if isinstance(coeff, PolyH) else PolyH.constant(coeff)
            if not poly.is_zero():
                basis[GeneratorId(gen)] = poly
        folded = (tail or AlgebraicTail()).fold(self._eta)

        p = denom_power
        while p > 0 and folded.divisible_by_h() and all(c.divisible_by_h() for c in basis.values()):
            basis = {g: c.divide_h() for g, c in basis.items()}
            folded = folded.divide_h()
            p -= 1
        if not basis and folded.is_zero():
            p = 0
        self._basis = {g: basis[g] for g in GeneratorId if g in basis}
        self._tail = folded
        self._denom_power = p

    @classmethod
    def zero(cls, eta: Any) -> "ReducedExpr":
        return cls(eta=eta)

    @classmethod
    def generator(cls, gen: GeneratorId, eta: Any) -> "ReducedExpr":
        return cls({gen: PolyH.constant(1)}, eta=eta)

    @classmethod
    def s_power(cls, m: int, coeff: Any, eta: Any) -> "ReducedExpr":
        """coeff * (h + 1/(2*eta))**(m/2)"""
        return cls(tail=AlgebraicTail.single(m, coeff), eta=eta)

    @property
    def basis_coeffs(self) -> Dict[GeneratorId, PolyH]:
        return dict(self._basis)

    @property
    def tail(self) -> AlgebraicTail:
        return self._tail

    @property
    def denom_power(self) -> int:
        return self._denom_power

    @property
    def eta(self) -> Fraction:
        return self._eta

    @property
    def generators(self) -> Tuple[GeneratorId, ...]:
        return tuple(self._basis)

    def coeff(self, gen: GeneratorId) -> PolyH:
        return self._basis.get(gen, PolyH())

    def is_zero(self) -> bool:
        return not self._basis and self._tail.is_zero()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ReducedExpr):
            return NotImplemented
        return (
            self._eta == other._eta
            and self._denom_power == other._denom_power
            and self._basis == other._basis
            and self._tail == other._tail
        )

    def __hash__(self) -> int:
        return hash((self._eta, self._denom_power, tuple(self._basis.items()), self._tail))

    def __repr__(self) -> str:
        parts = [f"{c!r}*{g.value}" for g, c in self._basis.items()]
        if not self._tail.is_zero():
            parts.append(repr(self._tail))
        body = " + ".join(parts) or "0"
        return f"ReducedExpr(({body}) / h^{self._denom_power}, eta={self._eta})"

    def numerators(self, denom_power: Optional[int] = None) -> Tuple[Dict[GeneratorId, PolyH], AlgebraicTail]:
        """Coefficients and tail over the denominator h**denom_power (>= current)"""
        p = self._denom_power if denom_power is None else denom_power
        if p < self._denom_power:
            raise ValueError(f"cannot express over h^{p}, need at least h^{self._denom_power}")
        shift = p - self._denom_power
        return (
            {g: c.shift_h(shift) for g, c in self._basis.items()},
            self._tail.shift_h(shift),
        )

    def _check_eta(self, other: "ReducedExpr") -> None:
        if self._eta != other._eta:
            raise ValueError(f"eta mismatch: {self._eta} vs {other._eta}")

    def __add__(self, other: "ReducedExpr") -> "ReducedExpr":
        self._check_eta(other)
        p = max(self._denom_power, other._denom_power)
        basis_a, tail_a = self.numerators(p)
        basis_b, tail_b = other.numerators(p)
        basis = dict(basis_a)
        for g, c in basis_b.items():
            basis[g] = basis.get(g, PolyH()) + c
        return ReducedExpr(basis, tail_a + tail_b, p, self._eta)

    def __neg__(self) -> "ReducedExpr":
        return self * -1

    def __sub__(self, other: "ReducedExpr") -> "ReducedExpr":
        return self + (-other)

    def __mul__(self, factor: Any) -> "ReducedExpr":
        """Multiply by a rational scalar or a PolyH"""
        if isinstance(factor, ReducedExpr):
            raise TypeError("products of reduced expressions are not closed in the basis")
        if not isinstance(factor, PolyH):
            factor = as_fraction(factor)
        return ReducedExpr(
            {g: c * factor for g, c in self._basis.items()},
            self._tail * factor,
            self._denom_power,
            self._eta,
        )

    __rmul__ = __mul__

    def divide_h(self) -> "ReducedExpr":
        return ReducedExpr(self._basis, self._tail, self._denom_power + 1, self._eta)

    def rename(self, mapping: Mapping[GeneratorId, GeneratorId], tail_factor: Any = 1) -> "ReducedExpr":
        """Swap generators (keeping coefficients) and rescale the tail"""
        basis: Dict[GeneratorId, PolyH] = {}
        for g, c in self._basis.items():
            target = mapping.get(g, g)
            basis[target] = basis.get(target, PolyH()) + c
        return ReducedExpr(basis, self._tail * tail_factor, self._denom_power, self._eta)

    def evaluate(self, generator_values: Mapping[GeneratorId, RealLike], h: RealLike) -> RealLike:
        """Numeric value given the generators' values at h"""
        total = tail_eval(self._tail, h, self._eta)
        for g, c in self._basis.items():
            if g not in generator_values:
                raise KeyError(f"missing value for generator {g.value}")
            total = total + poly_eval(c, h) * generator_values[g]
        if self._denom_power:
            total = total / np.power(h, self._denom_power)
        return total

    def degrees(self, denom_power: Optional[int] = None) -> Dict[str, int]:
        """
        Degree of every coefficient polynomial over h**denom_power.

        Keys are generator names plus "phi" (tail, index 0) and "psi"
        (tail, index 1); zero entries are omitted.
        """
        basis, tail = self.numerators(denom_power)
        out = {g.value: c.degree for g, c in basis.items()}
        terms = tail.terms
        if 0 in terms:
            out["phi"] = terms[0].degree
        if 1 in terms:
            out["psi"] = terms[1].degree
        return out

    def to_json(self) -> Dict[str, Any]:
        return {
            "eta": format_fraction(self._eta),
            "denom_power": self._denom_power,
            "basis": [{"gen": g.value, "coeffs": c.to_json()} for g, c in self._basis.items()],
            "tail": self._tail.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ReducedExpr":
        basis = {GeneratorId(r["gen"]): PolyH.from_json(r["coeffs"]) for r in data.get("basis", [])}
        return cls(
            basis,
            AlgebraicTail.from_json(data.get("tail", [])),
            int(data.get("denom_power", 0)),
            as_fraction(data.get("eta", "1/1")),
        )


def _h_poly(*coeffs: Any) -> PolyH:
    return PolyH(coeffs)


@lru_cache(maxsize=REDUCTION_CACHE_SIZE)
def _reduce(contour: Contour, i: int, j: int, eta: Fraction) -> ReducedExpr:
    """Recurrence engine on side 1, side 2 or their union (boundary sign 1, -1, 0)"""
    (g01, g20, g10, g11), beta = _FAMILIES[contour]
    gen = {(0, 1): g01, (2, 0): g20, (1, 0): g10, (1, 1): g11}
    if (i, j) in gen:
        return ReducedExpr.generator(gen[(i, j)], eta)

    def rec(a: int, b: int) -> ReducedExpr:
        return _reduce(contour, a, b, eta)

    def s_pow(m: int, coeff: Any) -> ReducedExpr:
        return ReducedExpr.s_power(m, coeff, eta)

    if (i, j) == (0, 0):
        return rec(0, 1) * (1 / eta) + s_pow(2, beta / eta)
    if (i, j) == (1, -1):
        return rec(1, 0) * (1 / eta) + s_pow(3, Fraction(2, 3) * beta / eta)
    if (i, j) == (0, -1):
        coeff = _h_poly(Fraction(4, 3) / eta**2, Fraction(2, 3) / eta)
        return rec(0, 1) * coeff + s_pow(2, 2 * beta / eta**2)
    if (i, j) == (2, -1):
        return rec(0, 1) * _h_poly(Fraction(1, 3) / eta, Fraction(2, 3))
    if (i, j) == (3, -1):
        return rec(1, 1) * PolyH.h() + rec(1, 0) - rec(1, -1) * (eta / 2)

    if i >= 2:
        # 2(i+j-2) I_{i,j} = i I_{i-2,j+1} - i*eta I_{i-2,j} + 2*beta*eta^(i+j-2) s^i
        k = 2 * (i + j - 2)
        expr = rec(i - 2, j + 1) * i - rec(i - 2, j) * (i * eta)
        if beta:
            expr = expr + s_pow(i, 2 * beta * eta ** (i + j - 2))
        return expr * Fraction(1, k)

    # i in (0, 1), j >= 2:  h I_{i,j} = I_{i+2,j-2} - I_{i,j-1} + (eta/2) I_{i,j-2}
    expr = rec(i + 2, j - 2) - rec(i, j - 1) + rec(i, j - 2) * (eta / 2)
    return expr.divide_h()


def apply_symmetry(integral: IntegralId) -> Tuple[int, IntegralId]:
    """
    Left-half arcs in terms of right-half ones: It_{i,j} = (-1)^(i+1) I_{i,j},
    Jt_{i,j} = (-1)^(i+1) J_{i,j}. Sides 1 and 2 map to themselves.
    """
    if integral.side in (1, 2):
        return 1, integral
    sign = -1 if integral.i % 2 == 0 else 1
    mirrored = 1 if integral.side == 4 else 2
    return sign, IntegralId(mirrored, integral.i, integral.j)


def reduce_integral(integral: IntegralId, eta: Any) -> ReducedExpr:
    """
    Exact reduction of one Abelian integral.

    Even i reduces onto I01, I20 (J01, J20 on side 2) plus a polynomial tail,
    odd i onto I10, I11 plus sqrt(h + 1/(2*eta)) times a polynomial. Sides 3
    and 4 come back through their mirror images.
    """
    eta = as_fraction(eta)
    if eta <= 0:
        raise DomainError("eta must be a positive rational")
    sign, mirrored = apply_symmetry(integral)
    expr = _reduce(Contour.for_side(mirrored.side), mirrored.i, mirrored.j, eta)
    return expr * sign


def reduce_on_contour(contour: Contour, i: int, j: int, eta: Any) -> ReducedExpr:
    """
    Reduction of the integral over a union of arcs.

    gamma uses the U basis; upsilon and upsilon_tilde vanish for even i and
    use the V and Vt bases for odd i.
    """
    eta = as_fraction(eta)
    if i < 0 or j < -1:
        raise DomainError(f"index ({i}, {j}) outside i >= 0, j >= -1")
    if contour in (Contour.SIDE1, Contour.SIDE2, Contour.SIDE3, Contour.SIDE4):
        return reduce_integral(IntegralId(contour.sides[0], i, j), eta)
    if contour is Contour.GAMMA:
        return _reduce(Contour.GAMMA, i, j, eta)
    if contour is Contour.GAMMA_TILDE:
        return _reduce(Contour.GAMMA, i, j, eta) * (1 if i % 2 else -1)
    if contour in _DOUBLED:
        if i % 2 == 0:
            return ReducedExpr.zero(eta)
        source, mapping = _DOUBLED[contour]
        return _reduce(source, i, j, eta).rename(mapping, tail_factor=2)
    raise DomainError(f"no generator basis for contour {contour.value}")


def boundary_sign(side: int, i: int) -> int:
    """Sign of x^(i+1) between the endpoints of a side, in units of x_B^(i+1)"""
    odd_power_sign = -1 if (i + 1) % 2 else 1
    return {1: 1, 2: -1, 3: odd_power_sign, 4: -odd_power_sign}[side]


def convert_dx(i: int, exponent: int, side: int, eta: Any) -> ReducedExpr:
    """
    integral of x^i y^exponent dx over one side, via integration by parts:

        = [x^(i+1) y^exponent / (i+1)] - exponent/(i+1) * I_{i+1, exponent+2}

    The corner term lives on y = eta at B or D, where x = +-eta*s, and becomes
    boundary_sign * eta^(i+1+exponent) s^(i+1) / (i+1). The identity holds for
    any integer exponent since y > 0 on the oval; exponents below -3 never
    arise from degree-n perturbations and are rejected.
    """
    eta = as_fraction(eta)
    if i < 0:
        raise DomainError(f"i must be non-negative, got {i}")
    if exponent < -3:
        raise DomainError(f"exponent must be >= -3, got {exponent}")
    if side not in SIDES:
        raise DomainError(f"side must be one of {SIDES}, got {side}")
    corner = Fraction(boundary_sign(side, i)) * eta ** (i + 1 + exponent) / (i + 1)
    expr = ReducedExpr.s_power(i + 1, corner, eta)
    if exponent != 0:
        area = reduce_integral(IntegralId(side, i + 1, exponent + 2), eta)
        expr = expr + area * Fraction(-exponent, i + 1)
    return expr


def convert_dx_on_contour(contour: Contour, i: int, exponent: int, eta: Any) -> ReducedExpr:
    """convert_dx over a union of arcs, in that contour's generator basis"""
    eta = as_fraction(eta)
    if contour in (Contour.SIDE1, Contour.SIDE2, Contour.SIDE3, Contour.SIDE4):
        return convert_dx(i, exponent, contour.sides[0], eta)
    if exponent < -3:
        raise DomainError(f"exponent must be >= -3, got {exponent}")
    sign = sum(boundary_sign(side, i) for side in contour.sides)
    expr = ReducedExpr.zero(eta)
    if sign:
        corner = Fraction(sign) * eta ** (i + 1 + exponent) / (i + 1)
        expr = ReducedExpr.s_power(i + 1, corner, eta)
    if exponent != 0:
        area = reduce_on_contour(contour, i + 1, exponent + 2, eta)
        expr = expr + area * Fraction(-exponent, i + 1)
    return expr


BASE_IDENTITY_INDICES = (
    (0, 0),
    (1, -1),
    (0, 2),
    (3, -1),
    (2, -1),
    (0, 3),
    (1, 2),
    (2, 1),
    (3, 0),
    (4, -1),
)


def base_identities(eta: Any) -> Dict[IntegralId, ReducedExpr]:
    """Reduced forms of the low-order integrals on sides 1 and 2"""
    eta = as_fraction(eta)
    if eta <= 0:
        raise DomainError("eta must be a positive rational")
    out: Dict[IntegralId, ReducedExpr] = {}
    for side in (1, 2):
        for i, j in BASE_IDENTITY_INDICES:
            key = IntegralId(side, i, j)
            out[key] = reduce_integral(key, eta)
    return out


def clear_cache() -> None:
    _reduce.cache_clear()
