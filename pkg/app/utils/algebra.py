"""
Exact rational algebra for polynomials in the energy level h and for
half-integer powers of (h + 1/(2*eta)).
"""

from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from app.errors import DomainError

Scalar = Union[int, Fraction]
RealLike = Union[float, int, Fraction, np.ndarray]


def as_fraction(value: Any) -> Fraction:
    """
    Convert ints, Fractions and "p/q" strings to an exact Fraction.

    Floats go through their decimal repr, so 0.25 becomes 1/4.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rational coefficients")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise DomainError(f"invalid rational literal {value!r}") from e
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


def format_fraction(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def half_inverse(eta: Fraction) -> Fraction:
    """1/(2*eta), the offset inside the square-root base"""
    return 1 / (2 * eta)


class PolyH:
    """Immutable polynomial in h with Fraction coefficients, lowest power first"""

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: Iterable[Any] = ()):
        values = [as_fraction(c) for c in coeffs]
        while values and values[-1] == 0:
            values.pop()
        self._coeffs: Tuple[Fraction, ...] = tuple(values)

    @classmethod
    def constant(cls, value: Any) -> "PolyH":
        return cls([value])

    @classmethod
    def h(cls) -> "PolyH":
        return cls([0, 1])

    @classmethod
    def zero(cls) -> "PolyH":
        return cls()

    @property
    def coeffs(self) -> Tuple[Fraction, ...]:
        return self._coeffs

    @property
    def degree(self) -> int:
        """Degree, -1 for the zero polynomial"""
        return len(self._coeffs) - 1

    def is_zero(self) -> bool:
        return not self._coeffs

    @property
    def constant_term(self) -> Fraction:
        return self._coeffs[0] if self._coeffs else Fraction(0)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, PolyH):
            return self._coeffs == other._coeffs
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._coeffs)

    def __bool__(self) -> bool:
        return bool(self._coeffs)

    def __repr__(self) -> str:
        if not self._coeffs:
            return "PolyH(0)"
        terms = []
        for power, c in enumerate(self._coeffs):
            if c == 0:
                continue
            if power == 0:
                terms.append(str(c))
            elif power == 1:
                terms.append(f"{c}*h")
            else:
                terms.append(f"{c}*h^{power}")
        return "PolyH(" + " + ".join(terms) + ")"

    @staticmethod
    def _coerce(value: Any) -> "PolyH":
        if isinstance(value, PolyH):
            return value
        return PolyH.constant(value)

    def __add__(self, other: Any) -> "PolyH":
        return poly_arith(self, self._coerce(other), "add")

    __radd__ = __add__

    def __sub__(self, other: Any) -> "PolyH":
        return poly_arith(self, self._coerce(other), "sub")

    def __rsub__(self, other: Any) -> "PolyH":
        return poly_arith(self._coerce(other), self, "sub")

    def __neg__(self) -> "PolyH":
        return PolyH(-c for c in self._coeffs)

    def __mul__(self, other: Any) -> "PolyH":
        if isinstance(other, PolyH):
            return poly_arith(self, other, "mul")
        factor = as_fraction(other)
        return PolyH(c * factor for c in self._coeffs)

    __rmul__ = __mul__

    def shift_h(self, power: int) -> "PolyH":
        """Multiply by h**power (power >= 0)"""
        if power < 0:
            raise ValueError("shift_h needs a non-negative power")
        if not self._coeffs or power == 0:
            return self
        return PolyH([0] * power + list(self._coeffs))

    def divisible_by_h(self) -> bool:
        return self.constant_term == 0

    def divide_h(self) -> "PolyH":
        """Exact division by h; the constant term must vanish"""
        if not self.divisible_by_h():
            raise ValueError(f"{self!r} is not divisible by h")
        return PolyH(self._coeffs[1:])

    def __call__(self, h: RealLike) -> RealLike:
        return poly_eval(self, h)

    def to_json(self) -> List[str]:
        return [format_fraction(c) for c in self._coeffs]

    @classmethod
    def from_json(cls, data: Iterable[Any]) -> "PolyH":
        return cls(as_fraction(c) for c in data)


def poly_arith(a: PolyH, b: PolyH, op: str) -> PolyH:
    """Exact add, sub or mul of two polynomials"""
    if op in ("add", "sub"):
        sign = 1 if op == "add" else -1
        size = max(len(a.coeffs), len(b.coeffs))
        out = [Fraction(0)] * size
        for k, c in enumerate(a.coeffs):
            out[k] += c
        for k, c in enumerate(b.coeffs):
            out[k] += sign * c
        return PolyH(out)
    if op == "mul":
        if a.is_zero() or b.is_zero():
            return PolyH()
        out = [Fraction(0)] * (len(a.coeffs) + len(b.coeffs) - 1)
        for p, ca in enumerate(a.coeffs):
            if ca == 0:
                continue
            for q, cb in enumerate(b.coeffs):
                out[p + q] += ca * cb
        return PolyH(out)
    raise ValueError(f"unknown polynomial operation {op!r}")


def poly_eval(p: PolyH, h: RealLike) -> RealLike:
    """
    Horner evaluation.

    Exact when h is an int or Fraction, float (or float array) otherwise.
    """
    if isinstance(h, (int, Fraction)) and not isinstance(h, bool):
        acc = Fraction(0)
        for c in reversed(p.coeffs):
            acc = acc * h + c
        return acc
    if isinstance(h, np.ndarray):
        acc = np.zeros_like(h, dtype=float)
    else:
        h = float(h)
        acc = 0.0
    for c in reversed(p.coeffs):
        acc = acc * h + float(c)
    return acc


def sqrt_base(h: RealLike, eta: Fraction) -> RealLike:
    """
    h + 1/(2*eta) as float, rejecting values below the annulus center.

    Rounding noise of a few ulp below zero is clamped to 0.
    """
    offset = float(half_inverse(eta))
    base = np.asarray(h, dtype=float) + offset
    slack = 1e-14 * max(1.0, offset)
    if np.any(base < -slack):
        raise DomainError(f"h below -1/(2*eta) = {-offset}")
    base = np.maximum(base, 0.0)
    if base.ndim == 0:
        return float(base)
    return base


class AlgebraicTail:
    """
    Finite sum of poly_m(h) * (h + 1/(2*eta))**(m/2) over half-power indices m.

    Zero polynomials are never stored.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Optional[Mapping[int, Any]] = None):
        cleaned: Dict[int, PolyH] = {}
        for m, coeff in (terms or {}).items():
            m = int(m)
            if m < 0:
                raise ValueError("half-power index must be non-negative")
            poly = coeff if isinstance(coeff, PolyH) else PolyH(coeff)
            if not poly.is_zero():
                cleaned[m] = poly
        self._terms = dict(sorted(cleaned.items()))

    @classmethod
    def single(cls, m: int, coeff: Any) -> "AlgebraicTail":
        poly = coeff if isinstance(coeff, PolyH) else PolyH.constant(coeff)
        return cls({m: poly})

    @property
    def terms(self) -> Dict[int, PolyH]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AlgebraicTail):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        return hash(tuple(self._terms.items()))

    def __repr__(self) -> str:
        parts = [f"{p!r}*s^{m}" for m, p in self._terms.items()]
        return "AlgebraicTail(" + (" + ".join(parts) or "0") + ")"

    def __add__(self, other: "AlgebraicTail") -> "AlgebraicTail":
        merged = dict(self._terms)
        for m, p in other._terms.items():
            merged[m] = merged.get(m, PolyH()) + p
        return AlgebraicTail(merged)

    def __neg__(self) -> "AlgebraicTail":
        return AlgebraicTail({m: -p for m, p in self._terms.items()})

    def __sub__(self, other: "AlgebraicTail") -> "AlgebraicTail":
        return self + (-other)

    def __mul__(self, factor: Any) -> "AlgebraicTail":
        """Multiply by a scalar or by a PolyH"""
        return AlgebraicTail({m: p * factor for m, p in self._terms.items()})

    __rmul__ = __mul__

    def shift_h(self, power: int) -> "AlgebraicTail":
        return AlgebraicTail({m: p.shift_h(power) for m, p in self._terms.items()})

    def divisible_by_h(self) -> bool:
        return all(p.divisible_by_h() for p in self._terms.values())

    def divide_h(self) -> "AlgebraicTail":
        return AlgebraicTail({m: p.divide_h() for m, p in self._terms.items()})

    def fold(self, eta: Fraction) -> "AlgebraicTail":
        """
        Canonical two-term shape phi(h) + s*psi(h), s = sqrt(h + 1/(2*eta)).

        Uses s**2 = h + 1/(2*eta) to bring every index down to 0 or 1.
        """
        base = PolyH([half_inverse(eta), 1])
        folded: Dict[int, PolyH] = {}
        for m, p in self._terms.items():
            reduced = p
            for _ in range(m // 2):
                reduced = reduced * base
            folded[m % 2] = folded.get(m % 2, PolyH()) + reduced
        return AlgebraicTail(folded)

    def to_json(self) -> List[Dict[str, Any]]:
        return [{"m": m, "coeffs": p.to_json()} for m, p in self._terms.items()]

    @classmethod
    def from_json(cls, data: Iterable[Mapping[str, Any]]) -> "AlgebraicTail":
        terms: Dict[int, PolyH] = {}
        for record in data:
            m = int(record["m"])
            terms[m] = terms.get(m, PolyH()) + PolyH.from_json(record["coeffs"])
        return cls(terms)


def tail_eval(t: AlgebraicTail, h: RealLike, eta: Fraction) -> RealLike:
    """Sum of poly_m(h) * (h + 1/(2*eta))**(m/2)"""
    base = sqrt_base(h, eta)
    root = np.sqrt(base)
    total = np.zeros_like(np.asarray(base, dtype=float))
    for m, p in t.terms.items():
        value = poly_eval(p, h if isinstance(h, np.ndarray) else float(h))
        if m == 0:
            total = total + value
            continue
        power = base ** (m // 2) if m >= 2 else 1.0
        if m % 2:
            power = power * root
        total = total + value * power
    if np.ndim(total) == 0:
        return float(total)
    return total
