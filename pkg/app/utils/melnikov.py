"""
First-order Melnikov function M(h) of the piecewise perturbed quadratic
center: assembly onto generator bases, evaluation, zero counting and the
degree/zero-count bounds it is checked against.
"""

import logging
import math
import time
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.optimize import brentq

from app.errors import DegenerateMelnikovError, DomainError
from app.utils.algebra import RealLike, format_fraction
from app.utils.generators import GeneratorConstants, closed_form
from app.utils.perturbation import PIECES, Case, PerturbationSpec, random_spec
from app.utils.quadrature import DEFAULT_TOL, annulus, arc_integral_dx, arc_integral_dy
from app.utils.reduction import (
    GAMMA_BASIS,
    GENERAL_BASIS,
    UPSILON_BASIS,
    Contour,
    GeneratorId,
    ReducedExpr,
    convert_dx_on_contour,
    reduce_on_contour,
)

logger = logging.getLogger(__name__)

DEGENERATE_LEVEL = 1e-13

# contour and the piece whose coefficients are integrated over it
_CASE_CONTOURS = {
    Case.GENERAL: ((Contour.SIDE1, 1), (Contour.SIDE2, 2), (Contour.SIDE3, 3), (Contour.SIDE4, 4)),
    Case.THM2: ((Contour.GAMMA, 1), (Contour.GAMMA_TILDE, 3)),
    Case.THM3: ((Contour.UPSILON, 1), (Contour.UPSILON_TILDE, 2)),
    Case.SMOOTH: ((Contour.GAMMA, 1), (Contour.GAMMA_TILDE, 3)),
}

CASE_BASIS = {
    Case.GENERAL: GENERAL_BASIS,
    Case.THM2: GAMMA_BASIS,
    Case.THM3: UPSILON_BASIS,
    Case.SMOOTH: GAMMA_BASIS,
}


def assemble(spec: PerturbationSpec, case: Optional[Union[Case, str]] = None) -> ReducedExpr:
    """
    Reduce M(h) = sum_k integral over L^k of y^-3 (g^k dx - f^k dy).

    Each a^k_{i,j} x^i y^j contributes -a * integral of x^i y^(j-3) dy and
    each b^k_{i,j} contributes b * integral of x^i y^(j-3) dx, the latter
    through integration by parts. The case picks the contours the pieces are
    grouped on and hence the generator basis; `case` overrides the spec's own
    label (a smooth spec may go through the general path).
    """
    path = Case(case) if case is not None else spec.case
    if path is not spec.case and path is not Case.GENERAL:
        # re-validates the ties the chosen grouping relies on
        spec = spec.with_case(path)
    eta = spec.eta
    expr = ReducedExpr.zero(eta)
    for contour, k in _CASE_CONTOURS[path]:
        for i, j, a in spec.terms("f", k):
            expr = expr - reduce_on_contour(contour, i, j, eta) * a
        for i, j, b in spec.terms("g", k):
            expr = expr + convert_dx_on_contour(contour, i, j - 3, eta) * b
    logger.debug(f"Assembled n={spec.n} case={path.value}: {expr!r}")
    return expr


def _check_h(expr: ReducedExpr, h: RealLike) -> np.ndarray:
    h_arr = np.asarray(h, dtype=float)
    center, _ = annulus(expr.eta)
    if np.any(h_arr <= center) or np.any(h_arr >= 0):
        raise DomainError(f"h must lie in the open annulus ({center}, 0)")
    return h_arr


def _generator_values(expr: ReducedExpr, k: GeneratorConstants, h: np.ndarray) -> Dict[Any, Any]:
    if k.eta_value != expr.eta:
        raise DomainError(f"constants calibrated for eta={k.eta}, expression has eta={format_fraction(expr.eta)}")
    return {gen: closed_form(gen, k, expr.eta, h) for gen in expr.generators}


def eval_M(expr: ReducedExpr, k: GeneratorConstants, h: RealLike) -> RealLike:
    """M(h) from the closed forms; h may be a float or an array"""
    h_arr = _check_h(expr, h)
    value = expr.evaluate(_generator_values(expr, k, h_arr), h_arr if h_arr.ndim else float(h_arr))
    if np.ndim(value) == 0:
        return float(value)
    return value


def eval_numerator(expr: ReducedExpr, k: GeneratorConstants, h: RealLike) -> RealLike:
    """h^p M(h) with p the expression's denominator power; same zeros as M"""
    h_arr = _check_h(expr, h)
    numerator = ReducedExpr(expr.basis_coeffs, expr.tail, 0, expr.eta)
    value = numerator.evaluate(_generator_values(expr, k, h_arr), h_arr if h_arr.ndim else float(h_arr))
    if np.ndim(value) == 0:
        return float(value)
    return value


def four_arc_terms(spec: PerturbationSpec, h: float, tol: float = DEFAULT_TOL) -> List[float]:
    """Contribution of every monomial of every piece to M(h), by quadrature"""
    terms: List[float] = []
    for k in PIECES:
        for i, j, a in spec.terms("f", k):
            terms.append(-float(a) * arc_integral_dy(k, i, j, h, spec.eta, tol))
        for i, j, b in spec.terms("g", k):
            terms.append(float(b) * arc_integral_dx(k, i, j - 3, h, spec.eta, tol))
    return terms


def four_arc_quadrature(spec: PerturbationSpec, h: float, tol: float = DEFAULT_TOL) -> float:
    """M(h) summed arc by arc from quadrature alone"""
    return math.fsum(four_arc_terms(spec, h, tol))


def theoretical_bound(n: int, case: Union[Case, str]) -> int:
    """Upper bound on the number of zeros of M(h), counting multiplicity"""
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    case = Case(case)
    if case is Case.GENERAL:
        return 41 * n - 23
    if case is Case.THM2:
        return 9 * n - 4
    if case is Case.THM3:
        return 9 * n - 6
    return n


class ScanParams(BaseModel):
    samples: int
    refine_tol: float
    endpoint_margin: float
    h_min: float
    h_max: float
    eta: str


class ZeroBracket(BaseModel):
    bracket_lo: float
    bracket_hi: float
    refined_h: float


class ZeroReport(BaseModel):
    zeros: List[ZeroBracket]
    count: int
    bound: Optional[int] = None
    within_bound: Optional[bool] = None
    scan_params: ScanParams


def scan_grid(eta: Any, samples: int = 10_000, endpoint_margin: float = 1e-9) -> np.ndarray:
    """
    h = a + W sin^2(pi t / 2) on a uniform t grid.

    Spacing shrinks like the square root of the distance to either end of the
    annulus, which is where M behaves like sqrt(h + 1/(2 eta)) and h ln|h|.
    """
    if samples < 2:
        raise DomainError("need at least two scan samples")
    if not 0 < endpoint_margin < 0.5:
        raise DomainError("endpoint_margin must lie in (0, 0.5)")
    center, top = annulus(eta)
    width = top - center
    a = center + endpoint_margin * width
    span = width * (1 - 2 * endpoint_margin)
    t = np.linspace(0.0, 1.0, samples)
    return a + span * np.sin(np.pi * t / 2) ** 2


def count_zeros(
    expr: ReducedExpr,
    k: GeneratorConstants,
    samples: int = 10_000,
    refine_tol: float = 1e-12,
    endpoint_margin: float = 1e-9,
    n: Optional[int] = None,
    case: Optional[Union[Case, str]] = None,
) -> ZeroReport:
    """
    Simple zeros of M(h) on the annulus, found as sign changes of h^p M(h)
    on the scan grid and refined with brentq.

    Raises DegenerateMelnikovError when every sample of M is below 1e-13 in
    magnitude.
    """
    grid = scan_grid(expr.eta, samples, endpoint_margin)
    params = ScanParams(
        samples=samples,
        refine_tol=refine_tol,
        endpoint_margin=endpoint_margin,
        h_min=float(grid[0]),
        h_max=float(grid[-1]),
        eta=format_fraction(expr.eta),
    )
    if expr.is_zero():
        raise DegenerateMelnikovError("M(h) is possibly identically zero (zero expression)")

    numerator = np.asarray(eval_numerator(expr, k, grid), dtype=float)
    values = numerator / np.power(grid, expr.denom_power)
    if not np.all(np.isfinite(numerator)):
        raise DomainError("non-finite Melnikov samples on the scan grid")
    if np.max(np.abs(values)) < DEGENERATE_LEVEL:
        raise DegenerateMelnikovError(
            f"M(h) is possibly identically zero: all {samples} samples below {DEGENERATE_LEVEL:g}"
        )

    def func(x: float) -> float:
        return float(eval_numerator(expr, k, x))

    zeros: List[ZeroBracket] = []
    nonzero = np.flatnonzero(numerator != 0)
    for left, right in zip(nonzero[:-1], nonzero[1:]):
        if np.sign(numerator[left]) == np.sign(numerator[right]):
            continue
        lo, hi = float(grid[left]), float(grid[right])
        root = brentq(func, lo, hi, xtol=refine_tol, rtol=4 * np.finfo(float).eps)
        zeros.append(ZeroBracket(bracket_lo=lo, bracket_hi=hi, refined_h=float(root)))

    bound = within = None
    if n is not None and case is not None:
        bound = theoretical_bound(n, case)
        within = len(zeros) <= bound
    logger.debug(f"Zero scan over {samples} samples: {len(zeros)} sign changes")
    return ZeroReport(zeros=zeros, count=len(zeros), bound=bound, within_bound=within, scan_params=params)


def zero_samples_frame(
    expr: ReducedExpr,
    k: GeneratorConstants,
    samples: int = 10_000,
    endpoint_margin: float = 1e-9,
) -> pd.DataFrame:
    """(h, M(h)) on the scan grid, for plotting"""
    grid = scan_grid(expr.eta, samples, endpoint_margin)
    if expr.is_zero():
        values = np.zeros_like(grid)
    else:
        values = np.asarray(eval_M(expr, k, grid), dtype=float)
    return pd.DataFrame({"h": grid, "M": values})


def _lift_power(n: int) -> int:
    return max(n - 2, 1)


def published_degree_table(n: int, case: Union[Case, str]) -> Dict[str, int]:
    """Degree bounds as stated for the coefficient polynomials over h^max(n-2, 1)"""
    case = Case(case)
    if n > 3:
        parity = 1 if n % 2 == 0 else -1
        table = {
            "alpha": n - (3 + parity) // 2,
            "beta": n - 2,
            "gamma": n - 2,
            "delta": n - (3 - parity) // 2,
            "phi": (6 * n - 7 - parity) // 4,
            "psi": (6 * n - 9 + parity) // 4,
        }
    else:
        table = {"alpha": 2, "beta": 1, "gamma": 1, "delta": 2, "phi": 3, "psi": 2}
    return _restrict(table, case)


def envelope_degree_table(n: int, case: Union[Case, str]) -> Dict[str, int]:
    """
    Degree bounds every assembled expression satisfies over h^max(n-2, 1).

    Integrals of total degree below n (the j = -1 ones from the dx terms
    among them) are lifted to the common denominator, so alpha and delta
    may reach n - 1 for n > 3.
    """
    case = Case(case)
    p = _lift_power(n)
    top = max(n + 1, 3)
    table = {
        "alpha": p + 1,
        "beta": p,
        "gamma": p,
        "delta": p + 1,
        "phi": top // 2 + p,
        "psi": (top - 1) // 2 + p,
    }
    return _restrict(table, case)


def _restrict(table: Dict[str, int], case: Case) -> Dict[str, int]:
    if case is Case.THM3:
        return {role: table[role] for role in ("gamma", "delta", "phi", "psi")}
    return table


class StructureRow(BaseModel):
    name: str
    role: str
    degree: int
    published_bound: Optional[int]
    envelope_bound: Optional[int]
    within_published: bool
    within_envelope: bool


class StructureReport(BaseModel):
    n: int
    case: Case
    denom_power: int
    lifted_power: int
    rows: List[StructureRow]
    # `passed` is judged against this table; `published_passed` against the literal one
    passed_against: str = "envelope"
    passed: bool
    published_passed: bool
    message: str = ""


def structure_check(expr: ReducedExpr, n: int, case: Union[Case, str]) -> StructureReport:
    """
    Compare each coefficient polynomial of an assembled expression, written
    over h^max(n-2, 1), with the degree tables.

    Generators outside the case's basis fail both tables. `passed` uses the
    envelope table, `published_passed` the literal one.
    """
    case = Case(case)
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    lifted = _lift_power(n)
    if expr.is_zero():
        return StructureReport(
            n=n, case=case, denom_power=0, lifted_power=lifted, rows=[],
            passed=True, published_passed=True, message="zero expression",
        )
    message = ""
    denominator_ok = expr.denom_power <= lifted
    if not denominator_ok:
        message = f"denominator h^{expr.denom_power} exceeds h^{lifted}"
    published = published_degree_table(n, case)
    envelope = envelope_degree_table(n, case)
    allowed = set(CASE_BASIS[case])

    rows: List[StructureRow] = []
    for name, degree in expr.degrees(max(lifted, expr.denom_power)).items():
        if name in ("phi", "psi"):
            role = name
            in_basis = True
        else:
            gen = GeneratorId(name)
            role = gen.role
            in_basis = gen in allowed
        pub = published.get(role) if in_basis else None
        env = envelope.get(role) if in_basis else None
        rows.append(
            StructureRow(
                name=name,
                role=role,
                degree=degree,
                published_bound=pub,
                envelope_bound=env,
                within_published=pub is not None and degree <= pub,
                within_envelope=env is not None and degree <= env,
            )
        )
    passed = denominator_ok and all(r.within_envelope for r in rows)
    published_passed = denominator_ok and all(r.within_published for r in rows)
    if not published_passed and passed:
        message = "passed against the envelope table only; the published table is exceeded"
    return StructureReport(
        n=n,
        case=case,
        denom_power=expr.denom_power,
        lifted_power=lifted,
        rows=rows,
        passed=passed,
        published_passed=published_passed,
        message=message,
    )


def max_observed_counts(
    k: GeneratorConstants,
    n_values: Sequence[int] = (1, 2, 3),
    cases: Iterable[Union[Case, str]] = tuple(Case),
    trials: int = 100,
    seed: int = 0,
    samples: int = 10_000,
) -> pd.DataFrame:
    """
    Largest zero count found over random specs for each (n, case).

    Reported as data only: nothing here says whether a bound is attained.
    """
    rng = np.random.default_rng(seed)
    eta = k.eta_value
    rows = []
    start_time = time.time()
    for case in cases:
        case = Case(case)
        for n in n_values:
            bound = theoretical_bound(n, case)
            counts = []
            degenerate = 0
            for _ in range(trials):
                spec = random_spec(n, case, eta, rng)
                expr = assemble(spec)
                try:
                    report = count_zeros(expr, k, samples=samples, n=n, case=case)
                except DegenerateMelnikovError:
                    degenerate += 1
                    continue
                counts.append(report.count)
            rows.append(
                {
                    "n": n,
                    "case": case.value,
                    "trials": trials,
                    "degenerate": degenerate,
                    "max_count": max(counts) if counts else 0,
                    "mean_count": float(np.mean(counts)) if counts else 0.0,
                    "bound": bound,
                    "violations": sum(c > bound for c in counts),
                }
            )
    logger.info(f"Zero-count fuzz over {len(rows)} (n, case) cells in {time.time() - start_time:.1f} s")
    return pd.DataFrame(rows)
