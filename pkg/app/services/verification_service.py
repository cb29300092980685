import logging
import math
import time
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from app.config import Settings, get_settings
from app.errors import DomainError, VerificationFailure
from app.services.melnikov_service import MelnikovService, get_singleton_melnikov_service, run_step
from app.utils.algebra import AlgebraicTail, as_fraction, format_fraction, poly_eval, tail_eval
from app.utils.generators import closed_form, cross_check_bases, default_samples, pf_residual_closed_form
from app.utils.melnikov import assemble, eval_M, four_arc_terms, max_observed_counts, structure_check
from app.utils.perturbation import Case, random_spec
from app.utils.quadrature import (
    PF_SYSTEMS,
    annulus,
    arc_integral_dy,
    generator_quadrature,
    green_residual,
    pf_residual,
)
from app.utils.reduction import GENERAL_BASIS, SIDES, GeneratorId, IntegralId, ReducedExpr, reduce_integral

logger = logging.getLogger(__name__)

COLUMNS = ["suite", "h", "quantity", "value", "reference", "residual", "threshold", "passed"]

REDUCTION_TOL = 1e-8
GREEN_TOL = 1e-8
ASSEMBLY_TOL = 1e-7
# tighter than the default so the oracle is never the weakest link
ORACLE_TOL = 1e-12


def _interior_samples(eta: Any, count: int, lo: float = 0.1, hi: float = 0.9) -> List[float]:
    center, _ = annulus(eta)
    return [center * (1 - f) for f in np.linspace(lo, hi, count)]


def term_scale(expr: ReducedExpr, values: Dict[GeneratorId, float], h: float) -> float:
    """Sum of the magnitudes of the individual terms of a reduced expression at h"""
    total = 0.0
    for gen, coeff in expr.basis_coeffs.items():
        total += abs(poly_eval(coeff, h) * values[gen])
    for m, poly in expr.tail.terms.items():
        total += abs(tail_eval(AlgebraicTail({m: poly}), h, expr.eta))
    return total / abs(h) ** expr.denom_power


class VerificationService:
    """Oracle comparison suites; every suite returns one DataFrame row per comparison"""

    def __init__(self, settings: Optional[Settings] = None, melnikov: Optional[MelnikovService] = None):
        self.settings = settings or get_settings()
        self.melnikov = melnikov or get_singleton_melnikov_service()
        self._suites: Dict[str, Callable[..., pd.DataFrame]] = {
            "reduction": self.reduction_suite,
            "pf": self.pf_suite,
            "closedform": self.closedform_suite,
            "bases": self.bases_suite,
            "green": self.green_suite,
            "assembly": self.assembly_suite,
            "structure": self.structure_suite,
            "bounds": self.bounds_suite,
        }

    @property
    def suites(self) -> List[str]:
        return list(self._suites)

    @staticmethod
    def _row(
        suite: str,
        quantity: str,
        value: float,
        reference: float,
        residual: float,
        threshold: float,
        h: float = math.nan,
        passed: Optional[bool] = None,
    ) -> Dict[str, Any]:
        return {
            "suite": suite,
            "h": h,
            "quantity": quantity,
            "value": value,
            "reference": reference,
            "residual": residual,
            "threshold": threshold,
            "passed": bool(residual <= threshold) if passed is None else passed,
        }

    def reduction_suite(self, eta: Any, max_total: int = 6, samples: int = 5) -> pd.DataFrame:
        """
        Reduced forms of I_{i,j} (i + j <= max_total, j >= -1) on every side,
        evaluated with quadrature generator values, against direct quadrature
        of the same integral.

        The residual is relative to the larger of |reference| and the sum of
        the magnitudes of the terms, so cancellation between terms does not
        count against the reduction.
        """
        eta = as_fraction(eta)
        rows = []
        for h in default_samples(eta, samples):
            values = {gen: generator_quadrature(gen, h, eta, ORACLE_TOL) for gen in GENERAL_BASIS}
            for side in SIDES:
                for j in range(-1, max_total + 1):
                    for i in range(0, max_total - j + 1):
                        expr = reduce_integral(IntegralId(side, i, j), eta)
                        value = float(expr.evaluate(values, h))
                        reference = arc_integral_dy(side, i, j, h, eta, ORACLE_TOL)
                        scale = max(abs(reference), term_scale(expr, values, h), 1e-300)
                        rows.append(
                            self._row(
                                "reduction",
                                f"side{side}:I({i},{j})",
                                value,
                                reference,
                                abs(value - reference) / scale,
                                REDUCTION_TOL,
                                h,
                            )
                        )
        return pd.DataFrame(rows, columns=COLUMNS)

    def pf_suite(self, eta: Any, samples: int = 10) -> pd.DataFrame:
        """Both residuals of each Picard-Fuchs system, from quadrature and from the closed forms"""
        eta = as_fraction(eta)
        k = self.melnikov.get_constants(eta)
        step, tol = self.settings.pf_step, self.settings.pf_tol
        rows = []
        for pair in PF_SYSTEMS:
            label = f"{pair[0].value},{pair[1].value}"
            for h in _interior_samples(eta, samples):
                quad_res = pf_residual(pair, h, eta, step, tol=ORACLE_TOL)
                closed_res = pf_residual_closed_form(pair, h, k, eta, step)
                for source, residuals in (("quadrature", quad_res), ("closed_form", closed_res)):
                    for index, r in enumerate(residuals, start=1):
                        rows.append(self._row("pf", f"{label}:{source}:r{index}", r, 0.0, abs(r), tol, h))
        return pd.DataFrame(rows, columns=COLUMNS)

    def closedform_suite(self, eta: Any, samples: int = 20) -> pd.DataFrame:
        eta = as_fraction(eta)
        k = self.melnikov.get_constants(eta)
        tol = self.settings.calibration_tol
        rows = []
        for h in _interior_samples(eta, samples, 0.05, 0.95):
            for gen in GeneratorId:
                value = float(closed_form(gen, k, eta, h))
                reference = generator_quadrature(gen, h, eta, ORACLE_TOL)
                rows.append(self._row("closedform", gen.value, value, reference, abs(value - reference), tol, h))
        return pd.DataFrame(rows, columns=COLUMNS)

    def bases_suite(self, eta: Any, samples: int = 5) -> pd.DataFrame:
        """
        Combined-contour generators against quadrature. Closed forms and
        constituent sums must agree; published variants are recorded only.
        """
        eta = as_fraction(eta)
        k = self.melnikov.get_constants(eta)
        tol = self.settings.calibration_tol
        rows = []
        for h in default_samples(eta, samples):
            for entry in cross_check_bases(k, eta, h, tol, ORACLE_TOL):
                reference = entry["quadrature"]
                for label in ("closed_form", "constituent_sum", "published_form"):
                    error = entry[f"{label}_error"]
                    rows.append(
                        self._row(
                            "bases",
                            f"{entry['generator']}:{label}",
                            entry[label],
                            reference,
                            error,
                            tol,
                            h,
                            passed=True if label == "published_form" else bool(error <= tol),
                        )
                    )
        return pd.DataFrame(rows, columns=COLUMNS)

    def green_suite(self, eta: Any, samples: int = 3, max_i: int = 4) -> pd.DataFrame:
        eta = as_fraction(eta)
        rows = []
        for h in default_samples(eta, samples):
            for side in SIDES:
                for i in range(max_i + 1):
                    for exponent in range(-3, 3):
                        r = green_residual(side, i, exponent, h, eta, ORACLE_TOL)
                        rows.append(
                            self._row("green", f"side{side}:x^{i} y^{exponent} dx", r, 0.0, abs(r), GREEN_TOL, h)
                        )
        return pd.DataFrame(rows, columns=COLUMNS)

    def assembly_suite(self, eta: Any, seed: int = 0, trials: int = 3, samples: int = 10) -> pd.DataFrame:
        """eval_M of random specs with n <= 3 against the arc-by-arc quadrature of M"""
        eta = as_fraction(eta)
        k = self.melnikov.get_constants(eta)
        rng = np.random.default_rng(seed)
        rows = []
        for case in Case:
            for n in (1, 2, 3):
                for trial in range(trials):
                    spec = random_spec(n, case, eta, rng)
                    expr = assemble(spec)
                    if expr.is_zero():
                        continue
                    for h in _interior_samples(eta, samples):
                        value = eval_M(expr, k, h)
                        terms = four_arc_terms(spec, h, ORACLE_TOL)
                        reference = math.fsum(terms)
                        scale = max(abs(reference), sum(abs(t) for t in terms), 1e-300)
                        rows.append(
                            self._row(
                                "assembly",
                                f"{case.value}:n={n}:trial={trial}",
                                value,
                                reference,
                                abs(value - reference) / scale,
                                ASSEMBLY_TOL,
                                h,
                            )
                        )
        return pd.DataFrame(rows, columns=COLUMNS)

    def structure_suite(self, eta: Any, seed: int = 0, trials: int = 5, max_n: int = 6) -> pd.DataFrame:
        """Degree structure of assembled random specs against the envelope table"""
        eta = as_fraction(eta)
        rng = np.random.default_rng(seed)
        rows = []
        for case in Case:
            for n in range(1, max_n + 1):
                for trial in range(trials):
                    report = structure_check(assemble(random_spec(n, case, eta, rng)), n, case)
                    worst = max((r.degree - (r.envelope_bound or 0) for r in report.rows), default=0)
                    rows.append(
                        self._row(
                            "structure",
                            f"{case.value}:n={n}:trial={trial}"
                            + ("" if report.published_passed else ":published table exceeded"),
                            float(report.denom_power),
                            float(report.lifted_power),
                            float(max(worst, 0)),
                            0.0,
                            passed=report.passed,
                        )
                    )
        return pd.DataFrame(rows, columns=COLUMNS)

    def bounds_suite(self, eta: Any, seed: int = 0, trials: int = 100) -> pd.DataFrame:
        """Largest observed zero counts of random specs against the theoretical bounds"""
        k = self.melnikov.get_constants(eta)
        counts = max_observed_counts(k, trials=trials, seed=seed, samples=self.settings.zero_samples)
        rows = [
            self._row(
                "bounds",
                f"{r.case}:n={r.n}",
                float(r.max_count),
                float(r.bound),
                float(max(r.max_count - r.bound, 0)),
                0.0,
                passed=r.violations == 0,
            )
            for r in counts.itertuples()
        ]
        return pd.DataFrame(rows, columns=COLUMNS)

    def run_suite(self, suite: str, eta: Any, seed: int = 0, trials: Optional[int] = None) -> pd.DataFrame:
        if suite not in self._suites:
            raise DomainError(f"unknown suite {suite!r}; use one of {', '.join(self._suites)}")
        eta = as_fraction(eta)
        if eta <= 0:
            raise DomainError("eta must be a positive rational")
        kwargs: Dict[str, Any] = {}
        if suite in ("assembly", "structure", "bounds"):
            kwargs["seed"] = seed
            if trials is not None:
                kwargs["trials"] = trials
        start_time = time.time()
        logger.info(f"Running {suite} suite for eta={format_fraction(eta)}")
        frame = self._suites[suite](eta, **kwargs)
        failures = int((~frame["passed"]).sum()) if len(frame) else 0
        logger.info(
            f"{suite} suite: {len(frame)} rows, {failures} failures in {time.time() - start_time:.1f} s"
        )
        return frame

    @staticmethod
    def check(frame: pd.DataFrame) -> None:
        """Raise VerificationFailure carrying the first failing row"""
        if not len(frame):
            return
        failing = frame[~frame["passed"]]
        if len(failing):
            row = {key: _plain(value) for key, value in failing.iloc[0].to_dict().items()}
            raise VerificationFailure(
                f"{len(failing)} of {len(frame)} {row['suite']} rows exceed their threshold; "
                f"first: {row['quantity']} residual {row['residual']:.3e} > {row['threshold']:g}",
                row=row,
            )

    def verify(self, suite: str, eta: Any, seed: int = 0, trials: Optional[int] = None) -> Dict[str, Any]:
        """Run a suite and wrap its rows in a result dict; failures keep the rows"""

        def step() -> Dict[str, Any]:
            frame = self.run_suite(suite, eta, seed, trials)
            payload: Dict[str, Any] = {
                "suite": suite,
                "eta": format_fraction(as_fraction(eta)),
                "rows": [{key: _plain(v) for key, v in r.items()} for r in frame.to_dict(orient="records")],
                "failures": int((~frame["passed"]).sum()) if len(frame) else 0,
            }
            try:
                self.check(frame)
            except VerificationFailure as e:
                logger.warning(str(e))
                payload.update(success=False, message=str(e), error="VerificationFailure", row=e.row)
            return payload

        return run_step(f"verify {suite}", step)


def _plain(value: Any) -> Any:
    """numpy scalars to Python ones, NaN to None, for JSON output"""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


_verification_service: Optional[VerificationService] = None


def get_singleton_verification_service() -> VerificationService:
    global _verification_service
    if _verification_service is None:
        _verification_service = VerificationService()
    return _verification_service
