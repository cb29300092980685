import logging
import threading
import time
import traceback
from datetime import datetime
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from app.config import Settings, get_settings
from app.errors import DomainError, MelnikovError
from app.utils.algebra import as_fraction, format_fraction
from app.utils.generators import GeneratorConstants, calibrate, quadrature_oracle
from app.utils.melnikov import (
    assemble,
    count_zeros,
    eval_M,
    structure_check,
    theoretical_bound,
    zero_samples_frame,
)
from app.utils.perturbation import Case, PerturbationSpec
from app.utils.reduction import Contour, reduce_on_contour
from app.utils.simulate import (
    PhaseState,
    SimConfig,
    find_limit_cycles,
    integrate_orbit,
    section_ordinate,
    trajectory_frame,
)

logger = logging.getLogger(__name__)

# keys that change between otherwise identical runs
VOLATILE_KEYS = ("timestamp", "processing_time_ms")


def run_step(label: str, func: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
    """
    Run one pipeline step and wrap its payload in a result dict

    Args:
        label: Name used in log lines and messages
        func: Callable returning the payload

    Returns:
        Dict with success, message, timestamp and processing_time_ms
    """
    timestamp = datetime.now().isoformat()
    start_time = time.time()
    try:
        payload = func()
        result = {"success": True, "message": f"{label} completed", **payload}
    except MelnikovError as e:
        logger.warning(f"{label} failed: {e}")
        result = {"success": False, "message": str(e), "error": type(e).__name__}
        row = getattr(e, "row", None)
        if row:
            result["row"] = row
    except Exception as e:
        logger.error(f"Error in {label}: {str(e)}")
        logger.error(traceback.format_exc())
        result = {"success": False, "message": f"Error in {label}: {str(e)}", "error": "internal"}
    result["timestamp"] = timestamp
    result["processing_time_ms"] = round((time.time() - start_time) * 1000, 2)
    return result


class MelnikovService:
    """Service class for the reduction, assembly, zero-counting and simulation pipeline"""

    def __init__(self, settings: Optional[Settings] = None):
        """
        Initialize the Melnikov service

        Args:
            settings: Tolerances and scan parameters; environment defaults if omitted
        """
        self.settings = settings or get_settings()
        self._constants: Dict[Fraction, GeneratorConstants] = {}
        # API handlers run in a threadpool
        self._constants_lock = threading.Lock()

    def get_constants(self, eta: Any) -> GeneratorConstants:
        """Calibrated constants for eta, computed once per process"""
        eta = as_fraction(eta)
        with self._constants_lock:
            if eta not in self._constants:
                logger.info(f"Calibrating generator constants for eta={format_fraction(eta)}")
                oracle = quadrature_oracle(min(self.settings.quad_tol, 1e-12))
                self._constants[eta] = calibrate(eta, oracle, tol=self.settings.calibration_tol)
            return self._constants[eta]

    def calibrate(self, eta: Any) -> Dict[str, Any]:
        return run_step("calibrate", lambda: {"constants": self.get_constants(eta).model_dump()})

    def reduce(self, contour: str, i: int, j: int, eta: Any) -> Dict[str, Any]:
        """Reduced form of x^i y^(j-3) dy over a side or a union of sides"""

        def step() -> Dict[str, Any]:
            expr = reduce_on_contour(_contour(contour), i, j, eta)
            return {"contour": _contour(contour).value, "i": i, "j": j, "expr": expr.to_json(), "repr": repr(expr)}

        return run_step("reduce", step)

    def assemble(self, spec: PerturbationSpec, case: Optional[str] = None) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            path = _case(case) if case else spec.case
            expr = assemble(spec, path)
            report = structure_check(expr, spec.n, path)
            return {"expr": expr.to_json(), "repr": repr(expr), "structure": report.model_dump(mode="json")}

        return run_step("assemble", step)

    def evaluate(self, spec: PerturbationSpec, h: Any) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            h_value = float(as_fraction(h))
            expr = assemble(spec)
            if expr.is_zero():
                # no generators to evaluate, constants are not needed
                value = eval_M(expr, _zero_constants(spec.eta), h_value)
            else:
                value = eval_M(expr, self.get_constants(spec.eta), h_value)
            return {"h": h_value, "value": value}

        return run_step("eval", step)

    def zeros(self, spec: PerturbationSpec, samples: Optional[int] = None) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            expr = assemble(spec)
            report = count_zeros(
                expr,
                self.get_constants(spec.eta),
                samples=samples or self.settings.zero_samples,
                refine_tol=self.settings.refine_tol,
                endpoint_margin=self.settings.endpoint_margin,
                n=spec.n,
                case=spec.case,
            )
            return {"report": report.model_dump(mode="json")}

        return run_step("zeros", step)

    def zero_samples(self, spec: PerturbationSpec, samples: Optional[int] = None) -> pd.DataFrame:
        """(h, M(h)) samples of a spec on the zero-scan grid"""
        expr = assemble(spec)
        constants = self.get_constants(spec.eta) if not expr.is_zero() else _zero_constants(spec.eta)
        return zero_samples_frame(
            expr,
            constants,
            samples=samples or self.settings.zero_samples,
            endpoint_margin=self.settings.endpoint_margin,
        )

    def bound(self, n: int, case: str) -> Dict[str, Any]:
        return run_step("bound", lambda: {"n": n, "case": _case(case).value, "bound": theoretical_bound(n, _case(case))})

    def simulate(
        self,
        spec: PerturbationSpec,
        eps: Optional[float] = None,
        grid: Optional[Sequence[float]] = None,
    ) -> Dict[str, Any]:
        """
        Search limit cycles of the perturbed system and match them to zeros of M

        Args:
            spec: Perturbation
            eps: Perturbation scale, settings default if omitted
            grid: Section ordinates y0 > eta; defaults to 24 points spread over the annulus

        Returns:
            Dict with the cycle report and the Melnikov zeros used for matching
        """

        def step() -> Dict[str, Any]:
            cfg = self._sim_config(spec, eps)
            zeros: List[float] = []
            expr = assemble(spec)
            if not expr.is_zero():
                try:
                    report = count_zeros(
                        expr,
                        self.get_constants(spec.eta),
                        samples=self.settings.zero_samples,
                        refine_tol=self.settings.refine_tol,
                        endpoint_margin=self.settings.endpoint_margin,
                    )
                    zeros = [z.refined_h for z in report.zeros]
                except MelnikovError as e:
                    logger.warning(f"Melnikov zeros unavailable for matching: {e}")
            ordinates = list(grid) if grid else default_section_grid(float(spec.eta))
            cycles = find_limit_cycles(cfg, spec, ordinates, melnikov_zeros=zeros)
            return {"melnikov_zeros": zeros, "report": cycles.model_dump(mode="json")}

        return run_step("simulate", step)

    def trajectory(self, spec: PerturbationSpec, y0: float, eps: Optional[float] = None) -> pd.DataFrame:
        """One revolution from (0, y0) as (t, x, y, region) samples"""
        cfg = self._sim_config(spec, eps)
        result = integrate_orbit(PhaseState(x=0.0, y=float(y0), region=1), cfg, spec)
        return trajectory_frame(result)

    def _sim_config(self, spec: PerturbationSpec, eps: Optional[float]) -> SimConfig:
        return SimConfig(
            eta=float(spec.eta),
            eps=self.settings.sim_eps if eps is None else eps,
            rtol=self.settings.sim_rtol,
            atol=self.settings.sim_atol,
            max_events=self.settings.sim_max_events,
        )


def default_section_grid(eta: float, count: int = 24) -> List[float]:
    """Section ordinates whose energies cover 5%..85% of the annulus"""
    center = -0.5 / eta
    levels = [center * (1 - f) for f in [0.05 + 0.8 * i / (count - 1) for i in range(count)]]
    return sorted(section_ordinate(h, eta) for h in levels)


def _contour(name: str) -> Contour:
    """Contour from its name or a side number 1..4"""
    name = str(name).strip().lower()
    if name in ("1", "2", "3", "4"):
        return Contour.for_side(int(name))
    try:
        return Contour(name)
    except ValueError as e:
        choices = ", ".join(c.value for c in Contour)
        raise DomainError(f"unknown contour {name!r}; use 1..4 or one of {choices}") from e


def _case(name: Any) -> Case:
    try:
        return Case(name)
    except ValueError as e:
        choices = ", ".join(c.value for c in Case)
        raise DomainError(f"unknown case {name!r}; use one of {choices}") from e


def _zero_constants(eta: Any) -> GeneratorConstants:
    return GeneratorConstants(
        c1=0.0, c2=0.0, d1=0.0, d2=0.0, e1=0.0, e2=0.0, c1_hat=0.0, d1_hat=0.0, eta=as_fraction(eta)
    )


def strip_volatile(result: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in result.items() if key not in VOLATILE_KEYS}


_melnikov_service: Optional[MelnikovService] = None


def get_singleton_melnikov_service() -> MelnikovService:
    global _melnikov_service
    if _melnikov_service is None:
        _melnikov_service = MelnikovService()
    return _melnikov_service
