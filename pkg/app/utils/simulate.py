"""
Direct integration of the perturbed piecewise system

    x' = y - 2x^2 - eta + eps f^k(x, y),   y' = -2xy + eps g^k(x, y)

with the switching lines x = 0 and y = eta located as integration events,
and the return map on the section {x = 0, y > eta}.
"""

import logging
import math
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from app.errors import DomainError, OrbitEscapeError, SimulationError
from app.utils.perturbation import PerturbationSpec
from app.utils.quadrature import first_integral

logger = logging.getLogger(__name__)

# region reached by crossing each line
_ACROSS_X = {1: 4, 4: 1, 2: 3, 3: 2}
_ACROSS_Y = {1: 2, 2: 1, 3: 4, 4: 3}


def region_of(x: float, y: float, eta: float) -> Optional[int]:
    """Region 1..4 of a point, None on a switching line"""
    if x == 0 or y == eta:
        return None
    if x > 0:
        return 1 if y > eta else 2
    return 4 if y > eta else 3


class PhaseState(BaseModel):
    x: float
    y: float
    region: int = Field(ge=1, le=4)


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(gt=0)
    eps: float = 1e-3
    rtol: float = 1e-12
    atol: float = 1e-12
    max_events: int = Field(default=64, ge=1)
    leg_time: float = Field(default=1e3, gt=0)
    tangency_tol: float = 1e-6
    method: str = "DOP853"

    @field_validator("eps")
    @classmethod
    def _small_eps(cls, value: float) -> float:
        if abs(value) >= 1:
            raise ValueError("eps must be small, |eps| < 1")
        return value

    @field_validator("rtol", "atol")
    @classmethod
    def _tight_tolerance(cls, value: float) -> float:
        if not 0 < value <= 1e-10:
            raise ValueError("integrator tolerances must lie in (0, 1e-10]")
        return value


class OrbitEvent(BaseModel):
    t: float
    x: float
    y: float
    line: str  # "x" for x = 0, "y" for y = eta
    from_region: int
    to_region: int
    residual: float


class OrbitResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    start: PhaseState
    end: PhaseState
    t_end: float
    events: List[OrbitEvent]
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    region: np.ndarray

    @property
    def event_lines(self) -> List[str]:
        return [e.line for e in self.events]


class LimitCycle(BaseModel):
    y_star: float
    h_star: float
    multiplier: float
    displacement: float
    matched_zero: Optional[float] = None
    delta_h: Optional[float] = None
    within_tolerance: Optional[bool] = None


class CycleReport(BaseModel):
    eps: float
    eta: float
    grid: List[float]
    cycles: List[LimitCycle]
    degenerate: bool = False
    message: str = ""


class _PieceField:
    """Float copies of the perturbation tables for fast evaluation"""

    def __init__(self, spec: PerturbationSpec):
        self.terms: Dict[Tuple[str, int], List[Tuple[int, int, float]]] = {
            (kind, k): [(i, j, float(c)) for i, j, c in spec.terms(kind, k)]
            for kind in ("f", "g")
            for k in (1, 2, 3, 4)
        }

    def value(self, kind: str, k: int, x: float, y: float) -> float:
        return sum(c * x**i * y**j for i, j, c in self.terms[(kind, k)])


def vector_field(state: PhaseState, cfg: SimConfig, spec: PerturbationSpec) -> Tuple[float, float]:
    """Right-hand side using the perturbation piece of the state's region"""
    return _field(state.x, state.y, state.region, cfg, _PieceField(spec))


def _field(x: float, y: float, region: int, cfg: SimConfig, pieces: _PieceField) -> Tuple[float, float]:
    dx = y - 2 * x * x - cfg.eta
    dy = -2 * x * y
    if cfg.eps:
        dx += cfg.eps * pieces.value("f", region, x, y)
        dy += cfg.eps * pieces.value("g", region, x, y)
    return dx, dy


def _entry_region(x: float, y: float, cfg: SimConfig, pieces: _PieceField, sign: float) -> int:
    """Region the flow enters from a point lying on a switching line"""
    region = region_of(x, y, cfg.eta)
    if region is not None:
        return region
    # test with the unperturbed field; it is transversal away from the center
    dx = sign * (y - 2 * x * x - cfg.eta)
    dy = sign * (-2 * x * y)
    side_x = x if x != 0 else dx
    side_y = y - cfg.eta if y != cfg.eta else dy
    if side_x == 0 or side_y == 0:
        raise SimulationError(f"cannot assign a region at ({x}, {y})")
    if side_x > 0:
        return 1 if side_y > 0 else 2
    return 4 if side_y > 0 else 3


def locate(x: float, y: float, cfg: SimConfig, spec: PerturbationSpec, reverse: bool = False) -> PhaseState:
    """PhaseState with its region, resolving points on a switching line by the flow direction"""
    return PhaseState(x=x, y=y, region=_entry_region(x, y, cfg, _PieceField(spec), -1.0 if reverse else 1.0))


def _check_eta(cfg: SimConfig, spec: PerturbationSpec) -> None:
    if not math.isclose(cfg.eta, float(spec.eta), rel_tol=1e-15):
        raise DomainError(f"SimConfig eta={cfg.eta} differs from spec eta={float(spec.eta)}")


def one_revolution(events: List[OrbitEvent], _state: PhaseState) -> bool:
    """Default stop rule: four switching events"""
    return len(events) >= 4


def integrate_orbit(
    start: PhaseState,
    cfg: SimConfig,
    spec: PerturbationSpec,
    stop: Optional[Callable[[List[OrbitEvent], PhaseState], bool]] = None,
    reverse: bool = False,
) -> OrbitResult:
    """
    Integrate region by region, ending each leg on the first switching line
    the orbit reaches.

    Event functions are armed only in the direction that points from the
    current region toward the line, so a leg that starts on the line it just
    crossed does not stop at once. Crossing points are snapped onto the line.
    `stop(events, state)` is checked after every event.
    """
    _check_eta(cfg, spec)
    stop = stop or one_revolution
    pieces = _PieceField(spec)
    sign = -1.0 if reverse else 1.0
    eta = cfg.eta

    region = start.region
    state = np.array([start.x, start.y], dtype=float)
    t0 = 0.0
    events: List[OrbitEvent] = []
    ts, xs, ys, regions = [np.array([0.0])], [state[:1].copy()], [state[1:].copy()], [np.array([region])]

    while True:
        if len(events) >= cfg.max_events:
            raise SimulationError(f"event budget of {cfg.max_events} exceeded")

        def rhs(t: float, z: np.ndarray, k: int = region) -> List[float]:
            dx, dy = _field(z[0], z[1], k, cfg, pieces)
            return [sign * dx, sign * dy]

        def hit_x(t: float, z: np.ndarray) -> float:
            return z[0]

        def hit_y(t: float, z: np.ndarray) -> float:
            return z[1] - eta

        def escape(t: float, z: np.ndarray) -> float:
            # H >= 0 or y <= 0 means the orbit left the period annulus
            if z[1] <= 0:
                return 1.0
            return first_integral(z[0], z[1], eta)

        hit_x.terminal = True
        hit_x.direction = -1.0 if region in (1, 2) else 1.0
        hit_y.terminal = True
        hit_y.direction = -1.0 if region in (1, 4) else 1.0
        escape.terminal = True
        escape.direction = 1.0

        sol = solve_ivp(
            rhs,
            (t0, t0 + cfg.leg_time),
            state,
            method=cfg.method,
            rtol=cfg.rtol,
            atol=cfg.atol,
            events=[hit_x, hit_y, escape],
        )
        if sol.status == -1:
            raise SimulationError(f"integration failed: {sol.message}")
        ts.append(sol.t[1:])
        xs.append(sol.y[0, 1:])
        ys.append(sol.y[1, 1:])
        regions.append(np.full(len(sol.t) - 1, region))

        if sol.t_events[2].size:
            raise OrbitEscapeError(f"orbit left the period annulus at t={sol.t_events[2][0]:.6g}")
        if sol.status != 1:
            raise SimulationError(f"no switching line reached within {cfg.leg_time:g} time units")

        t_x = sol.t_events[0][0] if sol.t_events[0].size else math.inf
        t_y = sol.t_events[1][0] if sol.t_events[1].size else math.inf
        line = "x" if t_x <= t_y else "y"
        hit = sol.y_events[0][0] if line == "x" else sol.y_events[1][0]
        t0 = float(min(t_x, t_y))

        speed = math.hypot(*_field(hit[0], hit[1], region, cfg, pieces))
        normal = _field(hit[0], hit[1], region, cfg, pieces)[0 if line == "x" else 1]
        if abs(normal) < cfg.tangency_tol * speed:
            raise SimulationError(
                f"near-tangential crossing of {'x = 0' if line == 'x' else 'y = eta'} at ({hit[0]:.6g}, {hit[1]:.6g})"
            )

        if line == "x":
            residual = abs(hit[0])
            state = np.array([0.0, hit[1]])
            new_region = _ACROSS_X[region]
        else:
            residual = abs(hit[1] - eta)
            state = np.array([hit[0], eta])
            new_region = _ACROSS_Y[region]
        events.append(
            OrbitEvent(
                t=t0, x=float(state[0]), y=float(state[1]), line=line,
                from_region=region, to_region=new_region, residual=float(residual),
            )
        )
        region = new_region
        current = PhaseState(x=float(state[0]), y=float(state[1]), region=region)
        if stop(events, current):
            break

    return OrbitResult(
        start=start,
        end=current,
        t_end=t0,
        events=events,
        t=np.concatenate(ts),
        x=np.concatenate(xs),
        y=np.concatenate(ys),
        region=np.concatenate(regions),
    )


def trajectory_frame(result: OrbitResult) -> pd.DataFrame:
    """Trajectory samples as (t, x, y, region) rows"""
    return pd.DataFrame({"t": result.t, "x": result.x, "y": result.y, "region": result.region})


def poincare_displacement(y0: float, cfg: SimConfig, spec: PerturbationSpec) -> float:
    """
    y_return - y0 after one revolution from (0, y0) back to the section
    {x = 0, y > eta}.
    """
    if y0 <= cfg.eta:
        raise DomainError(f"section ordinate must exceed eta={cfg.eta}, got {y0}")
    start = PhaseState(x=0.0, y=float(y0), region=1)
    result = integrate_orbit(start, cfg, spec)
    if result.event_lines != ["y", "x", "y", "x"] or result.end.y <= cfg.eta:
        raise SimulationError(f"unexpected crossing sequence {result.event_lines} from y0={y0}")
    return result.end.y - y0


def section_ordinate(h: float, eta: float) -> float:
    """y > eta with H(0, y) = h"""
    if h == 0:
        raise DomainError("h = 0 is the outer boundary of the annulus")
    disc = 1 + 2 * eta * h
    if disc < 0:
        raise DomainError(f"h={h} below the annulus center")
    return (1 + math.sqrt(disc)) / (-2 * h)


def find_limit_cycles(
    cfg: SimConfig,
    spec: PerturbationSpec,
    grid: Sequence[float],
    melnikov_zeros: Optional[Sequence[float]] = None,
    noise_floor: float = 1e-10,
    xtol: float = 1e-12,
) -> CycleReport:
    """
    Roots of the return-map displacement on a grid of section ordinates.

    Sign changes between samples above `noise_floor` are refined with brentq.
    Each root y* is converted to h* = H(0, y*), gets a multiplier estimate
    P'(y*) from a central difference and, when Melnikov zeros are given, is
    matched to the nearest one with tolerance 10 eps.
    """
    grid = sorted(float(y) for y in grid)
    start_time = time.time()
    values = np.array([poincare_displacement(y0, cfg, spec) for y0 in grid])
    significant = np.abs(values) > noise_floor

    if not significant.any():
        logger.info(f"Displacement below {noise_floor:g} on all {len(grid)} samples; no isolated cycles")
        return CycleReport(
            eps=cfg.eps, eta=cfg.eta, grid=grid, cycles=[], degenerate=True,
            message="no isolated cycles: displacement vanishes to tolerance",
        )

    def displacement(y: float) -> float:
        return poincare_displacement(y, cfg, spec)

    cycles: List[LimitCycle] = []
    idx = np.flatnonzero(significant)
    for left, right in zip(idx[:-1], idx[1:]):
        if np.sign(values[left]) == np.sign(values[right]):
            continue
        y_star = brentq(displacement, grid[left], grid[right], xtol=xtol)
        h_star = first_integral(0.0, y_star, cfg.eta)
        step = min(1e-5, (grid[right] - grid[left]) / 4)
        slope = (displacement(y_star + step) - displacement(y_star - step)) / (2 * step)
        cycle = LimitCycle(
            y_star=y_star,
            h_star=h_star,
            multiplier=1.0 + slope,
            displacement=displacement(y_star),
        )
        if melnikov_zeros:
            nearest = min(melnikov_zeros, key=lambda z: abs(z - h_star))
            delta = abs(nearest - h_star)
            cycle = cycle.model_copy(
                update={
                    "matched_zero": float(nearest),
                    "delta_h": delta,
                    "within_tolerance": delta < 10 * abs(cfg.eps),
                }
            )
        cycles.append(cycle)
    logger.info(
        f"Cycle search over {len(grid)} ordinates in {time.time() - start_time:.1f} s: {len(cycles)} cycle(s)"
    )
    return CycleReport(eps=cfg.eps, eta=cfg.eta, grid=grid, cycles=cycles)
