import logging
from typing import Any, Dict, Optional

from fastapi import APIRouter, Body, Depends, Query  # type: ignore
from fastapi.responses import JSONResponse  # type: ignore

from app.errors import SpecValidationError
from app.services.melnikov_service import MelnikovService, get_singleton_melnikov_service
from app.utils.perturbation import PerturbationSpec

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/melnikov", tags=["melnikov"])


def _respond(result: Dict[str, Any]):
    """Result dicts pass through; failures become 422, or 500 when unexpected"""
    if result.get("success"):
        return result
    status = 500 if result.get("error") == "internal" else 422
    logger.warning(f"Request failed ({status}): {result.get('message')}")
    return JSONResponse(status_code=status, content=result)


def _parse_spec(body: Dict[str, Any]):
    try:
        return PerturbationSpec.from_json(body), None
    except SpecValidationError as e:
        logger.warning(f"Invalid perturbation spec: {e}")
        content = {"success": False, "message": str(e), "error": "SpecValidationError"}
        return None, JSONResponse(status_code=422, content=content)


@router.get("/bound")
def get_bound(
    n: int = Query(..., ge=1, description="Degree of the perturbation"),
    case: str = Query("general", description="general, thm2, thm3 or smooth"),
    service: MelnikovService = Depends(get_singleton_melnikov_service),
):
    """Upper bound on the number of zeros of M(h) for degree n"""
    return _respond(service.bound(n, case))


@router.get("/reduce")
def get_reduce(
    i: int = Query(..., ge=0),
    j: int = Query(..., ge=-1),
    contour: str = Query("1", description="Side 1..4 or a contour name such as gamma"),
    eta: str = Query("1", description="Rational eta as p/q"),
    service: MelnikovService = Depends(get_singleton_melnikov_service),
):
    """
    Reduced form of the integral of x^i y^(j-3) dy over a side of the oval

    Returns:
    - expr: generator coefficients, tail and denominator power as JSON
    - repr: readable form of the same expression
    """
    return _respond(service.reduce(contour, i, j, eta))


@router.post("/assemble")
def post_assemble(
    body: Dict[str, Any] = Body(..., description="Perturbation spec"),
    case: Optional[str] = Query(None, description="Assemble along another case path"),
    service: MelnikovService = Depends(get_singleton_melnikov_service),
):
    spec, error = _parse_spec(body)
    if error:
        return error
    return _respond(service.assemble(spec, case))


@router.post("/eval")
def post_eval(
    body: Dict[str, Any] = Body(..., description="Perturbation spec"),
    h: str = Query(..., description="Energy level inside the annulus"),
    service: MelnikovService = Depends(get_singleton_melnikov_service),
):
    spec, error = _parse_spec(body)
    if error:
        return error
    return _respond(service.evaluate(spec, h))


@router.post("/zeros")
def post_zeros(
    body: Dict[str, Any] = Body(..., description="Perturbation spec"),
    samples: Optional[int] = Query(None, ge=2),
    service: MelnikovService = Depends(get_singleton_melnikov_service),
):
    """Zero report of M(h) over the annulus"""
    spec, error = _parse_spec(body)
    if error:
        return error
    result = service.zeros(spec, samples)
    if result.get("success"):
        logger.info(f"Zero scan n={spec.n} case={spec.case.value}: {result['report']['count']} zeros")
    return _respond(result)


@router.post("/calibrate")
def post_calibrate(
    eta: str = Query("1", description="Rational eta as p/q"),
    service: MelnikovService = Depends(get_singleton_melnikov_service),
):
    return _respond(service.calibrate(eta))
