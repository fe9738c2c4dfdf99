"""
HTTP service

Responsibilities:
- Analyze small images posted as rows of '0'/'1'
- Compare a reconstruction with its target
- Expose health, process metrics and the run ledger
"""

from __future__ import annotations

import logging
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException
from pydantic import BaseModel, Field
from sqlalchemy import text
from sqlalchemy.orm import Session

from tsr import database
from tsr.database import get_db, list_runs
from tsr.descriptors import ScaleSet
from tsr.errors import InputError, InvalidArgumentError, TsrError
from tsr.grid import BinaryImage
from tsr.metrics import get_metrics, record_run
from tsr.pipeline import AnalysisSummary, ValidationReport, compare, descriptor_curves, summarize

logger = logging.getLogger("tsr.service")

# ------------------------------------------------------------------------------
# FastAPI app
# ------------------------------------------------------------------------------
app = FastAPI(
    title="Two-stage Statistical Reconstruction API",
    version="1.0.0",
)


# ------------------------------------------------------------------------------
# Schemas
# ------------------------------------------------------------------------------
class AnalyzeRequest(BaseModel):
    rows: list[str] = Field(..., min_length=1)
    scale_stride: int = Field(2, ge=1)


class AnalyzeResponse(AnalysisSummary):
    curves: dict[str, dict[int, float]]


class ValidateRequest(BaseModel):
    target: list[str] = Field(..., min_length=1)
    reconstruction: list[str] = Field(..., min_length=1)
    scale_stride: int = Field(2, ge=1)


def _http_error(exc: TsrError) -> HTTPException:
    status = 422 if isinstance(exc, (InputError, InvalidArgumentError)) else 400
    logger.warning("Request rejected (%d): %s", status, exc)
    return HTTPException(status_code=status, detail=str(exc))


# ------------------------------------------------------------------------------
# Startup event
# ------------------------------------------------------------------------------
@app.on_event("startup")
def on_startup() -> None:
    if not database.enabled():
        database.configure()
    logger.info("Application startup complete (ledger %s)", "on" if database.enabled() else "off")


# ------------------------------------------------------------------------------
# Health and metrics
# ------------------------------------------------------------------------------
@app.get("/health", tags=["health"])
def health_check(db: Optional[Session] = Depends(get_db)) -> dict:
    if db is None:
        return {"status": "ok", "ledger": "disabled"}
    db.execute(text("SELECT 1"))
    return {"status": "ok", "ledger": "reachable"}


@app.get("/metrics", tags=["metrics"])
def metrics() -> dict:
    return get_metrics()


# ------------------------------------------------------------------------------
# Analysis endpoints
# ------------------------------------------------------------------------------
@app.post("/analyze", response_model=AnalyzeResponse, tags=["analysis"])
def analyze(request: AnalyzeRequest) -> AnalyzeResponse:
    """Volume fraction, clusters, <q> and descriptor curves of the posted image."""
    try:
        image = BinaryImage.from_rows(request.rows)
        scales = ScaleSet.every(image.side_length, request.scale_stride)
        summary = summarize(image)
        curves = descriptor_curves(image, scales)
    except TsrError as exc:
        record_run(success=False)
        raise _http_error(exc) from exc

    record_run(success=True)
    return AnalyzeResponse(
        **summary.model_dump(),
        curves={kind.value: curve.as_dict() for kind, curve in curves.items()},
    )


@app.post("/validate", response_model=ValidationReport, tags=["analysis"])
def validate(request: ValidateRequest) -> ValidationReport:
    try:
        target = BinaryImage.from_rows(request.target)
        reconstruction = BinaryImage.from_rows(request.reconstruction)
        report, _ = compare(target, reconstruction, ScaleSet.every(target.side_length, request.scale_stride))
    except TsrError as exc:
        record_run(success=False)
        raise _http_error(exc) from exc

    record_run(success=True)
    return report


# ------------------------------------------------------------------------------
# Run ledger
# ------------------------------------------------------------------------------
@app.get("/runs", tags=["ledger"])
def runs(db: Optional[Session] = Depends(get_db)) -> list[dict]:
    if db is None:
        return []
    return list_runs(db)
