"""HTTP facade over triage runs: rethresholding, frame images, verdicts.

The API adds no arithmetic of its own. Summaries and frame pages are
computed by the triage module against the stored run; only verdicts are
ever written. Threshold is always a query parameter, so what-if
exploration never mutates a run.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__
from .errors import HandTriageError, StaleRevisionError, ThresholdError
from .formats import load_coco_detections, load_yolo_detection_dir, read_size_index
from .store import RunStore, new_run_id
from .triage import (
    IMAGE_SUFFIXES,
    TriageRun,
    export_csv,
    export_report,
    list_frame_files,
    rethreshold,
    run_triage,
)

__all__ = ["create_app"]

Verdict = Literal["unreviewed", "relevant", "irrelevant"]


class CreateRunRequest(BaseModel):
    frames_dir: str
    detections_path: str
    threshold: float
    min_confidence: float = Field(default=0.0, ge=0.0, le=1.0)
    sizes_path: str | None = None


class VerdictRequest(BaseModel):
    verdict: Verdict
    note: str = ""
    revision: int = Field(default=0, ge=0)


def _load_detections(req: CreateRunRequest):
    path = Path(req.detections_path)
    if path.is_dir():
        if req.sizes_path is None:
            raise HTTPException(
                status_code=400,
                detail="detections_path is a label directory; sizes_path is required",
            )
        sizes = read_size_index(req.sizes_path)
        return load_yolo_detection_dir(path, sizes)
    if path.is_file():
        return load_coco_detections(path)
    raise HTTPException(status_code=400, detail=f"detections_path not found: {path}")


def create_app(
    data_dir: str | Path, *, read_only: bool = False, ui_dir: str | Path | None = None
) -> FastAPI:
    """Build the review service bound to a run store directory.

    Read-only sessions serve every GET endpoint but reject writes with 403.
    When ``ui_dir`` names an existing directory its contents are served
    statically at the root path, with the API mounted under ``/api``.
    """
    store = RunStore(data_dir)
    app = FastAPI(title="handtriage review service", version=__version__)

    @app.exception_handler(ThresholdError)
    async def _threshold_error(request: Request, exc: ThresholdError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(StaleRevisionError)
    async def _stale_revision(request: Request, exc: StaleRevisionError):
        return JSONResponse(
            status_code=409,
            content={"detail": str(exc), "current_revision": exc.current},
        )

    def _get_run(run_id: str) -> TriageRun:
        try:
            return store.load_run(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}") from None

    def _reject_writes() -> None:
        if read_only:
            raise HTTPException(status_code=403, detail="service is read-only")

    def _run_summary(run: TriageRun) -> dict:
        return {
            "run_id": run.run_id,
            "created_at": run.created_at,
            "frames_dir": run.frames_dir,
            "detections_path": run.detections_path,
            "threshold": run.threshold,
            "total": run.total,
            "flagged": run.flagged_count,
            "max_area": run.records[0].area if run.records else 0.0,
        }

    @app.get("/api/runs")
    def list_runs() -> list[dict]:
        return [_run_summary(run) for run in store.list_runs()]

    @app.post("/api/runs", status_code=201)
    def create_run(req: CreateRunRequest) -> dict:
        _reject_writes()
        frames_dir = Path(req.frames_dir)
        if not frames_dir.is_dir():
            raise HTTPException(status_code=400, detail=f"frames_dir not found: {frames_dir}")
        try:
            frame_files = list_frame_files(frames_dir)
            detections = _load_detections(req)
            run = run_triage(
                list(frame_files),
                detections,
                req.threshold,
                run_id=new_run_id(),
                frames_dir=str(frames_dir),
                detections_path=str(req.detections_path),
                min_confidence=req.min_confidence,
            )
        except (HandTriageError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        store.save_run(run)
        return {"run_id": run.run_id}

    @app.get("/api/runs/{run_id}/summary")
    def run_summary(run_id: str, threshold: float | None = None) -> dict:
        run = _get_run(run_id)
        value = run.threshold if threshold is None else threshold
        result = rethreshold(run, value)
        return {"flagged": result.flagged, "total": result.total, "threshold": value}

    @app.get("/api/runs/{run_id}/frames")
    def run_frames(
        run_id: str,
        threshold: float | None = None,
        page: int = Query(default=1, ge=1),
        size: int = Query(default=50, ge=1, le=500),
    ) -> dict:
        run = _get_run(run_id)
        value = run.threshold if threshold is None else threshold
        result = rethreshold(run, value)
        verdicts = store.verdicts(run_id)
        start = (page - 1) * size
        rows = []
        for record in run.records[start : start + size]:
            verdict = verdicts.get(record.frame_id)
            rows.append(
                {
                    "frame_id": record.frame_id,
                    "area": record.area,
                    "flagged": record.area > value,
                    "verdict": verdict.verdict if verdict else "unreviewed",
                    "note": verdict.note if verdict else "",
                    "revision": verdict.revision if verdict else 0,
                    "detections": [
                        {
                            "detection_id": d.detection_id,
                            "x": d.box.x,
                            "y": d.box.y,
                            "w": d.box.w,
                            "h": d.box.h,
                            "confidence": d.confidence,
                        }
                        for d in record.detections
                    ],
                }
            )
        return {
            "run_id": run_id,
            "threshold": value,
            "page": page,
            "size": size,
            "total": result.total,
            "flagged": result.flagged,
            "frames": rows,
        }

    @app.get("/api/frames/{run_id}/{frame_id:path}/image")
    def frame_image(run_id: str, frame_id: str) -> Response:
        run = _get_run(run_id)
        if run.record(frame_id) is None:
            raise HTTPException(status_code=404, detail=f"no frame {frame_id!r}")
        base = Path(run.frames_dir).resolve()
        for suffix in IMAGE_SUFFIXES:
            candidate = (base / (frame_id + suffix)).resolve()
            if os.path.commonpath([base, candidate]) != str(base):
                raise HTTPException(status_code=404, detail="frame path escapes the run")
            if candidate.is_file():
                return FileResponse(candidate)
        raise HTTPException(status_code=404, detail=f"no image file for frame {frame_id!r}")

    @app.post("/api/runs/{run_id}/frames/{frame_id:path}/verdict")
    def post_verdict(run_id: str, frame_id: str, req: VerdictRequest) -> dict:
        _reject_writes()
        _get_run(run_id)
        try:
            updated = store.set_verdict(
                run_id,
                frame_id,
                req.verdict,
                note=req.note,
                expected_revision=req.revision,
            )
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "frame_id": updated.frame_id,
            "verdict": updated.verdict,
            "note": updated.note,
            "revision": updated.revision,
        }

    @app.get("/api/runs/{run_id}/export")
    def export_run(run_id: str, format: str = "json") -> Response:
        run = _get_run(run_id)
        verdicts = store.verdicts(run_id)
        if format == "json":
            return JSONResponse(
                export_report(run, verdicts),
                headers={"Content-Disposition": f'attachment; filename="{run_id}.json"'},
            )
        if format == "csv":
            return PlainTextResponse(
                export_csv(run, verdicts),
                media_type="text/csv",
                headers={"Content-Disposition": f'attachment; filename="{run_id}.csv"'},
            )
        raise HTTPException(status_code=400, detail=f"unknown export format {format!r}")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
