"""JSON-over-HTTP API in front of the project service.

Versioned under /api/v1. Run progress is streamed as server-sent events.
The workbench single-page app, when built into frontend/dist, is served from
the root path.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .annotation import CodedSegment, SourceText, Span
from .errors import (
    CodealignError,
    DuplicateId,
    InvalidSpan,
    MalformedMarkup,
    MissingField,
    NoExamples,
    OverlapRejected,
    RunIncomplete,
    RunInProgress,
    TestSetViolation,
    UnannotatedExample,
    UnknownProject,
    UnknownRun,
    UnknownText,
)
from .metrics import SORT_KEYS
from .project import (
    STATUS_RUNNING,
    ProjectService,
    ProjectState,
    _annotation_to_json,
    _text_to_json,
)

_STATUS_CODES: list[tuple[type, int]] = [
    (UnknownProject, 404),
    (UnknownText, 404),
    (UnknownRun, 404),
    (RunInProgress, 409),
    (RunIncomplete, 409),
    (TestSetViolation, 409),
    (OverlapRejected, 409),
    (DuplicateId, 409),
    (NoExamples, 400),
    (UnannotatedExample, 400),
    (InvalidSpan, 400),
    (MissingField, 400),
    (MalformedMarkup, 400),
]


def _http_error(exc: CodealignError) -> HTTPException:
    for etype, code in _STATUS_CODES:
        if isinstance(exc, etype):
            return HTTPException(status_code=code, detail={"error": etype.__name__, "message": str(exc)})
    return HTTPException(status_code=400, detail={"error": type(exc).__name__, "message": str(exc)})


def _project_payload(state: ProjectState) -> dict:
    ordered = sorted(state.corpus, key=lambda t: (t.created_order, t.id))
    return {
        "project_id": state.project_id,
        "texts": [_text_to_json(t) for t in ordered],
        "human_layer": {tid: _annotation_to_json(a) for tid, a in state.human_layer.items()},
        "split": {
            "example_ids": list(state.split.example_ids),
            "validation_ids": list(state.split.validation_ids),
            "test_ids": list(state.split.test_ids),
            "test_frozen": state.split.test_frozen,
        },
        "custom_instructions": list(state.custom_instructions),
        "iteration_history": state.iteration_history,
        "runs": [
            {
                "run_id": r.run_id,
                "scope": r.scope,
                "status": r.status,
                "n_targets": len(r.target_ids),
            }
            for r in state.runs.values()
        ],
    }


def create_app(service: ProjectService, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="codealign", version="0.1.0")

    @app.post("/api/v1/projects")
    def create_project(payload: dict = Body(...)):
        corpus = payload.get("corpus")
        if not isinstance(corpus, list) or not corpus:
            raise HTTPException(status_code=400, detail={"error": "MissingField", "message": "corpus (non-empty list) is required"})
        try:
            texts = [
                SourceText(
                    id=str(rec["id"]),
                    body=str(rec["text"]),
                    context=tuple(rec.get("context") or ()),
                    created_order=int(rec.get("order", pos)),
                )
                for pos, rec in enumerate(corpus)
            ]
            project_id = service.create_project(texts, project_id=payload.get("project_id"))
        except KeyError as exc:
            raise HTTPException(status_code=400, detail={"error": "MissingField", "message": f"corpus record missing {exc}"})
        except CodealignError as exc:
            raise _http_error(exc)
        return {"project_id": project_id}

    @app.get("/api/v1/projects")
    def list_projects():
        return {"projects": service.store.list_projects()}

    @app.get("/api/v1/projects/{project_id}")
    def get_project(project_id: str):
        try:
            return _project_payload(service.get_state(project_id))
        except CodealignError as exc:
            raise _http_error(exc)

    @app.put("/api/v1/projects/{project_id}/texts/{text_id}/annotation")
    def put_annotation(project_id: str, text_id: str, payload: dict = Body(...)):
        try:
            segments = [
                CodedSegment(Span(s["start"], s["end"]), tuple(s["codes"]))
                for s in payload.get("segments", [])
            ]
            service.upsert_human_annotation(project_id, text_id, segments)
        except (CodealignError, ValueError) as exc:
            if isinstance(exc, CodealignError):
                raise _http_error(exc)
            raise HTTPException(status_code=400, detail={"error": "InvalidSegment", "message": str(exc)})
        return {"ok": True}

    @app.put("/api/v1/projects/{project_id}/examples")
    def put_examples(project_id: str, payload: dict = Body(...)):
        try:
            service.set_examples(project_id, payload.get("text_ids", []))
        except CodealignError as exc:
            raise _http_error(exc)
        return {"ok": True}

    @app.put("/api/v1/projects/{project_id}/instructions")
    def put_instructions(project_id: str, payload: dict = Body(...)):
        try:
            service.set_instructions(project_id, payload.get("lines", []))
        except CodealignError as exc:
            raise _http_error(exc)
        return {"ok": True}

    @app.put("/api/v1/projects/{project_id}/testset")
    def put_testset(project_id: str, payload: dict = Body(...)):
        try:
            service.set_test_set(project_id, payload.get("text_ids", []))
        except CodealignError as exc:
            raise _http_error(exc)
        return {"ok": True}

    @app.post("/api/v1/projects/{project_id}/runs")
    def post_run(project_id: str, payload: dict = Body(default={})):
        try:
            run_id = service.start_run(project_id, payload.get("scope", "validation"))
        except (CodealignError, ValueError) as exc:
            if isinstance(exc, CodealignError):
                raise _http_error(exc)
            raise HTTPException(status_code=400, detail={"error": "BadScope", "message": str(exc)})
        return {"run_id": run_id}

    @app.get("/api/v1/projects/{project_id}/runs/{run_id}")
    def get_run(project_id: str, run_id: str):
        try:
            return service.run_status(project_id, run_id)
        except CodealignError as exc:
            raise _http_error(exc)

    @app.get("/api/v1/projects/{project_id}/runs/{run_id}/events")
    async def run_events(project_id: str, run_id: str):
        try:
            service.run_status(project_id, run_id)
        except CodealignError as exc:
            raise _http_error(exc)

        async def stream():
            while True:
                status = service.run_status(project_id, run_id)
                yield f"event: status\ndata: {json.dumps(status)}\n\n"
                if status["status"] != STATUS_RUNNING:
                    break
                await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/v1/projects/{project_id}/runs/{run_id}/report")
    def get_report(
        project_id: str,
        run_id: str,
        sort: str = Query(default="iou_asc"),
    ):
        if sort not in SORT_KEYS:
            raise HTTPException(status_code=400, detail={"error": "BadSort", "message": f"sort must be one of {SORT_KEYS}"})
        try:
            return service.get_report(project_id, run_id, sort)
        except CodealignError as exc:
            raise _http_error(exc)

    @app.get("/api/v1/projects/{project_id}/export")
    def export(project_id: str):
        try:
            blob = service.export_zip(project_id)
        except CodealignError as exc:
            raise _http_error(exc)
        return Response(
            content=blob,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{project_id}.zip"'},
        )

    if frontend_dir is not None and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="workbench")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return "<h1>codealign</h1><p>API under /api/v1. Build the frontend for the workbench UI.</p>"

    return app
