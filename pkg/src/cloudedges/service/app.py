"""HTTP surface of the annotation service (everything under /api/v1).

Routes
    GET  /api/v1/health
    POST /api/v1/sessions                          multipart cloud upload
    GET  /api/v1/sessions                          summaries
    GET  /api/v1/sessions/{id}                     status / progress / revisions
    GET  /api/v1/sessions/{id}/points?chunk=&size= base64 float32 buffers
    GET  /api/v1/sessions/{id}/labels              sparse user labels
    POST /api/v1/sessions/{id}/labels              apply edits atomically
    POST /api/v1/sessions/{id}/train               background training job
    POST /api/v1/sessions/{id}/classify            background classification
    GET  /api/v1/sessions/{id}/classification      base64 uint8 buffers
    GET  /api/v1/sessions/{id}/export              zip archive
    GET  /api/v1/sessions/{id}/events              server-sent events

Error mapping: unknown ids 404, bad data 400, oversized uploads 413,
state conflicts (busy, not ready, nothing trained) 409, numerical
failures 500.
"""

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse

from ..errors import DataError, NumericError
from .multipart import parse_multipart
from .schemas import LabelEditRequest, TrainRequest
from .store import (ConflictError, NotFoundError, PointLimitError,
                    SessionOptions, SessionStore)

API_PREFIX = "/api/v1"


def create_app(state_dir, *, max_points=2_000_000,
               keepalive_seconds=15.0) -> FastAPI:
    """Build the service around one persistent state directory."""
    store = SessionStore(state_dir, max_points=max_points)
    app = FastAPI(title="cloudedges annotation service", version="1.0")
    app.state.store = store

    def handler(status_code):
        def _handle(request, exc):
            return JSONResponse({"detail": str(exc)},
                                status_code=status_code)
        return _handle

    app.add_exception_handler(NotFoundError, handler(404))
    app.add_exception_handler(ConflictError, handler(409))
    app.add_exception_handler(PointLimitError, handler(413))
    app.add_exception_handler(DataError, handler(400))
    app.add_exception_handler(NumericError, handler(500))

    # ------------------------------------------------------------- routes

    @app.get(f"{API_PREFIX}/health")
    def health():
        return {"status": "ok", "sessions": len(store.sessions)}

    @app.post(f"{API_PREFIX}/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        fields = parse_multipart(body,
                                 request.headers.get("content-type", ""))
        if "cloud" not in fields:
            raise DataError("missing 'cloud' file field in the upload")
        filename, payload = fields["cloud"]

        def text(name, default=None):
            if name not in fields:
                return default
            return fields[name][1].decode("utf-8").strip()

        try:
            options = SessionOptions(
                scales=int(text("scales", "16")),
                s_min=float(text("smin")) if text("smin") else None,
                s_max=float(text("smax")) if text("smax") else None,
                feature_set=text("featureSet", "standard6"),
                fit=text("fit", "apss"),
                estimate_normals=(text("estimateNormals", "true").lower()
                                  != "false"),
                normal_k=int(text("normalK", "16")),
                name=text("name", "") or (filename or ""),
            )
        except ValueError as exc:
            raise DataError(f"bad session option: {exc}") from exc
        session = store.create(payload, filename, options)
        return {"id": session.id, "status": session.status,
                "points": session.points}

    @app.get(f"{API_PREFIX}/sessions")
    def list_sessions():
        return store.list_sessions()

    @app.get(f"{API_PREFIX}/sessions/{{sid}}")
    def session_status(sid: str):
        return store.status_payload(store.get(sid))

    @app.get(f"{API_PREFIX}/sessions/{{sid}}/points")
    def points(sid: str, chunk: int = 0, size: int = 65536):
        return store.points_chunk(store.get(sid), chunk, size)

    @app.get(f"{API_PREFIX}/sessions/{{sid}}/labels")
    def get_labels(sid: str):
        return store.labels_payload(store.get(sid))

    @app.post(f"{API_PREFIX}/sessions/{{sid}}/labels")
    def set_labels(sid: str, request: LabelEditRequest):
        return store.set_labels(store.get(sid), request.edits)

    @app.post(f"{API_PREFIX}/sessions/{{sid}}/train", status_code=202)
    def train_session(sid: str, request: TrainRequest):
        return {"jobId": store.start_train(store.get(sid), request)}

    @app.post(f"{API_PREFIX}/sessions/{{sid}}/classify", status_code=202)
    def classify_session(sid: str):
        return {"jobId": store.start_classify(store.get(sid))}

    @app.get(f"{API_PREFIX}/sessions/{{sid}}/classification")
    def classification(sid: str, chunk: int = 0, size: int = 262144):
        return store.classification_chunk(store.get(sid), chunk, size)

    @app.get(f"{API_PREFIX}/sessions/{{sid}}/export")
    def export(sid: str):
        session = store.get(sid)
        data = store.export_zip(session)
        return Response(
            content=data, media_type="application/zip",
            headers={"Content-Disposition":
                     f'attachment; filename="session-{session.id}.zip"'})

    @app.get(f"{API_PREFIX}/sessions/{{sid}}/events")
    def events(sid: str):
        session = store.get(sid)
        subscription = store.subscribe(session)

        def stream():
            import queue as _queue
            try:
                yield _sse("status", store.status_payload(session))
                while True:
                    try:
                        event, data = subscription.get(
                            timeout=keepalive_seconds)
                    except _queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield _sse(event, data)
            finally:
                store.unsubscribe(session, subscription)

        return StreamingResponse(
            stream(), media_type="text/event-stream",
            headers={"Cache-Control": "no-cache",
                     "X-Accel-Buffering": "no"})

    return app


def _sse(event, data) -> str:
    return f"event: {event}\ndata: {json.dumps(data)}\n\n"
