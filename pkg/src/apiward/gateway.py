"""HTTP gateway: ingest, lifecycle control, schema retrieval, live events.

Out-of-band deployment surface for the engine. All mutating endpoints
funnel through the engine's writer contract; read endpoints serve from
the engine's atomic snapshot and never wait behind a training run. The
event stream is server-sent events with heartbeats, one bounded queue
per subscriber (drop-oldest on overflow, drops counted in /stats).
"""

from __future__ import annotations

import json
import logging
import os
import queue
import socket
import threading
import time
from typing import Optional

from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from . import openapi_gen
from .config import EngineConfig
from .engine import Engine, InsufficientData, Phase, PhaseError
from .request_model import RawRequest
from .schema_graph import Verdict

log = logging.getLogger("apiward.gateway")

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8700


class BindError(RuntimeError):
    """The configured address/port cannot be bound."""


class ConfigError(RuntimeError):
    """The service configuration is unusable."""


class EventBus:
    """Fan-out of anomalous verdicts to SSE subscribers.

    Each subscriber owns a bounded thread-safe queue; publishing never
    blocks — when a queue is full the oldest event is dropped and
    counted. Events carry a global sequence number assigned under the
    publish lock, so every subscriber sees its events in classification
    order.
    """

    _CLOSE = object()

    def __init__(self, capacity: int = 256):
        self.capacity = max(1, int(capacity))
        self._lock = threading.Lock()
        self._subscribers: dict[int, queue.Queue] = {}
        self._next_id = 0
        self._seq = 0
        self.published = 0
        self.dropped = 0

    def subscribe(self) -> tuple[int, "queue.Queue"]:
        q: queue.Queue = queue.Queue(self.capacity)
        with self._lock:
            sid = self._next_id
            self._next_id += 1
            self._subscribers[sid] = q
        return sid, q

    def unsubscribe(self, sid: int) -> None:
        with self._lock:
            self._subscribers.pop(sid, None)

    def publish(self, event: dict) -> None:
        with self._lock:
            self._seq += 1
            event = dict(event, seq=self._seq)
            self.published += 1
            for q in self._subscribers.values():
                while True:
                    try:
                        q.put_nowait(event)
                        break
                    except queue.Full:
                        try:
                            q.get_nowait()
                            self.dropped += 1
                        except queue.Empty:  # pragma: no cover - race window
                            pass

    def close(self) -> None:
        with self._lock:
            subscribers = list(self._subscribers.values())
            self._subscribers.clear()
        for q in subscribers:
            try:
                q.put_nowait(self._CLOSE)
            except queue.Full:
                try:
                    q.get_nowait()
                except queue.Empty:
                    pass
                q.put_nowait(self._CLOSE)

    def stats(self) -> dict:
        with self._lock:
            return {
                "subscribers": len(self._subscribers),
                "published": self.published,
                "dropped": self.dropped,
            }


class _AccessLogMiddleware:
    """Structured JSON access log as raw ASGI middleware.

    Deliberately not BaseHTTPMiddleware: that wrapper buffers streaming
    responses, which would stall the /events stream.
    """

    def __init__(self, app):
        self.app = app

    async def __call__(self, scope, receive, send):
        if scope["type"] != "http":
            await self.app(scope, receive, send)
            return
        start = time.perf_counter()
        status = {"code": 0}

        async def sending(message):
            if message["type"] == "http.response.start":
                status["code"] = message["status"]
            await send(message)

        try:
            await self.app(scope, receive, sending)
        finally:
            log.info(
                json.dumps(
                    {
                        "method": scope.get("method"),
                        "path": scope.get("path"),
                        "status": status["code"],
                        "duration_ms": round((time.perf_counter() - start) * 1e3, 3),
                    }
                )
            )


def _phase_conflict(message: str, engine: Engine) -> JSONResponse:
    return JSONResponse(
        status_code=409,
        content={"error": message, "phase": engine.phase.value},
    )


def create_app(engine: Optional[Engine] = None, config: Optional[EngineConfig] = None) -> FastAPI:
    """Build the gateway application around one engine instance."""
    if engine is None:
        engine = Engine(config or EngineConfig())
    bus = EventBus(engine.config.event_buffer)
    app = FastAPI(title="apiward gateway", openapi_url=None, docs_url=None, redoc_url=None)
    app.state.engine = engine
    app.state.bus = bus

    app.add_middleware(_AccessLogMiddleware)

    def publish_verdict(verdict: Verdict) -> None:
        if verdict is not None and verdict.is_anomalous:
            bus.publish(verdict.to_dict())

    # ------------------------------------------------------------- ingest

    @app.post("/ingest")
    async def ingest(request: Request) -> Response:
        """Single JSON record, a JSON array, or JSONL (one record per line)."""
        raw = await request.body()
        content_type = request.headers.get("content-type", "")
        try:
            if "json" in content_type and not content_type.startswith("application/x-ndjson"):
                doc = json.loads(raw.decode("utf-8"))
                records = doc if isinstance(doc, list) else [doc]
            else:
                records = [
                    json.loads(line)
                    for line in raw.decode("utf-8").splitlines()
                    if line.strip()
                ]
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return JSONResponse(status_code=400, content={"error": f"bad request body: {exc}"})
        verdicts = []
        ingested = 0
        for i, record in enumerate(records):
            try:
                req = RawRequest.from_json_record(record)
            except (KeyError, TypeError, ValueError) as exc:
                return JSONResponse(
                    status_code=400,
                    content={"error": f"record {i}: {exc}", "ingested": ingested},
                )
            verdict = engine.ingest(req)
            ingested += 1
            if verdict is not None:
                publish_verdict(verdict)
                verdicts.append(verdict.to_dict())
        return JSONResponse({"ingested": ingested, "phase": engine.phase.value, "verdicts": verdicts})

    # -------------------------------------------------------------- reads

    @app.get("/tree")
    def tree() -> JSONResponse:
        return JSONResponse(engine.tree_snapshot())

    @app.get("/schema")
    def schema() -> Response:
        snap = engine.active_schema()
        if snap is None:
            return _phase_conflict("no schema yet: run baseline first", engine)
        return JSONResponse(snap.to_dict())

    @app.get("/openapi.json")
    def openapi_doc() -> Response:
        snap = engine.active_schema()
        if snap is None:
            return _phase_conflict("no schema yet: run baseline first", engine)
        return JSONResponse(openapi_gen.generate_spec(snap))

    @app.get("/stats")
    def stats() -> JSONResponse:
        data = engine.stats()
        data["events"] = bus.stats()
        return JSONResponse(data)

    @app.get("/diff")
    def diff(
        from_version: int = Query(alias="from"), to_version: int = Query(alias="to")
    ) -> Response:
        lo = engine.schema_by_version(from_version)
        hi = engine.schema_by_version(to_version)
        missing = [str(v) for v, s in ((from_version, lo), (to_version, hi)) if s is None]
        if missing:
            return JSONResponse(
                status_code=404,
                content={"error": f"unknown schema version(s): {', '.join(missing)}"},
            )
        delta = openapi_gen.diff_specs(lo, hi)
        body = delta.to_dict()
        body["text"] = openapi_gen.format_diff(delta)
        return JSONResponse(body)

    # ------------------------------------------------------------ control

    @app.post("/phase")
    async def set_phase(request: Request) -> Response:
        try:
            doc = json.loads((await request.body()).decode("utf-8"))
            target = doc["target"]
        except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError) as exc:
            return JSONResponse(status_code=400, content={"error": f"expected {{\"target\": ...}}: {exc}"})
        try:
            phase = engine.set_phase(target)
        except ValueError:
            return JSONResponse(
                status_code=400,
                content={"error": f"unknown phase {target!r}", "phase": engine.phase.value},
            )
        except (PhaseError, InsufficientData) as exc:
            return _phase_conflict(str(exc), engine)
        return JSONResponse({"phase": phase.value})

    @app.post("/baseline")
    def baseline() -> Response:
        try:
            schema = engine.baseline()
        except (PhaseError, InsufficientData) as exc:
            return _phase_conflict(str(exc), engine)
        return JSONResponse(
            {"phase": engine.phase.value, "schema_version": schema.version}
        )

    @app.post("/reset")
    def reset() -> JSONResponse:
        engine.reset()
        return JSONResponse({"phase": engine.phase.value})

    # ------------------------------------------------------------- events

    @app.get("/events")
    def events() -> StreamingResponse:
        """SSE stream of anomalous verdicts, heartbeat comments between."""
        heartbeat = max(0.1, float(engine.config.heartbeat_seconds))
        sid, q = bus.subscribe()

        def stream():
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event = q.get(timeout=heartbeat)
                    except queue.Empty:
                        yield ": heartbeat\n\n"
                        continue
                    if event is EventBus._CLOSE:
                        return
                    yield f"id: {event['seq']}\nevent: verdict\ndata: {json.dumps(event)}\n\n"
            finally:
                bus.unsubscribe(sid)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/healthz")
    def healthz() -> PlainTextResponse:
        return PlainTextResponse("ok")

    @app.on_event("shutdown")
    def shutdown() -> None:
        bus.close()

    return app


def _resolve_bind(host: Optional[str], port: Optional[int]) -> tuple[str, int]:
    host = host or os.environ.get("APIWARD_HOST", DEFAULT_HOST)
    if port is None:
        raw = os.environ.get("APIWARD_PORT", str(DEFAULT_PORT))
        try:
            port = int(raw)
        except ValueError as exc:
            raise ConfigError(f"APIWARD_PORT={raw!r} is not a port number") from exc
    if not (0 < port < 65536):
        raise ConfigError(f"port {port} out of range")
    return host, port


def serve(
    config: Optional[EngineConfig] = None,
    host: Optional[str] = None,
    port: Optional[int] = None,
    engine: Optional[Engine] = None,
) -> None:
    """Run the gateway until interrupted. Bind address from args or env."""
    import uvicorn

    host, port = _resolve_bind(host, port)
    # Surface unusable addresses as BindError before uvicorn's own exit.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()
    app = create_app(engine=engine, config=config)
    log.info("gateway listening on http://%s:%d", host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")
