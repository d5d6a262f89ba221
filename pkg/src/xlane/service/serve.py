"""Assembled runtime: frame source -> adaptor -> broker, exposed over HTTP.

GET  /healthz          liveness
POST /predict          direct access to a worker (window + method config)
WS   /ws               broker client protocol: send {"type":"open"|"close",
                       "uuid": ...}; receive prediction / roster /
                       session_closed / error / gap messages
"""

from __future__ import annotations

import asyncio
import json
import threading

from fastapi import Body, FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from ..errors import ValidationError
from ..model import load_model
from .adaptor import LiveAdaptor
from .broker import Broker, SubscriberChannel
from .identity import IdentityCache
from .protocol import parse_client_message
from .worker import WorkerCore


class ServiceRuntime:
    """Owns the pump thread that feeds frames into the broker."""

    def __init__(self, params, source_frames, workers: int = 2,
                 ttl: float = 5.0, speed: float = None, snapshot_path=None):
        self.workers = [WorkerCore(params, worker_id=f"w{i}")
                        for i in range(max(1, workers))]
        self.adaptor = LiveAdaptor(IdentityCache(ttl=ttl,
                                                 snapshot_path=snapshot_path))
        self.broker = Broker(self.workers, ttl=ttl)
        self._source = source_frames
        self._speed = speed
        self._thread = None
        self._stop = threading.Event()

    def pump(self):
        from ..twin.replay import stream_replay
        for frame in stream_replay(self._source, speed=self._speed):
            if self._stop.is_set():
                break
            enriched = self.adaptor.enrich(frame)
            if enriched is not None:
                self.broker.on_frame(enriched)

    def start(self):
        self._thread = threading.Thread(target=self.pump, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


def build_app(runtime: ServiceRuntime):
    app = FastAPI(title="lane-change prediction service")
    app.state.runtime = runtime

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(runtime.broker.sessions),
                "drops": runtime.adaptor.drop_count}

    @app.post("/predict")
    async def predict(body: dict = Body(...)):
        status, response = runtime.workers[0].handle("/predict", body)
        return JSONResponse(response, status_code=status)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        channel = SubscriberChannel(maxlen=256)
        runtime.broker.subscribe_roster(channel)
        opened = set()

        async def sender():
            while not channel.closed:
                msg = await asyncio.to_thread(channel.pop, 0.25)
                if msg is not None:
                    await ws.send_text(json.dumps(msg))

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = parse_client_message(raw)
                except ValidationError as e:
                    channel.push({"type": "error", "op": "parse",
                                  "reason": str(e)})
                    continue
                if msg["type"] == "open":
                    options = {k: msg[k] for k in
                               ("method", "ln_rule", "epsilon", "steps",
                                "explain_class") if k in msg}
                    session = runtime.broker.open_session(msg["uuid"], channel,
                                                          options)
                    if session is not None:
                        opened.add(msg["uuid"])
                else:
                    runtime.broker.close_session(msg["uuid"], channel)
                    opened.discard(msg["uuid"])
        except WebSocketDisconnect:
            pass
        finally:
            for uuid in opened:
                runtime.broker.close_session(uuid, channel)
            runtime.broker.unsubscribe_roster(channel)
            channel.close()
            send_task.cancel()

    return app


def make_runtime(model_path, source: str, workers: int = 2,
                 speed: float = 1.0, ttl: float = 5.0,
                 snapshot_path=None) -> ServiceRuntime:
    """source: "sim" (live simulation) or "replay:<path>"."""
    params = load_model(model_path)
    if source == "sim":
        from ..twin.sim import Sim, SimConfig
        frames = Sim(SimConfig(seed=0, spawn_rate=0.5))
    elif source.startswith("replay:"):
        frames = source.split(":", 1)[1]
    else:
        raise ValidationError("source must be 'sim' or 'replay:<path>'")
    return ServiceRuntime(params, frames, workers=workers, speed=speed,
                          ttl=ttl, snapshot_path=snapshot_path)


def serve(model_path, source: str, workers: int = 2, port: int = 8700,
          host: str = "127.0.0.1", speed: float = 1.0):
    import uvicorn

    runtime = make_runtime(model_path, source, workers=workers, speed=speed)
    app = build_app(runtime)
    runtime.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        runtime.stop()
