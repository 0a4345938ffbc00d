"""Live decode service for the operator console.

One interactive client speaks newline-free JSON messages over a
WebSocket. Telemetry goes out every decode tick; inbound controls are
validated immediately (ack or error) and applied at the next tick
boundary. Three activities cooperate without shared mutable state: the
sample producer and decode/kinematics loop run on one thread that owns
all session state, and client I/O exchanges messages with it through
queues.

Wire schemas (field names are normative):
  out: {"type":"tick","seq","t","labels":[5],"forces":[5],"angles":[5],"target"?}
       {"type":"session_result","metrics":{"rmse","mape","r2"},"n_ticks"}
       {"type":"ack","of":...} | {"type":"error","category","message"}
  in:  {"type":"set_activation","values":[5]}
       {"type":"set_gains","k_alpha","k_F"}
       {"type":"session","action":"start"|"stop","mode":"sine","freq","finger"}
       {"type":"load_model","path"}
"""

from __future__ import annotations

import json
import queue
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import runtime, synth, training
from .config import FINGER_NAMES, RuntimeConfig
from .evaluation import tracking_metrics

TICK_DT = 0.05


class ControlError(ValueError):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class DecodeService:
    """Owns the decode loop; the loop thread is the single writer of all
    session and hand state."""

    def __init__(self, ckpt_path, cfg: RuntimeConfig = RuntimeConfig(),
                 gen_cfg: synth.GeneratorConfig = synth.GeneratorConfig(),
                 seed: int = 7, realtime: bool = True):
        self.cfg = cfg
        self.gen_cfg = gen_cfg
        self.ckpt = training.load_checkpoint(ckpt_path)
        self.realtime = realtime
        self._seed = seed
        self._controls: queue.Queue = queue.Queue()
        self._client_out: queue.Queue | None = None
        self._client_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.seq = 0
        self.skipped = 0
        self.tick_latencies: list[float] = []
        self._reset_pipeline()
        self.hand = runtime.HandState(k_alpha=cfg.k_alpha, k_force=cfg.k_force)
        self.activation = np.zeros(5)
        self.session = None  # dict while a sine session is active

    def _reset_pipeline(self):
        self.gen = synth.StreamingSynth(self._seed, cfg=self.gen_cfg)
        self.decoder = runtime.StreamDecoder(self.ckpt, self.cfg)

    # -- client attachment ----------------------------------------------------

    def attach_client(self) -> queue.Queue | None:
        """Returns the telemetry queue, or None if a client is already attached."""
        with self._client_lock:
            if self._client_out is not None:
                return None
            self._client_out = queue.Queue()
            return self._client_out

    def detach_client(self):
        with self._client_lock:
            if self._client_out is not None:
                self._client_out.put(None)  # sentinel for the writer task
            self._client_out = None
        # client gone: pause any running session rather than scoring a gap
        self._controls.put({"type": "_pause"})

    def _emit(self, msg: dict):
        with self._client_lock:
            if self._client_out is not None:
                self._client_out.put(msg)

    # -- control handling -----------------------------------------------------

    def submit_control(self, msg: dict) -> dict:
        """Validate a control message; queue it for the next tick boundary.

        Returns the ack/error reply to send back immediately.
        """
        try:
            self._validate(msg)
        except ControlError as exc:
            return {"type": "error", "category": exc.category, "message": str(exc)}
        self._controls.put(msg)
        return {"type": "ack", "of": msg.get("type")}

    def _validate(self, msg):
        if not isinstance(msg, dict) or "type" not in msg:
            raise ControlError("schema", "message must be an object with a type")
        kind = msg["type"]
        if kind == "set_activation":
            values = msg.get("values")
            if (not isinstance(values, list) or len(values) != 5
                    or not all(isinstance(v, (int, float)) for v in values)):
                raise ControlError("schema", "values must be 5 numbers")
            if any(abs(v) > 1 for v in values):
                raise ControlError("range", "activation values must lie in [-1, 1]")
        elif kind == "set_gains":
            # k_alpha may be zeroed to freeze the hand; k_F is always positive
            if "k_alpha" in msg and (
                not isinstance(msg["k_alpha"], (int, float)) or msg["k_alpha"] < 0
            ):
                raise ControlError("range", "k_alpha must be >= 0")
            if "k_F" in msg and (
                not isinstance(msg["k_F"], (int, float)) or msg["k_F"] <= 0
            ):
                raise ControlError("range", "k_F must be positive")
        elif kind == "session":
            action = msg.get("action")
            if action not in ("start", "stop"):
                raise ControlError("schema", "action must be start or stop")
            if action == "start":
                if msg.get("mode", "sine") != "sine":
                    raise ControlError("schema", "only sine sessions are supported")
                freq = msg.get("freq", self.cfg.sine_freq)
                if not isinstance(freq, (int, float)) or freq <= 0:
                    raise ControlError("range", "freq must be positive")
                finger = msg.get("finger")
                if finger not in FINGER_NAMES and finger not in range(5):
                    raise ControlError("schema", f"finger must be one of {FINGER_NAMES}")
        elif kind == "load_model":
            path = msg.get("path")
            if not isinstance(path, str) or not Path(path).is_file():
                raise ControlError("io", f"checkpoint not found: {path!r}")
        elif kind == "_pause":
            pass
        else:
            raise ControlError("schema", f"unknown control type {kind!r}")

    def _apply(self, msg):
        kind = msg["type"]
        if kind == "set_activation":
            self.activation = np.clip(np.asarray(msg["values"], dtype=np.float64), -1, 1)
        elif kind == "set_gains":
            if "k_alpha" in msg:
                self.hand.k_alpha = float(msg["k_alpha"])
            if "k_F" in msg:
                self.hand.k_force = float(msg["k_F"])
        elif kind == "session":
            if msg["action"] == "start":
                finger = msg.get("finger", "index")
                if finger in FINGER_NAMES:
                    finger = FINGER_NAMES.index(finger)
                self.session = {
                    "freq": float(msg.get("freq", self.cfg.sine_freq)),
                    "finger": int(finger),
                    "t0": None,  # set on the first in-session tick
                    "target": [],
                    "decoded": [],
                    "paused": False,
                }
            else:
                self._finish_session()
        elif kind == "load_model":
            self.ckpt = training.load_checkpoint(msg["path"])
            self._reset_pipeline()
        elif kind == "_pause":
            if self.session is not None:
                self.session["paused"] = True

    def _finish_session(self):
        sess = self.session
        if sess is None:
            return
        self.session = None
        if len(sess["target"]) >= 2:
            m = tracking_metrics(np.asarray(sess["target"]), np.asarray(sess["decoded"]))
            metrics = {"rmse": m.rmse, "mape": m.mape, "r2": m.r2}
        else:
            metrics = {"rmse": None, "mape": None, "r2": None}
        self._emit({
            "type": "session_result",
            "metrics": metrics,
            "n_ticks": len(sess["target"]),
            "finger": FINGER_NAMES[sess["finger"]],
            "freq": sess["freq"],
        })

    # -- the decode loop ------------------------------------------------------

    def run_ticks(self, n: int):
        """Advance the loop n ticks without pacing (test and benchmark path)."""
        for _ in range(n):
            self._tick()

    def _tick(self):
        t_start = time.perf_counter()
        while True:
            try:
                self._apply(self._controls.get_nowait())
            except queue.Empty:
                break
        self.gen.set_labels(self.activation)
        ticks = self.decoder.push(self.gen.next_chunk(self.cfg.tick_samples))
        for tick in ticks:
            labels = tick.labels
            self.hand = runtime.kinematics_step(self.hand, labels, TICK_DT, self.cfg)
            forces = runtime.force_map(labels, self.hand.k_force)
            msg = {
                "type": "tick",
                "seq": self.seq,
                "t": tick.t,
                "labels": [float(v) for v in labels],
                "forces": [float(v) for v in forces],
                "angles": [float(v) for v in self.hand.theta],
            }
            if self.session is not None and not self.session["paused"]:
                sess = self.session
                if sess["t0"] is None:
                    sess["t0"] = tick.t
                t_rel = tick.t - sess["t0"]
                target = np.sin(2 * np.pi * sess["freq"] * t_rel)
                sess["target"].append(float(target))
                sess["decoded"].append(float(labels[sess["finger"]]))
                msg["target"] = float(target)
            self.seq += 1
            self._emit(msg)
        self.tick_latencies.append(time.perf_counter() - t_start)

    def _loop(self):
        period = self.cfg.tick_samples / 1000.0
        next_deadline = time.monotonic() + period
        while not self._stop.is_set():
            self._tick()
            now = time.monotonic()
            if now < next_deadline:
                time.sleep(next_deadline - now)
            elif now > next_deadline + period:
                # fell behind by more than a hop; count the skip, resync
                self.skipped += 1
                next_deadline = now
            next_deadline += period

    def start(self):
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def latency_stats(self) -> dict:
        lat = np.asarray(self.tick_latencies)
        if lat.size == 0:
            return {"n": 0}
        return {
            "n": int(lat.size),
            "p50_ms": float(np.percentile(lat, 50) * 1000),
            "p99_ms": float(np.percentile(lat, 99) * 1000),
            "max_ms": float(lat.max() * 1000),
            "deadline_misses": int((lat > TICK_DT).sum()),
            "skipped": self.skipped,
        }


def create_app(service: DecodeService, ui_dir=None) -> FastAPI:
    app = FastAPI(title="emgforce decode service")

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        out = service.attach_client()
        if out is None:
            await websocket.send_text(json.dumps(
                {"type": "error", "category": "busy",
                 "message": "another client is connected"}))
            await websocket.close()
            return

        import asyncio

        loop = asyncio.get_event_loop()

        async def writer():
            while True:
                msg = await loop.run_in_executor(None, out.get)
                if msg is None:
                    return
                await websocket.send_text(json.dumps(msg))

        writer_task = asyncio.ensure_future(writer())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    reply = {"type": "error", "category": "schema",
                             "message": "invalid JSON"}
                else:
                    reply = service.submit_control(msg)
                await websocket.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            service.detach_client()
            writer_task.cancel()

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model": service.ckpt.kind}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
