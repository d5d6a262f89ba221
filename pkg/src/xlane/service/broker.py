"""Session broker: per-vehicle prediction sessions over the enriched stream.

The broker owns all session state (ring buffers of recent per-vehicle
windows, subscriber channels, liveness bookkeeping); workers stay stateless.
Each enriched frame drives one tick: rings grow, warming sessions activate
after accumulating the four-frame history, active sessions get exactly one
prediction per new frame of their vehicle, and garbage collection closes
sessions whose vehicle has been absent beyond the TTL or whose subscribers
are gone. Ticks are serialized by one lock (single logical writer); worker
calls happen in batch per tick and are retried once on another worker.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError, WindowNotReady
from ..features import N_STEPS, SLOT_NAMES, STEP_SPACING, ObservationWindow
from .adaptor import EnrichedFrame
from ..twin.neighbors import extract_neighbors

WARMUP_FRAMES = N_STEPS - 1


class SubscriberChannel:
    """Bounded push queue; overflow drops the oldest and surfaces a gap notice."""

    def __init__(self, maxlen: int = 64):
        self.maxlen = maxlen
        self._queue = deque()
        self._dropped = 0
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self.closed = False

    def push(self, message: dict) -> None:
        with self._ready:
            if self.closed:
                return
            if len(self._queue) >= self.maxlen:
                self._queue.popleft()
                self._dropped += 1
            self._queue.append(message)
            self._ready.notify()

    def pop(self, timeout: float = None):
        """Next message, a pending gap notice first; None on timeout/close."""
        with self._ready:
            if self._dropped:
                notice = {"type": "gap", "dropped": self._dropped}
                self._dropped = 0
                return notice
            if not self._queue and not self.closed:
                self._ready.wait(timeout)
            if self._dropped:
                notice = {"type": "gap", "dropped": self._dropped}
                self._dropped = 0
                return notice
            if self._queue:
                return self._queue.popleft()
            return None

    def drain(self):
        out = []
        while True:
            msg = self.pop(timeout=0)
            if msg is None:
                return out
            out.append(msg)

    def close(self):
        with self._ready:
            self.closed = True
            self._ready.notify_all()


@dataclass
class Session:
    uuid: str
    state: str = "warming"              # warming | active | closing
    ring: deque = field(default_factory=lambda: deque(maxlen=8))
    subscribers: list = field(default_factory=list)
    last_seen: float = 0.0
    opened_at: float = 0.0
    subscribers_empty_since: float = None
    options: dict = field(default_factory=dict)
    predictions: int = 0

    def push(self, message: dict) -> None:
        for ch in list(self.subscribers):
            ch.push(message)


class Broker:
    def __init__(self, workers, ttl: float = 5.0, frame_period: float = 0.5,
                 subscriber_grace: float = 2.0, routing_seed: int = 0,
                 roster_every: int = 1, clock=time.perf_counter):
        if not workers:
            raise ValidationError("broker needs at least one worker")
        self.workers = list(workers)
        self.ttl = ttl
        self.frame_period = frame_period
        self.subscriber_grace = subscriber_grace
        self.sessions: dict[str, Session] = {}
        self.latest_frame: EnrichedFrame = None
        self.closed_log: list = []
        self._routing = np.random.default_rng(routing_seed)
        self._roster_every = roster_every
        self._frame_count = 0
        self._clock = clock
        self._lock = threading.RLock()
        self.latencies_ms: list = []
        self.roster_subscribers: list = []

    # -- session control ------------------------------------------------------

    def open_session(self, uuid: str, subscriber: SubscriberChannel,
                     options: dict = None):
        """Attach a subscriber; creates the session if the vehicle is live."""
        with self._lock:
            session = self.sessions.get(uuid)
            if session is None:
                live = (self.latest_frame is not None
                        and self.latest_frame.by_uuid(uuid) is not None)
                if not live:
                    subscriber.push({"type": "error", "op": "open",
                                     "uuid": uuid, "reason": "not_found"})
                    return None
                now = self.latest_frame.t
                session = Session(uuid=uuid, opened_at=now, last_seen=now,
                                  options=dict(options or {}))
                self.sessions[uuid] = session
            session.subscribers.append(subscriber)
            session.subscribers_empty_since = None
            subscriber.push({"type": "ack", "op": "open", "uuid": uuid,
                             "state": session.state})
            return session

    def close_session(self, uuid: str, subscriber: SubscriberChannel = None,
                      reason: str = "client_close"):
        with self._lock:
            session = self.sessions.get(uuid)
            if session is None:
                if subscriber is not None:
                    subscriber.push({"type": "error", "op": "close",
                                     "uuid": uuid, "reason": "not_found"})
                return
            if subscriber is not None:
                if subscriber in session.subscribers:
                    session.subscribers.remove(subscriber)
                    subscriber.push({"type": "ack", "op": "close", "uuid": uuid})
                if session.subscribers:
                    return          # others keep the session alive
                session.subscribers_empty_since = (
                    self.latest_frame.t if self.latest_frame else 0.0)
                return
            self._terminate(session, reason)

    def _terminate(self, session: Session, reason: str):
        session.state = "closing"
        session.push({"type": "session_closed", "uuid": session.uuid,
                      "reason": reason})
        session.ring.clear()
        self.sessions.pop(session.uuid, None)
        self.closed_log.append((session.uuid, reason))

    # -- ticks ----------------------------------------------------------------

    def on_frame(self, frame: EnrichedFrame):
        """One tick: update sessions, dispatch ready windows, GC, roster."""
        arrival = self._clock()
        with self._lock:
            self.latest_frame = frame
            self._frame_count += 1
            ready = []
            for session in list(self.sessions.values()):
                vehicle = frame.by_uuid(session.uuid)
                if vehicle is None:
                    continue
                session.last_seen = frame.t
                vec, mask, slot_ids = extract_neighbors(frame, vehicle.raw_id)
                slot_uuids = [frame.vehicle(rid).uuid if rid is not None else None
                              for rid in slot_ids]
                session.ring.append((frame.t, vec, mask, slot_uuids))
                if session.state == "warming" and len(session.ring) >= N_STEPS:
                    session.state = "active"
                if session.state == "active":
                    try:
                        window = self._window_from_ring(session)
                    except WindowNotReady:
                        continue
                    ready.append((session, window, slot_uuids))
            if ready:
                self._dispatch(ready, arrival)
            closed = self.gc_sessions(frame.t)
            if self._roster_every and self._frame_count % self._roster_every == 0:
                self._broadcast_roster(frame)
            return closed

    def _window_from_ring(self, session: Session) -> ObservationWindow:
        entries = list(session.ring)[-N_STEPS:]
        if len(entries) < N_STEPS:
            raise WindowNotReady("ring not full")
        stamps = np.array([e[0] for e in entries])
        if np.any(np.abs(np.diff(stamps) - STEP_SPACING) > 0.1):
            raise WindowNotReady("frame gap in ring; waiting for fresh history")
        w = ObservationWindow(
            frames=np.stack([e[1] for e in entries]),
            mask=np.stack([e[2] for e in entries]),
            timestamps=stamps, window_id=f"{session.uuid}@{stamps[-1]:.1f}")
        w.validate()
        return w

    # -- inference dispatch -----------------------------------------------------

    def _pick_workers(self):
        order = self._routing.permutation(len(self.workers))
        return [self.workers[i] for i in order]

    def _dispatch(self, ready, arrival: float):
        # sessions may request different explanation settings; one worker
        # call per distinct option set
        groups = {}
        for item in ready:
            key = tuple(sorted(item[0].options.items()))
            groups.setdefault(key, []).append(item)
        for options_key, group in groups.items():
            self._dispatch_group(group, dict(options_key), arrival)

    def _dispatch_group(self, group, options, arrival: float):
        body = {"windows": [w.to_dict() for _, w, _ in group]}
        body.update({k: v for k, v in options.items() if v is not None})
        response = None
        errors = []
        for worker in self._pick_workers()[:2]:
            try:
                status, payload = worker.handle("/predict", body)
            except Exception as e:     # worker died or timed out; retry once
                errors.append(str(e))
                continue
            if status == 200:
                response = payload
                break
            errors.append(payload.get("error", f"status {status}"))
        if response is None:
            for session, w, _ in group:
                session.push({"type": "error", "op": "predict",
                              "uuid": session.uuid,
                              "reason": "; ".join(errors) or "worker_failure"})
            return
        latency_ms = (self._clock() - arrival) * 1e3
        for (session, window, slot_uuids), result in zip(group,
                                                         response["results"]):
            session.predictions += 1
            message = self._prediction_message(session, window, slot_uuids,
                                               result, latency_ms)
            session.push(message)
        self.latencies_ms.append(latency_ms)

    def _prediction_message(self, session, window, slot_uuids, result,
                            latency_ms: float) -> dict:
        top3 = []
        for entry in result["explanation"]["top3"]:
            entry = dict(entry)
            uid = slot_uuids[entry["vehicle_slot"]]
            entry["uuid"] = uid
            top3.append(entry)
        per_vehicle = {}
        per_slot = result["explanation"]["per_slot"]
        for slot, name in enumerate(SLOT_NAMES):
            uid = slot_uuids[slot]
            if uid is not None:
                per_vehicle[uid] = per_slot[name]
        return {
            "type": "prediction",
            "uuid": session.uuid,
            "t": float(window.t),
            "probabilities": result["prediction"]["probabilities"],
            "predicted_class": result["prediction"]["predicted_class"],
            "horizon": result["prediction"]["horizon"],
            "explained_class": result["explained_class"],
            "top3": top3,
            "explanation": {"per_vehicle": per_vehicle, "top3": top3,
                            "per_slot": per_slot},
            "latency_ms": latency_ms,
        }

    # -- housekeeping -----------------------------------------------------------

    def gc_sessions(self, now: float):
        """Close sessions with a long-gone vehicle or abandoned subscribers."""
        closed = []
        with self._lock:
            for session in list(self.sessions.values()):
                if now - session.last_seen > self.ttl:
                    self._terminate(session, "vehicle_departed")
                    closed.append(session.uuid)
                    continue
                if not session.subscribers:
                    since = session.subscribers_empty_since
                    if since is not None and now - since > self.subscriber_grace:
                        self._terminate(session, "no_subscribers")
                        closed.append(session.uuid)
        return closed

    def _broadcast_roster(self, frame: EnrichedFrame):
        roster = {
            "type": "roster",
            "t": frame.t,
            "vehicles": [{
                "uuid": v.uuid, "raw_id": v.raw_id, "lane": v.lane,
                "x": v.features.x, "y": v.features.y,
                "vx": v.features.vx, "vy": v.features.vy,
                "psi": v.features.psi,
                "n_left": v.features.n_left, "n_right": v.features.n_right,
            } for v in frame.vehicles],
        }
        for session in self.sessions.values():
            session.push(roster)
        for ch in self.roster_subscribers:
            ch.push(roster)

    def subscribe_roster(self, channel: SubscriberChannel):
        with self._lock:
            self.roster_subscribers.append(channel)

    def unsubscribe_roster(self, channel: SubscriberChannel):
        with self._lock:
            if channel in self.roster_subscribers:
                self.roster_subscribers.remove(channel)
