import itertools
import json

import numpy as np
import pytest

from xlane.model import init_params
from xlane.service import (Broker, IdentityCache, LiveAdaptor,
                           SubscriberChannel, WorkerCore, assign_uuid,
                           canonical_json)
from xlane.service.protocol import parse_client_message, parse_predict_body
from xlane.twin import Sim, SimConfig
from xlane.twin.sim import Frame, FrameVehicle
from xlane.features import VehicleFeatures

from helpers import realistic_window


def seq_uuid_factory():
    counter = itertools.count()
    return lambda: f"veh-{next(counter):06d}"


class TestIdentityCache:
    def test_same_uuid_within_ttl(self):
        cache = IdentityCache(ttl=5.0, uuid_factory=seq_uuid_factory())
        u1 = assign_uuid(37, 0.0, cache)
        u2 = assign_uuid(37, 1.0, cache)
        assert u1 == u2

    def test_new_uuid_after_ttl(self):
        cache = IdentityCache(ttl=5.0, uuid_factory=seq_uuid_factory())
        u1 = assign_uuid(37, 0.0, cache)
        u2 = assign_uuid(37, 6.0, cache)
        assert u1 != u2

    def test_no_collision_across_cycled_raw_ids(self):
        # >10000 distinct vehicles with raw ids reused in the 1..10000 cycle
        cache = IdentityCache(ttl=5.0, uuid_factory=seq_uuid_factory())
        seen = set()
        t = 0.0
        for vehicle in range(12000):
            raw = vehicle % 10000 + 1
            t += 0.01 if vehicle % 10000 else 60.0   # long gap per cycle wrap
            seen.add(cache.assign(raw, t))
        assert len(seen) == 12000

    def test_snapshot_restore_roundtrip(self, tmp_path):
        path = tmp_path / "cache.json"
        cache = IdentityCache(ttl=5.0, snapshot_path=path,
                              uuid_factory=seq_uuid_factory())
        u1 = cache.assign(3, 10.0)
        u2 = cache.assign(8, 10.5)
        cache.snapshot()
        restored = IdentityCache.restore(path)
        assert restored.assign(3, 11.0) == u1
        assert restored.assign(8, 11.0) == u2
        assert restored.ttl == 5.0


def sim_frames(seconds=20.0, seed=1, spawn_rate=0.8):
    sim = Sim(SimConfig(seed=seed, spawn_rate=spawn_rate))
    return list(sim.frames(seconds))


class TestAdaptor:
    def test_enrichment_stamps_uuids_and_lane_counts(self):
        adaptor = LiveAdaptor(IdentityCache(uuid_factory=seq_uuid_factory()))
        frames = sim_frames(10.0)
        enriched = list(adaptor.adapt(frames))
        assert len(enriched) == len(frames)
        for ef in enriched:
            for v in ef.vehicles:
                assert v.uuid.startswith("veh-")
                assert v.features.n_left == ef.lane_count - 1 - v.lane
                assert v.features.n_right == v.lane

    def test_malformed_frame_dropped_and_counted(self):
        adaptor = LiveAdaptor(IdentityCache(uuid_factory=seq_uuid_factory()))
        good = sim_frames(5.0)
        bad = Frame(t=99.0, lane_count=4, vehicles=[
            FrameVehicle(raw_id=1, lane=2, features=VehicleFeatures(
                vx=float("nan"), vy=0, psi=0, x=0, y=0, n_left=1, n_right=2))])
        out = list(adaptor.adapt(good[:3] + [bad] + good[3:6]))
        assert adaptor.drop_count == 1
        assert len(out) == 6

    def test_empty_frame_passes_through(self):
        adaptor = LiveAdaptor(IdentityCache(uuid_factory=seq_uuid_factory()))
        ef = adaptor.enrich(Frame(t=0.0, lane_count=4, vehicles=[]))
        assert ef is not None and ef.vehicles == []

    def test_restart_with_snapshot_preserves_uuids(self, tmp_path):
        path = tmp_path / "cache.json"
        frames = sim_frames(20.0)
        cut = len(frames) // 2
        a1 = LiveAdaptor(IdentityCache(snapshot_path=path,
                                       uuid_factory=seq_uuid_factory()),
                         snapshot_every=1)
        first = list(a1.adapt(frames[:cut]))
        mapping = {v.raw_id: v.uuid for v in first[-1].vehicles}

        factory = seq_uuid_factory()   # fresh counter: collisions would show
        restored = IdentityCache.restore(path, uuid_factory=factory)
        a2 = LiveAdaptor(restored, snapshot_every=1)
        second = list(a2.adapt(frames[cut:]))
        for v in second[0].vehicles:
            if v.raw_id in mapping:
                assert v.uuid == mapping[v.raw_id]


class TestWorker:
    def setup_method(self):
        self.params = init_params(seed=1, hidden=16)
        self.core = WorkerCore(self.params)
        self.rng = np.random.default_rng(0)

    def window_body(self, **options):
        w = realistic_window(self.rng)
        return {"window": w.to_dict(), **options}

    def test_healthz(self):
        status, body = self.core.handle("/healthz")
        assert status == 200 and body["status"] == "ok"

    def test_predict_deterministic_byte_identical(self):
        body = self.window_body()
        s1, r1 = self.core.handle("/predict", body)
        s2, r2 = self.core.handle("/predict", body)
        assert s1 == s2 == 200
        assert canonical_json(r1) == canonical_json(r2)

    def test_schema_invalid_window_rejected(self):
        status, body = self.core.handle("/predict", {"window": {"frames": [[1]]}})
        assert status == 400
        w = realistic_window(self.rng).to_dict()
        w["frames"] = w["frames"][:3]     # 3-frame window
        status, body = self.core.handle("/predict", {"window": w})
        assert status == 400

    def test_method_ig_honored(self):
        body = self.window_body(method="ig", steps=7)
        status, resp = self.core.handle("/predict", body)
        assert status == 200
        assert resp["method"] == "ig"
        assert resp["sinks"] == {}
        assert len(resp["relevance"]) == 196

    def test_explained_class_default_is_predicted(self):
        status, resp = self.core.handle("/predict", self.window_body())
        assert resp["explained_class"] == resp["prediction"]["predicted_class"]

    def test_batch_request(self):
        w1 = realistic_window(self.rng).to_dict()
        w2 = realistic_window(self.rng).to_dict()
        status, resp = self.core.handle("/predict", {"windows": [w1, w2]})
        assert status == 200 and len(resp["results"]) == 2

    def test_unknown_path(self):
        status, _ = self.core.handle("/nope", {})
        assert status == 404


class FlakyWorker:
    """Fails the first call, then delegates; for retry tests."""

    def __init__(self, core):
        self.core = core
        self.calls = 0

    def handle(self, path, body):
        self.calls += 1
        if self.calls == 1:
            raise TimeoutError("worker died mid-request")
        return self.core.handle(path, body)


def enriched_stream(seconds=30.0, seed=2, spawn_rate=0.8, ttl=5.0):
    adaptor = LiveAdaptor(IdentityCache(ttl=ttl,
                                        uuid_factory=seq_uuid_factory()))
    return [adaptor.enrich(f) for f in sim_frames(seconds, seed, spawn_rate)]


class TestBroker:
    def make_broker(self, n_workers=2, **kw):
        params = init_params(seed=1, hidden=16)
        workers = [WorkerCore(params, worker_id=f"w{i}")
                   for i in range(n_workers)]
        return Broker(workers, **kw)

    def pick_longlived_uuid(self, frames, start=4, span=12):
        for s in range(start, max(start + 1, len(frames) - span)):
            counts = {}
            for f in frames[s:s + span]:
                for v in f.vehicles:
                    counts[v.uuid] = counts.get(v.uuid, 0) + 1
            for u, c in counts.items():
                if c == span:
                    return s, u
        raise AssertionError("no long-lived vehicle found")

    def test_warming_three_frames_then_one_prediction_per_frame(self):
        frames = enriched_stream()
        broker = self.make_broker()
        start, uuid = self.pick_longlived_uuid(frames)
        channel = SubscriberChannel()
        broker.on_frame(frames[start])
        broker.open_session(uuid, channel, {})
        for f in frames[start + 1:start + 1 + 8]:
            broker.on_frame(f)
        msgs = channel.drain()
        preds = [m for m in msgs if m["type"] == "prediction"]
        # the first three frames after open warm the ring; the 4th new frame
        # triggers the first prediction, then one per frame
        assert len(preds) == 8 - 3
        ts = [m["t"] for m in preds]
        assert ts == sorted(ts)
        assert all(m["uuid"] == uuid for m in preds)

    def test_unknown_uuid_not_found(self):
        frames = enriched_stream(5.0)
        broker = self.make_broker()
        broker.on_frame(frames[0])
        channel = SubscriberChannel()
        broker.open_session("nope", channel, {})
        msgs = channel.drain()
        assert msgs and msgs[0]["type"] == "error"
        assert msgs[0]["reason"] == "not_found"

    def test_duplicate_open_attaches_second_subscriber(self):
        frames = enriched_stream()
        broker = self.make_broker()
        start, uuid = self.pick_longlived_uuid(frames)
        c1, c2 = SubscriberChannel(), SubscriberChannel()
        broker.on_frame(frames[start])
        broker.open_session(uuid, c1, {})
        broker.open_session(uuid, c2, {})
        assert len(broker.sessions) == 1
        for f in frames[start + 1:start + 7]:
            broker.on_frame(f)
        p1 = [m for m in c1.drain() if m["type"] == "prediction"]
        p2 = [m for m in c2.drain() if m["type"] == "prediction"]
        assert len(p1) == len(p2) > 0
        # one subscriber closing keeps the session for the other
        broker.close_session(uuid, c1)
        assert uuid in broker.sessions
        broker.on_frame(frames[start + 7])
        assert [m for m in c2.drain() if m["type"] == "prediction"]

    def test_session_auto_terminates_after_departure(self):
        frames = enriched_stream(60.0, spawn_rate=0.5)
        broker = self.make_broker(ttl=5.0)
        # vehicle alive early then gone before the stream ends
        start, uuid = self.pick_longlived_uuid(frames, start=2, span=8)
        channel = SubscriberChannel()
        broker.on_frame(frames[start])
        broker.open_session(uuid, channel, {})
        departed_at = None
        for f in frames[start + 1:]:
            broker.on_frame(f)
            if departed_at is None and f.by_uuid(uuid) is None:
                departed_at = f.t
            if uuid not in broker.sessions:
                closed_at = f.t
                break
        else:
            pytest.fail("session never closed")
        msgs = channel.drain()
        assert any(m["type"] == "session_closed"
                   and m["reason"] == "vehicle_departed" for m in msgs)
        assert closed_at - departed_at <= 5.0 + 0.5 + 1e-9

    def test_gc_closes_abandoned_sessions(self):
        frames = enriched_stream()
        broker = self.make_broker(subscriber_grace=1.0)
        start, uuid = self.pick_longlived_uuid(frames)
        channel = SubscriberChannel()
        broker.on_frame(frames[start])
        broker.open_session(uuid, channel, {})
        broker.close_session(uuid, channel)    # last subscriber leaves
        assert uuid in broker.sessions
        for f in frames[start + 1:start + 5]:
            broker.on_frame(f)
        assert uuid not in broker.sessions
        assert ("no_subscribers" in [r for _, r in broker.closed_log])

    def test_statelessness_routing_shuffle_byte_equality(self):
        frames = enriched_stream()
        start, uuid = self.pick_longlived_uuid(frames)
        payloads = []
        for routing_seed in (0, 1, 2):
            broker = self.make_broker(n_workers=4, routing_seed=routing_seed)
            channel = SubscriberChannel(maxlen=256)
            broker.on_frame(frames[start])
            broker.open_session(uuid, channel, {})
            for f in frames[start + 1:start + 9]:
                broker.on_frame(f)
            preds = [m for m in channel.drain() if m["type"] == "prediction"]
            stripped = [{k: v for k, v in m.items() if k != "latency_ms"}
                        for m in preds]
            payloads.append(canonical_json(stripped))
        assert payloads[0] == payloads[1] == payloads[2]

    def test_worker_failure_retries_once_and_succeeds(self):
        frames = enriched_stream()
        start, uuid = self.pick_longlived_uuid(frames)
        params = init_params(seed=1, hidden=16)
        flaky = FlakyWorker(WorkerCore(params))
        healthy = WorkerCore(params)
        broker = Broker([flaky, healthy], routing_seed=3)
        channel = SubscriberChannel()
        broker.on_frame(frames[start])
        broker.open_session(uuid, channel, {})
        for f in frames[start + 1:start + 6]:
            broker.on_frame(f)
        msgs = channel.drain()
        preds = [m for m in msgs if m["type"] == "prediction"]
        errors = [m for m in msgs if m["type"] == "error"]
        assert len(preds) >= 1
        assert not errors
        # exactly one result per frame despite the mid-request failure
        assert len(preds) == len({m["t"] for m in preds})

    def test_backpressure_drop_oldest_with_gap_notice(self):
        channel = SubscriberChannel(maxlen=4)
        for i in range(10):
            channel.push({"type": "prediction", "seq": i})
        first = channel.pop(timeout=0)
        assert first["type"] == "gap" and first["dropped"] == 6
        rest = channel.drain()
        assert [m["seq"] for m in rest] == [6, 7, 8, 9]

    def test_roster_broadcast(self):
        frames = enriched_stream(10.0)
        broker = self.make_broker()
        channel = SubscriberChannel(maxlen=256)
        broker.subscribe_roster(channel)
        for f in frames[:6]:
            broker.on_frame(f)
        rosters = [m for m in channel.drain() if m["type"] == "roster"]
        assert len(rosters) == 6
        assert all("vehicles" in r for r in rosters)
        assert rosters[-1]["vehicles"] == [
            {"uuid": v.uuid, "raw_id": v.raw_id, "lane": v.lane,
             "x": v.features.x, "y": v.features.y, "vx": v.features.vx,
             "vy": v.features.vy, "psi": v.features.psi,
             "n_left": v.features.n_left, "n_right": v.features.n_right}
            for v in frames[5].vehicles]


class TestProtocol:
    def test_parse_client_messages(self):
        msg = parse_client_message('{"type": "open", "uuid": "abc"}')
        assert msg == {"type": "open", "uuid": "abc", "method": "lrp-omega"}
        with pytest.raises(Exception):
            parse_client_message('{"type": "open"}')
        with pytest.raises(Exception):
            parse_client_message("not json")

    def test_parse_predict_body_rules(self):
        rng = np.random.default_rng(1)
        w = realistic_window(rng).to_dict()
        windows, options, batched = parse_predict_body({"window": w})
        assert not batched and len(windows) == 1
        windows, options, batched = parse_predict_body({"windows": [w, w]})
        assert batched and len(windows) == 2
        with pytest.raises(Exception):
            parse_predict_body({"window": w, "windows": [w]})
        with pytest.raises(Exception):
            parse_predict_body({})


class TestHttpSurfaces:
    def test_worker_app_endpoints(self):
        from fastapi.testclient import TestClient
        from xlane.service.worker import build_worker_app

        params = init_params(seed=1, hidden=16)
        app = build_worker_app(WorkerCore(params))
        client = TestClient(app)
        assert client.get("/healthz").status_code == 200
        w = realistic_window(np.random.default_rng(0)).to_dict()
        r = client.post("/predict", json={"window": w})
        assert r.status_code == 200
        body = r.json()
        assert len(body["relevance"]) == 196
        assert body["prediction"]["predicted_class"] in ("left", "keep", "right")
        r = client.post("/predict", json={"window": {"frames": []}})
        assert r.status_code == 400

    def test_service_app_websocket_roundtrip(self, tmp_path):
        from fastapi.testclient import TestClient
        from xlane.service.serve import ServiceRuntime, build_app
        from xlane.twin.replay import write_frames

        sim = Sim(SimConfig(seed=5, spawn_rate=0.8))
        frames = list(sim.frames(20.0))
        path = tmp_path / "stream.frames"
        write_frames(path, frames)

        params = init_params(seed=1, hidden=16)
        runtime = ServiceRuntime(params, str(path), workers=2, speed=None)
        app = build_app(runtime)
        client = TestClient(app)

        # pick a vehicle that exists for a while
        adaptor_probe = LiveAdaptor(IdentityCache(uuid_factory=seq_uuid_factory()))
        probe = [adaptor_probe.enrich(f) for f in frames]
        target_raw = None
        for raw in probe[4].ids():
            if all(raw in p.ids() for p in probe[4:16]):
                target_raw = raw
                break
        assert target_raw is not None

        runtime.start()
        import time as _t
        _t.sleep(0.3)   # let the pump finish (speed=None -> fast)
        assert client.get("/healthz").json()["status"] == "ok"

        # websocket: roster arrives; open on an unknown uuid errors
        runtime2 = ServiceRuntime(params, str(path), workers=1, speed=8.0)
        app2 = build_app(runtime2)
        client2 = TestClient(app2)
        with client2.websocket_connect("/ws") as ws:
            runtime2.start()
            roster = None
            for _ in range(40):
                msg = json.loads(ws.receive_text())
                if msg["type"] == "roster" and msg["vehicles"]:
                    roster = msg
                    break
            assert roster is not None
            uuid = roster["vehicles"][0]["uuid"]
            ws.send_text(json.dumps({"type": "open", "uuid": uuid}))
            got_ack = got_pred = False
            for _ in range(200):
                msg = json.loads(ws.receive_text())
                if msg["type"] == "ack":
                    got_ack = True
                if msg["type"] == "prediction":
                    got_pred = True
                    assert msg["uuid"] == uuid
                    assert len(msg["probabilities"]) == 3
                    break
            assert got_ack and got_pred
            ws.send_text(json.dumps({"type": "close", "uuid": uuid}))
        runtime2.stop()
        runtime.stop()
