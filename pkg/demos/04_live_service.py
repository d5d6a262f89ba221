"""Drive the live prediction service in-process.

A recorded frame stream flows through the adaptor (uuid stamping) into the
session broker; we open a prediction session on one vehicle and print the
rolling predictions with their top-3 explanations, then watch the broker
garbage-collect the session when the vehicle leaves.
"""

import pathlib

from xlane.model import load_model
from xlane.service import (Broker, IdentityCache, LiveAdaptor,
                           SubscriberChannel, WorkerCore)
from xlane.twin import Sim, SimConfig

ART = pathlib.Path(__file__).parent / "_artifacts"
params = load_model(ART / "demo_model.xlm")

sim = Sim(SimConfig(seed=12, spawn_rate=0.7))
frames = list(sim.frames(60.0))
adaptor = LiveAdaptor(IdentityCache(ttl=5.0))
enriched = [adaptor.enrich(f) for f in frames]

broker = Broker([WorkerCore(params, "w0"), WorkerCore(params, "w1")], ttl=5.0)

# first vehicle that stays around for at least 10 s
target = None
for v in enriched[8].vehicles:
    if all(e.by_uuid(v.uuid) is not None for e in enriched[8:28]):
        target = v.uuid
        break
assert target, "no long-lived vehicle in this recording"
print(f"opening a prediction session on {target[:13]}...")

channel = SubscriberChannel(maxlen=256)
broker.on_frame(enriched[8])
broker.open_session(target, channel, {})

for e in enriched[9:]:
    broker.on_frame(e)
    for msg in channel.drain():
        if msg["type"] == "prediction":
            tops = ", ".join(f"{t['slot_name']}/{t['super_feature']}"
                             f"[{t['bucket']}]" for t in msg["top3"])
            probs = " ".join(f"{p:.2f}" for p in msg["probabilities"])
            print(f"t={msg['t']:6.1f}  {msg['predicted_class']:5s} "
                  f"p=[{probs}]  {msg['latency_ms']:5.1f} ms  top3: {tops}")
        elif msg["type"] == "session_closed":
            print(f"t={e.t:6.1f}  session closed: {msg['reason']}")
    if target not in broker.sessions:
        break

print(f"\nadaptor drops: {adaptor.drop_count}; "
      f"sessions closed: {broker.closed_log}")
print("the same broker speaks websockets via `xlane serve`")
