import { describe, expect, it } from "vitest";

import { NEUTRAL_COLOR, tintFor } from "../src/palette";
import { renderDriverPerspective, renderScene, renderStats } from "../src/scene";
import {
  applyAction,
  applyConnection,
  applyServerMessage,
  initialState,
} from "../src/state";
import { FRONT, LEFT_FRONT, prediction, Q, REAR, roster } from "./fixtures";

function activeState(nowMs = 1000) {
  let s = applyConnection(initialState(), "open");
  s = applyServerMessage(s, roster(), nowMs);
  s = applyAction(s, { kind: "select", uuid: Q }).state;
  s = applyAction(s, { kind: "start" }).state;
  s = applyServerMessage(s, prediction(10.0), nowMs);
  return s;
}

describe("driver perspective", () => {
  it("centers the query, marks it Q, and places neighbours by geometry", () => {
    const scene = renderDriverPerspective(activeState(), 1100)!;
    expect(scene.kind).toBe("driver_perspective");
    const q = scene.vehicles.find((v) => v.label === "Q")!;
    expect(q.uuid).toBe(Q);
    expect(q.forward).toBe(0);
    expect(q.lateral).toBe(0);
    const front = scene.vehicles.find((v) => v.uuid === FRONT)!;
    expect(front.forward).toBeCloseTo(28);
    expect(front.lateral).toBeCloseTo(0);
    const lf = scene.vehicles.find((v) => v.uuid === LEFT_FRONT)!;
    expect(lf.forward).toBeCloseTo(41);
    expect(lf.lateral).toBeCloseTo(3.5);
  });

  it("tints exactly per the documented palette map", () => {
    const msg = prediction(10.0);
    const scene = renderDriverPerspective(activeState(), 1100)!;
    const front = scene.vehicles.find((v) => v.uuid === FRONT)!;
    expect(front.tint).toBe(tintFor(0.42, "high"));
    expect(front.bucket).toBe("high");
    // rear is not in the top 3: neutral base tint, no bucket invented
    const rear = scene.vehicles.find((v) => v.uuid === REAR)!;
    expect(rear.bucket).toBeNull();
    // rendered relevance values byte-match the driving message
    expect(front.relevance).toEqual(msg.explanation.per_vehicle[FRONT]);
    expect(rear.relevance).toEqual(msg.explanation.per_vehicle[REAR]);
  });

  it("top panel byte-matches the top3 of the driving message", () => {
    const msg = prediction(10.0);
    const scene = renderDriverPerspective(activeState(), 1100)!;
    expect(scene.topPanel.map((e) => [e.slotName, e.superFeature, e.relevance,
                                      e.bucket]))
      .toEqual(msg.top3.map((e) => [e.slot_name, e.super_feature, e.relevance,
                                    e.bucket]));
    expect(scene.topPanel[0].icon).toBe("arrows");
    expect(scene.topPanel[1].icon).toBe("pin");
    expect(scene.topPanel[0].color).toBe(tintFor(0.42, "high"));
  });

  it("uniform low relevance renders all-neutral tints", () => {
    let s = applyConnection(initialState(), "open");
    s = applyServerMessage(s, roster(), 1000);
    s = applyAction(s, { kind: "select", uuid: Q }).state;
    s = applyAction(s, { kind: "start" }).state;
    const msg = prediction(10.0);
    msg.predicted_class = "keep";
    msg.top3 = msg.top3.map((e) => ({ ...e, relevance: 0.004, bucket: "high" as const }));
    for (const k of Object.keys(msg.explanation.per_vehicle)) {
      msg.explanation.per_vehicle[k] = { movement: 0.004, position: 0.004 };
    }
    s = applyServerMessage(s, msg, 1000);
    const scene = renderDriverPerspective(s, 1100)!;
    for (const v of scene.vehicles) {
      if (v.label === "Q") continue;
      expect([NEUTRAL_COLOR, "#cfd8dc"]).toContain(v.tint);
    }
    for (const e of scene.topPanel) {
      expect(e.color).toBe(NEUTRAL_COLOR);
    }
  });

  it("marks the scene stale after two seconds without predictions", () => {
    const s = activeState(1000);
    expect(renderDriverPerspective(s, 2500)!.stale).toBe(false);
    expect(renderDriverPerspective(s, 3100)!.stale).toBe(true);
  });

  it("exits to the roster view when the session closes", () => {
    let s = activeState(1000);
    s = applyServerMessage(
      s, { type: "session_closed", uuid: Q, reason: "vehicle_departed" }, 1200);
    const scene = renderScene(s, 1300);
    expect(scene.kind).toBe("roster");
    expect((scene as { vehicles: unknown[] }).vehicles.length).toBe(4);
  });

  it("renders deterministically from a replayed log", () => {
    const a = JSON.stringify(renderScene(activeState(), 1100));
    const b = JSON.stringify(renderScene(activeState(), 1100));
    expect(a).toBe(b);
  });
});

describe("stats panel", () => {
  it("shows count, probability bars, and latency", () => {
    const stats = renderStats(activeState());
    expect(stats.vehicleCount).toBe(4);
    expect(stats.probabilities).toEqual([0.7, 0.2, 0.1]);
    expect(stats.predictedClass).toBe("left");
    expect(stats.latencyMs).toBeCloseTo(12.5);
    expect(stats.greyed).toBe(false);
  });

  it("greys out on disconnect", () => {
    let s = activeState();
    s = applyConnection(s, "closed");
    const stats = renderStats(s);
    expect(stats.greyed).toBe(true);
    expect(stats.connection).toBe("closed");
  });
});
