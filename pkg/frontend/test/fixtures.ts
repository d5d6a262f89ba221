/** Canned broker messages used by the unit tests. */

import {
  PredictionMessage,
  RosterMessage,
  ServerMessage,
} from "../src/protocol";

export const Q = "q-uuid-0001";
export const FRONT = "front-0002";
export const LEFT_FRONT = "lf-0003";
export const REAR = "rear-0004";

export function roster(t = 10.0): RosterMessage {
  const mk = (uuid: string, lane: number, x: number, y: number) => ({
    uuid, raw_id: 1, lane, x, y, vx: 30, vy: 0, psi: 0,
    n_left: 3 - lane, n_right: lane,
  });
  return {
    type: "roster",
    t,
    vehicles: [
      mk(Q, 1, 200, 5.25),
      mk(FRONT, 1, 228, 5.25),
      mk(LEFT_FRONT, 2, 241, 8.75),
      mk(REAR, 1, 183, 5.25),
    ],
  };
}

export function prediction(t = 10.0): PredictionMessage {
  return {
    type: "prediction",
    uuid: Q,
    t,
    probabilities: [0.7, 0.2, 0.1],
    predicted_class: "left",
    horizon: 2.5,
    explained_class: "left",
    top3: [
      { vehicle_slot: 1, slot_name: "front", super_feature: "movement",
        relevance: 0.42, bucket: "high", uuid: FRONT },
      { vehicle_slot: 6, slot_name: "query", super_feature: "position",
        relevance: -0.31, bucket: "medium", uuid: Q },
      { vehicle_slot: 0, slot_name: "left_front", super_feature: "position",
        relevance: 0.11, bucket: "low", uuid: LEFT_FRONT },
    ],
    explanation: {
      per_vehicle: {
        [Q]: { movement: 0.05, position: -0.31 },
        [FRONT]: { movement: 0.42, position: 0.02 },
        [LEFT_FRONT]: { movement: 0.01, position: 0.11 },
        [REAR]: { movement: 0.001, position: -0.002 },
      },
      per_slot: {
        left_front: { movement: 0.01, position: 0.11 },
        front: { movement: 0.42, position: 0.02 },
        right_front: { movement: 0, position: 0 },
        left_rear: { movement: 0, position: 0 },
        rear: { movement: 0.001, position: -0.002 },
        right_rear: { movement: 0, position: 0 },
        query: { movement: 0.05, position: -0.31 },
      },
      top3: [],
    },
    latency_ms: 12.5,
  };
}

export function log(entries: Array<[ServerMessage, number]>) {
  return entries.map(([msg, atMs]) => ({ msg, atMs }));
}
