/** Deterministic scene graphs for the driver perspective and the stats
 * panel. Scenes are plain serializable data; the DOM layer only draws them.
 *
 * Every relevance value placed in a scene is taken verbatim from a received
 * message; tinting applies only the documented palette map.
 */

import {
  BASE_VEHICLE_COLOR,
  ICON_GLYPHS,
  QUERY_COLOR,
  iconFor,
  tintFor,
} from "./palette";
import { PredictionMessage, RosterVehicle, TopEntry } from "./protocol";
import { STALE_AFTER_MS, ViewState } from "./state";

export interface SceneVehicle {
  uuid: string;
  label: string;            // "Q" for the query vehicle
  forward: number;          // metres ahead of the query (negative = behind)
  lateral: number;          // metres to the left of the query
  lane: number;
  tint: string;
  relevance: { movement: number; position: number } | null;
  bucket: string | null;    // server-sent bucket when the vehicle is in the top 3
}

export interface TopPanelEntry {
  rank: number;
  slotName: string;
  superFeature: "movement" | "position";
  icon: "arrows" | "pin";
  glyph: string;
  color: string;
  relevance: number;
  bucket: string;
  uuid: string | null;
}

export interface DriverScene {
  kind: "driver_perspective";
  uuid: string;
  t: number;
  predictedClass: string;
  probabilities: number[];
  stale: boolean;
  vehicles: SceneVehicle[];
  topPanel: TopPanelEntry[];
}

export interface RosterScene {
  kind: "roster";
  vehicles: RosterVehicle[];
}

export type Scene = DriverScene | RosterScene;

function bestTopEntry(uuid: string, top3: TopEntry[]): TopEntry | null {
  for (const entry of top3) {
    if (entry.uuid === uuid) return entry; // top3 is rank-ordered
  }
  return null;
}

export function topPanel(msg: PredictionMessage): TopPanelEntry[] {
  return msg.top3.map((entry, i) => ({
    rank: i + 1,
    slotName: entry.slot_name,
    superFeature: entry.super_feature,
    icon: iconFor(entry.super_feature),
    glyph: ICON_GLYPHS[iconFor(entry.super_feature)],
    color: tintFor(entry.relevance, entry.bucket),
    relevance: entry.relevance,
    bucket: entry.bucket,
    uuid: entry.uuid,
  }));
}

/** The "jump in" view: query centered and marked Q, neighbours placed by
 * their roster geometry relative to it and tinted by their top-3 bucket
 * (neutral otherwise). Null when no session output is available, in which
 * case the caller shows the roster. */
export function renderDriverPerspective(
  state: ViewState,
  nowMs: number,
): DriverScene | null {
  const msg = state.latestPrediction;
  if (msg === null || state.sessionPhase === "closed" || state.sessionPhase === null) {
    return null;
  }
  const roster = state.roster;
  const query = roster?.vehicles.find((v) => v.uuid === msg.uuid);
  const vehicles: SceneVehicle[] = [];
  if (query) {
    vehicles.push({
      uuid: query.uuid,
      label: "Q",
      forward: 0,
      lateral: 0,
      lane: query.lane,
      tint: QUERY_COLOR,
      relevance: msg.explanation.per_vehicle[query.uuid] ?? null,
      bucket: null,
    });
    for (const v of roster!.vehicles) {
      if (v.uuid === query.uuid) continue;
      const rel = msg.explanation.per_vehicle[v.uuid];
      if (rel === undefined) continue; // not one of the six window slots
      const top = bestTopEntry(v.uuid, msg.top3);
      vehicles.push({
        uuid: v.uuid,
        label: "",
        forward: v.x - query.x,
        lateral: v.y - query.y,
        lane: v.lane,
        tint: top ? tintFor(top.relevance, top.bucket) : BASE_VEHICLE_COLOR,
        relevance: rel,
        bucket: top ? top.bucket : null,
      });
    }
  }
  const stale =
    state.lastPredictionAtMs !== null &&
    nowMs - state.lastPredictionAtMs > STALE_AFTER_MS;
  return {
    kind: "driver_perspective",
    uuid: msg.uuid,
    t: msg.t,
    predictedClass: msg.predicted_class,
    probabilities: msg.probabilities,
    stale,
    vehicles,
    topPanel: topPanel(msg),
  };
}

export function renderScene(state: ViewState, nowMs: number): Scene {
  const driver = renderDriverPerspective(state, nowMs);
  if (driver) return driver;
  return { kind: "roster", vehicles: state.roster?.vehicles ?? [] };
}

export interface StatsView {
  connection: string;
  greyed: boolean;
  vehicleCount: number;
  probabilities: number[] | null;
  predictedClass: string | null;
  latencyMs: number | null;
  droppedMessages: number;
}

/** Real-time stats: road population, class probabilities, latency. */
export function renderStats(state: ViewState): StatsView {
  const msg = state.latestPrediction;
  return {
    connection: state.connection,
    greyed: state.connection !== "open",
    vehicleCount: state.roster?.vehicles.length ?? 0,
    probabilities: msg?.probabilities ?? null,
    predictedClass: msg?.predicted_class ?? null,
    latencyMs: msg?.latency_ms ?? null,
    droppedMessages: state.droppedMessages,
  };
}
