/** Wire types of the broker client channel (see the service README). */

export type ClassName = "left" | "keep" | "right";
export type SuperFeature = "movement" | "position";
export type Bucket = "low" | "medium" | "high";

export interface TopEntry {
  vehicle_slot: number;
  slot_name: string;
  super_feature: SuperFeature;
  relevance: number;
  bucket: Bucket;
  uuid: string | null;
}

export interface RosterVehicle {
  uuid: string;
  raw_id: number;
  lane: number;
  x: number;
  y: number;
  vx: number;
  vy: number;
  psi: number;
  n_left: number;
  n_right: number;
}

export interface RosterMessage {
  type: "roster";
  t: number;
  vehicles: RosterVehicle[];
}

export interface PredictionMessage {
  type: "prediction";
  uuid: string;
  t: number;
  probabilities: number[];
  predicted_class: ClassName;
  horizon: number;
  explained_class: ClassName;
  top3: TopEntry[];
  explanation: {
    per_vehicle: Record<string, { movement: number; position: number }>;
    per_slot: Record<string, { movement: number; position: number }>;
    top3: TopEntry[];
  };
  latency_ms: number;
}

export interface SessionClosedMessage {
  type: "session_closed";
  uuid: string;
  reason: string;
}

export interface AckMessage {
  type: "ack";
  op: "open" | "close";
  uuid: string;
  state?: "warming" | "active" | "closing";
}

export interface ErrorMessage {
  type: "error";
  op?: string;
  uuid?: string;
  reason: string;
}

export interface GapMessage {
  type: "gap";
  dropped: number;
}

export type ServerMessage =
  | RosterMessage
  | PredictionMessage
  | SessionClosedMessage
  | AckMessage
  | ErrorMessage
  | GapMessage;

export interface OpenMessage {
  type: "open";
  uuid: string;
  method?: "lrp-omega" | "lrp-identity" | "ig";
  explain_class?: ClassName | "predicted";
}

export interface CloseMessage {
  type: "close";
  uuid: string;
}

export type ClientMessage = OpenMessage | CloseMessage;

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const type = (data as { type?: unknown }).type;
  if (
    type === "roster" ||
    type === "prediction" ||
    type === "session_closed" ||
    type === "ack" ||
    type === "error" ||
    type === "gap"
  ) {
    return data as ServerMessage;
  }
  return null;
}
