/** View state and its reducer.
 *
 * The UI is a pure function of the server message stream plus user actions:
 * both reducers return fresh state objects and never touch the network or
 * the DOM, so a recorded message log replays to the identical state.
 */

import {
  ClassName,
  ClientMessage,
  PredictionMessage,
  RosterMessage,
  ServerMessage,
} from "./protocol";

export type ConnectionStatus = "connecting" | "open" | "closed";
export type SessionPhase = "pending" | "warming" | "active" | "closed";

export const HISTORY_LIMIT = 32;
export const STALE_AFTER_MS = 2000;

export interface Toast {
  text: string;
  atMs: number;
}

export type ExplainTarget = ClassName | "predicted";

export interface ViewState {
  connection: ConnectionStatus;
  roster: RosterMessage | null;
  selectedUuid: string | null;
  explainClass: ExplainTarget;
  sessionPhase: SessionPhase | null;
  latestPrediction: PredictionMessage | null;
  lastPredictionAtMs: number | null;
  history: PredictionMessage[];
  toasts: Toast[];
  droppedMessages: number;
}

export function initialState(): ViewState {
  return {
    connection: "connecting",
    roster: null,
    selectedUuid: null,
    explainClass: "predicted",
    sessionPhase: null,
    latestPrediction: null,
    lastPredictionAtMs: null,
    history: [],
    toasts: [],
    droppedMessages: 0,
  };
}

export function applyConnection(
  state: ViewState,
  status: ConnectionStatus,
): ViewState {
  const next = { ...state, connection: status };
  if (status !== "open" && state.sessionPhase !== null) {
    // the broker forgets us on disconnect; reflect that
    next.sessionPhase = "closed";
  }
  return next;
}

export function applyServerMessage(
  state: ViewState,
  msg: ServerMessage,
  nowMs: number,
): ViewState {
  switch (msg.type) {
    case "roster":
      return { ...state, roster: msg };
    case "prediction": {
      if (msg.uuid !== state.selectedUuid) return state;
      const history = [...state.history, msg].slice(-HISTORY_LIMIT);
      return {
        ...state,
        latestPrediction: msg,
        lastPredictionAtMs: nowMs,
        history,
        sessionPhase: "active",
      };
    }
    case "ack":
      if (msg.uuid !== state.selectedUuid) return state;
      if (msg.op === "open") {
        const phase = msg.state === "active" ? "active" : "warming";
        return { ...state, sessionPhase: phase };
      }
      return state;
    case "session_closed": {
      if (msg.uuid !== state.selectedUuid) return state;
      return {
        ...state,
        sessionPhase: "closed",
        toasts: [...state.toasts, { text: `session closed: ${msg.reason}`, atMs: nowMs }],
      };
    }
    case "error":
      return {
        ...state,
        toasts: [
          ...state.toasts,
          { text: `${msg.op ?? "request"} failed: ${msg.reason}`, atMs: nowMs },
        ],
      };
    case "gap":
      return { ...state, droppedMessages: state.droppedMessages + msg.dropped };
  }
}

export type UserAction =
  | { kind: "select"; uuid: string }
  | { kind: "set_class"; value: ExplainTarget }
  | { kind: "start" }
  | { kind: "stop" };

export interface ActionResult {
  state: ViewState;
  outbound: ClientMessage[];
}

export function applyAction(state: ViewState, action: UserAction): ActionResult {
  switch (action.kind) {
    case "select":
      if (state.sessionPhase === "pending" || state.sessionPhase === "warming"
          || state.sessionPhase === "active") {
        return { state, outbound: [] }; // stop the running session first
      }
      return {
        state: {
          ...state,
          selectedUuid: action.uuid,
          sessionPhase: null,
          latestPrediction: null,
          lastPredictionAtMs: null,
          history: [],
        },
        outbound: [],
      };
    case "set_class": {
      if (state.sessionPhase === "pending" || state.sessionPhase === "warming"
          || state.sessionPhase === "active") {
        return { state, outbound: [] }; // applies to the next session
      }
      return { state: { ...state, explainClass: action.value }, outbound: [] };
    }
    case "start": {
      const controls = controlsView(state);
      if (!controls.canStart || state.selectedUuid === null) {
        return { state, outbound: [] };
      }
      const open: ClientMessage = state.explainClass === "predicted"
        ? { type: "open", uuid: state.selectedUuid }
        : { type: "open", uuid: state.selectedUuid,
            explain_class: state.explainClass };
      return {
        state: { ...state, sessionPhase: "pending" },
        outbound: [open],
      };
    }
    case "stop": {
      if (!controlsView(state).canStop || state.selectedUuid === null) {
        return { state, outbound: [] };
      }
      return {
        state: { ...state, sessionPhase: "closed" },
        outbound: [{ type: "close", uuid: state.selectedUuid }],
      };
    }
  }
}

export interface ControlsView {
  canStart: boolean;
  canStop: boolean;
  reason: string;
}

/** Start is disabled while a session is pending/warming/active. */
export function controlsView(state: ViewState): ControlsView {
  if (state.connection !== "open") {
    return { canStart: false, canStop: false, reason: "disconnected" };
  }
  if (state.selectedUuid === null) {
    return { canStart: false, canStop: false, reason: "select a vehicle" };
  }
  const phase = state.sessionPhase;
  if (phase === "pending" || phase === "warming") {
    return { canStart: false, canStop: true, reason: `session ${phase}` };
  }
  if (phase === "active") {
    return { canStart: false, canStop: true, reason: "session active" };
  }
  return { canStart: true, canStop: false, reason: "ready" };
}

/** Replay a recorded log of (message, timestamp) pairs from scratch. */
export function replayLog(
  entries: Array<{ msg: ServerMessage; atMs: number }>,
  seed: ViewState = initialState(),
): ViewState {
  let state = { ...seed, connection: "open" as ConnectionStatus };
  for (const { msg, atMs } of entries) {
    state = applyServerMessage(state, msg, atMs);
  }
  return state;
}
