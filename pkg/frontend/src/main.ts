/** Application entry point: connect, reduce, draw. */

import { BrokerClient } from "./client";
import { drawControls, drawScene, drawStats, drawToasts } from "./dom";
import { renderScene, renderStats } from "./scene";
import {
  applyAction,
  applyConnection,
  applyServerMessage,
  initialState,
  UserAction,
  ViewState,
} from "./state";

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/ws`;
}

let state: ViewState = initialState();

const sceneBox = document.getElementById("scene")!;
const statsBox = document.getElementById("stats")!;
const controlsBox = document.getElementById("controls")!;
const toastBox = document.getElementById("toasts")!;

const client = new BrokerClient(
  wsUrl(),
  {
    onMessage(msg) {
      state = applyServerMessage(state, msg, Date.now());
      draw();
    },
    onStatus(status) {
      state = applyConnection(state, status);
      draw();
    },
  },
  (url) => new WebSocket(url),
);

function dispatch(action: UserAction): void {
  const result = applyAction(state, action);
  state = result.state;
  for (const msg of result.outbound) client.send(msg);
  draw();
}

function draw(): void {
  const now = Date.now();
  drawScene(sceneBox, renderScene(state, now), state,
            (uuid) => dispatch({ kind: "select", uuid }));
  drawStats(statsBox, renderStats(state));
  drawControls(controlsBox, state,
               () => dispatch({ kind: "start" }),
               () => dispatch({ kind: "stop" }),
               (value) => dispatch({ kind: "set_class",
                                     value: value as never }));
  drawToasts(toastBox, state, now);
}

client.connect();
setInterval(draw, 500);   // staleness badge and toast expiry need a clock
