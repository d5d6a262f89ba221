/** Thin DOM layer: draws scene graphs and stats into containers.
 *
 * All decisions live in scene.ts/state.ts; this file only positions boxes
 * and writes text, so everything interesting stays unit-testable without a
 * browser.
 */

import { Scene, StatsView, TopPanelEntry } from "./scene";
import { ViewState, controlsView } from "./state";

const PX_PER_M_LATERAL = 14;
const PX_PER_M_FORWARD = 3.2;

function el(tag: string, className: string, text = ""): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function drawScene(
  container: HTMLElement,
  scene: Scene,
  state: ViewState,
  onSelect: (uuid: string) => void,
): void {
  container.replaceChildren();
  if (scene.kind === "roster") {
    const list = el("div", "roster-list");
    list.appendChild(el("div", "roster-title",
      `live vehicles (${scene.vehicles.length}) - pick one to jump in`));
    for (const v of scene.vehicles) {
      const row = el("button", "roster-row");
      row.textContent = `${v.uuid.slice(0, 8)}  lane ${v.lane}  ` +
        `x=${v.x.toFixed(0)}m  v=${(v.vx * 3.6).toFixed(0)}km/h`;
      if (state.selectedUuid === v.uuid) row.classList.add("selected");
      row.addEventListener("click", () => onSelect(v.uuid));
      list.appendChild(row);
    }
    container.appendChild(list);
    return;
  }

  const road = el("div", "road");
  const cx = container.clientWidth / 2 || 240;
  const cy = (container.clientHeight || 420) * 0.58;
  for (const v of scene.vehicles) {
    const box = el("div", "vehicle", v.label);
    box.style.background = v.tint;
    box.style.left = `${cx - v.lateral * PX_PER_M_LATERAL - 14}px`;
    box.style.top = `${cy - v.forward * PX_PER_M_FORWARD - 22}px`;
    if (v.label === "Q") box.classList.add("query");
    if (v.relevance) {
      box.title = `movement ${v.relevance.movement.toFixed(3)}, ` +
        `position ${v.relevance.position.toFixed(3)}`;
    }
    road.appendChild(box);
  }
  const caption = el("div", "caption",
    `${scene.uuid.slice(0, 8)}  t=${scene.t.toFixed(1)}s  ` +
    `prediction: ${scene.predictedClass}`);
  if (scene.stale) {
    const badge = el("span", "stale-badge", "STALE");
    caption.appendChild(badge);
  }
  container.appendChild(caption);
  container.appendChild(road);
  container.appendChild(drawTopPanel(scene.topPanel));
}

function drawTopPanel(entries: TopPanelEntry[]): HTMLElement {
  const panel = el("div", "top-panel");
  panel.appendChild(el("div", "panel-title", "most relevant super-features"));
  for (const e of entries) {
    const row = el("div", "top-row");
    const swatch = el("span", "swatch", e.glyph);
    swatch.style.background = e.color;
    row.appendChild(swatch);
    row.appendChild(el("span", "top-text",
      `${e.rank}. ${e.slotName} ${e.superFeature} ` +
      `(${e.relevance >= 0 ? "+" : ""}${e.relevance.toFixed(3)}, ${e.bucket})`));
    panel.appendChild(row);
  }
  return panel;
}

export function drawStats(container: HTMLElement, stats: StatsView): void {
  container.replaceChildren();
  container.classList.toggle("greyed", stats.greyed);
  container.appendChild(el("div", "stat",
    `connection: ${stats.connection}` +
    (stats.droppedMessages ? ` (dropped ${stats.droppedMessages})` : "")));
  container.appendChild(el("div", "stat", `vehicles on road: ${stats.vehicleCount}`));
  if (stats.probabilities) {
    const bars = el("div", "prob-bars");
    const names = ["left", "keep", "right"];
    stats.probabilities.forEach((p, i) => {
      const row = el("div", "prob-row");
      row.appendChild(el("span", "prob-name", names[i]));
      const track = el("span", "prob-track");
      const fill = el("span", "prob-fill");
      fill.style.width = `${(p * 100).toFixed(1)}%`;
      if (names[i] === stats.predictedClass) fill.classList.add("winner");
      track.appendChild(fill);
      row.appendChild(track);
      row.appendChild(el("span", "prob-val", p.toFixed(2)));
      bars.appendChild(row);
    });
    container.appendChild(bars);
  }
  if (stats.latencyMs !== null) {
    container.appendChild(el("div", "stat",
      `prediction latency: ${stats.latencyMs.toFixed(1)} ms`));
  }
}

export function drawControls(
  container: HTMLElement,
  state: ViewState,
  onStart: () => void,
  onStop: () => void,
  onClass: (value: string) => void,
): void {
  container.replaceChildren();
  const view = controlsView(state);
  const start = el("button", "ctl start", "start predictions") as HTMLButtonElement;
  const stop = el("button", "ctl stop", "stop") as HTMLButtonElement;
  start.disabled = !view.canStart;
  stop.disabled = !view.canStop;
  start.addEventListener("click", onStart);
  stop.addEventListener("click", onStop);
  const select = document.createElement("select");
  select.className = "ctl-class";
  for (const value of ["predicted", "left", "keep", "right"]) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = value === "predicted" ? "explain: predicted" : `explain: ${value}`;
    opt.selected = state.explainClass === value;
    select.appendChild(opt);
  }
  select.disabled = !view.canStart;   // applies to the next session
  select.addEventListener("change", () => onClass(select.value));
  container.appendChild(start);
  container.appendChild(stop);
  container.appendChild(select);
  container.appendChild(el("span", "ctl-reason", view.reason));
}

export function drawToasts(container: HTMLElement, state: ViewState,
                           nowMs: number): void {
  container.replaceChildren();
  for (const toast of state.toasts.slice(-3)) {
    if (nowMs - toast.atMs < 6000) {
      container.appendChild(el("div", "toast", toast.text));
    }
  }
}
