// Operator console wiring: sliders and keys drive synthetic muscle
// activation; the chart, hand view and metrics panel render telemetry.

import { ConsoleClient } from "./client.js";
import { TrackingChart } from "./chart.js";
import { HandView } from "./hand.js";
import {
  FINGER_NAMES,
  setGains,
  startSession,
  stopSession,
  type ServerMsg,
} from "./protocol.js";
import { ConsoleState, metricsPanelText } from "./state.js";

const state = new ConsoleState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const statusEl = el<HTMLSpanElement>("status");
const errorEl = el<HTMLSpanElement>("last-error");
const metricsEl = el<HTMLDivElement>("metrics");
const chart = new TrackingChart(el<HTMLCanvasElement>("chart"));
const hand = new HandView(el<HTMLDivElement>("hand"));

const url = `ws://${location.host}/ws`;
const client = new ConsoleClient(url, {
  onMessage: (msg: ServerMsg) => {
    state.apply(msg);
    if (msg.type === "session_result") {
      metricsEl.textContent = metricsPanelText(msg.metrics);
      el<HTMLButtonElement>("download").disabled = false;
    }
  },
  onStatus: (s) => {
    statusEl.textContent = s;
    statusEl.className = `status-${s}`;
    if (s === "connected") state.onReconnect();
  },
});

// -- sliders and keyboard -----------------------------------------------------

const sliders: HTMLInputElement[] = [];
const sliderBox = el<HTMLDivElement>("sliders");
const sliderValues = new Array(5).fill(0);

function pushActivation() {
  client.sendActivation(sliderValues.slice());
}

FINGER_NAMES.forEach((name, j) => {
  const wrap = document.createElement("div");
  wrap.className = "slider-row";
  wrap.innerHTML = `<label>${name}</label>
    <input type="range" min="-1" max="1" step="0.01" value="0" id="slider-${j}">
    <span id="slider-val-${j}">0.00</span>`;
  sliderBox.appendChild(wrap);
  const input = wrap.querySelector("input") as HTMLInputElement;
  input.addEventListener("input", () => {
    sliderValues[j] = parseFloat(input.value);
    (wrap.querySelector("span") as HTMLElement).textContent =
      sliderValues[j].toFixed(2);
    pushActivation();
  });
  sliders.push(input);
});

// hold a key to flex (+) or extend (-): q/a w/s e/d r/f t/g, little -> thumb
const KEY_BINDINGS: Record<string, [number, number]> = {
  q: [0, 1], a: [0, -1],
  w: [1, 1], s: [1, -1],
  e: [2, 1], d: [2, -1],
  r: [3, 1], f: [3, -1],
  t: [4, 1], g: [4, -1],
};

function setFromKey(finger: number, value: number) {
  sliderValues[finger] = value;
  sliders[finger].value = String(value);
  el<HTMLSpanElement>(`slider-val-${finger}`).textContent = value.toFixed(2);
  pushActivation();
}

window.addEventListener("keydown", (ev) => {
  const bind = KEY_BINDINGS[ev.key];
  if (bind && !ev.repeat) setFromKey(bind[0], bind[1]);
});
window.addEventListener("keyup", (ev) => {
  const bind = KEY_BINDINGS[ev.key];
  if (bind) setFromKey(bind[0], 0);
});

// -- gains and session controls -------------------------------------------------

el<HTMLButtonElement>("apply-gains").addEventListener("click", () => {
  client.sendControl(
    setGains(
      parseFloat(el<HTMLInputElement>("k-alpha").value),
      parseFloat(el<HTMLInputElement>("k-force").value),
    ),
  );
});

const fingerSelect = el<HTMLSelectElement>("finger-select");
FINGER_NAMES.forEach((name, j) => {
  const opt = document.createElement("option");
  opt.value = String(j);
  opt.textContent = name;
  if (j === state.selectedFinger) opt.selected = true;
  fingerSelect.appendChild(opt);
});
fingerSelect.addEventListener("change", () => {
  state.selectFinger(parseInt(fingerSelect.value, 10));
});

el<HTMLButtonElement>("session-start").addEventListener("click", () => {
  const freq = parseFloat(el<HTMLInputElement>("session-freq").value);
  client.sendControl(startSession(freq, FINGER_NAMES[state.selectedFinger]));
  metricsEl.textContent = "session running…";
});

el<HTMLButtonElement>("session-stop").addEventListener("click", () => {
  client.sendControl(stopSession());
});

el<HTMLButtonElement>("download").addEventListener("click", () => {
  const blob = new Blob([state.sessionRecord()], { type: "application/json" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "tracking_session.json";
  a.click();
  URL.revokeObjectURL(a.href);
});

// -- render loop -----------------------------------------------------------------

function render() {
  chart.draw(state.points);
  if (state.lastTick) {
    hand.update(state.lastTick.angles, state.lastTick.labels);
    el<HTMLSpanElement>("seq").textContent =
      `tick ${state.lastTick.seq} (t=${state.lastTick.t.toFixed(2)}s)`;
  }
  if (state.lastError) errorEl.textContent = state.lastError;
  requestAnimationFrame(render);
}

client.connect();
requestAnimationFrame(render);
