// Entry point: bind the view state to the URL, compose the panels, fetch.

import { ApiClient } from "./api.js";
import {
  EventsPanel,
  HealthPanel,
  InclinationPanel,
  IndicatorPanel,
  MaximaPanel,
  Panel,
  ScatterPanel,
  TracePanel,
} from "./panels.js";
import {
  Overlay,
  ViewState,
  defaultState,
  parseView,
  serializeView,
  setOverlay,
  viewEquals,
} from "./state.js";

const api = new ApiClient("..");   // the app is mounted at /ui/, the API at /

let state: ViewState = parseView(window.location.search.slice(1), defaultState());
const panels: Panel[] = [];

function dispatch(next: ViewState, pushHistory = true): void {
  if (viewEquals(next, state)) {
    return;
  }
  state = next;
  if (pushHistory) {
    window.history.pushState(null, "", `?${serializeView(state)}`);
  }
  refresh();
}

function refresh(): void {
  for (const p of panels) {
    p.update(state);
  }
  syncControls();
}

function syncControls(): void {
  const dir = document.querySelector<HTMLSelectElement>("#dir-select");
  if (dir) dir.value = state.dir;
  for (const overlay of ["alerts", "crack_gauge", "temperature"] as Overlay[]) {
    const box = document.querySelector<HTMLInputElement>(`#overlay-${overlay}`);
    if (box) box.checked = state.overlays.includes(overlay);
  }
  const label = document.querySelector("#range-label");
  if (label) {
    label.textContent = `${new Date(state.from).toISOString()} … ` +
                        `${new Date(state.to).toISOString()} @ ${state.res}`;
  }
}

function buildControls(bar: HTMLElement): void {
  bar.innerHTML = `
    <label>direction
      <select id="dir-select">
        <option value="x">x (longitudinal)</option>
        <option value="y">y (lateral)</option>
        <option value="z">z (vertical)</option>
        <option value="e">euclidean</option>
      </select>
    </label>
    <label><input type="checkbox" id="overlay-alerts"> alerts</label>
    <label><input type="checkbox" id="overlay-crack_gauge"> crack gauge</label>
    <label><input type="checkbox" id="overlay-temperature"> temperature</label>
    <span id="range-label"></span>`;
  bar.querySelector<HTMLSelectElement>("#dir-select")!.addEventListener("change", (ev) => {
    dispatch({ ...state, dir: (ev.target as HTMLSelectElement).value as ViewState["dir"] });
  });
  for (const overlay of ["alerts", "crack_gauge", "temperature"] as Overlay[]) {
    bar.querySelector<HTMLInputElement>(`#overlay-${overlay}`)!
      .addEventListener("change", (ev) => {
        dispatch(setOverlay(state, overlay, (ev.target as HTMLInputElement).checked));
      });
  }
}

function boot(): void {
  const grid = document.querySelector("#panels")!;
  const bar = document.querySelector<HTMLElement>("#controls")!;
  buildControls(bar);
  panels.push(
    new MaximaPanel(api, dispatch),
    new IndicatorPanel(api, dispatch),
    new TracePanel(api, dispatch),
    new ScatterPanel(api, dispatch),
    new InclinationPanel(api, dispatch),
    new HealthPanel(api, dispatch),
    new EventsPanel(api, dispatch),
  );
  for (const p of panels) {
    grid.append(p.root);
  }
  window.addEventListener("popstate", () => {
    state = parseView(window.location.search.slice(1), defaultState());
    refresh();
  });
  refresh();
}

boot();
