// Dashboard panels. Each renders one view of the state from one or two API
// payloads; failures show inline with a retry button and never blank the
// panel grid.

import {
  AlertOut,
  ApiClient,
  EventOut,
  HealthPoint,
  InclinationPoint,
  IndicatorPoint,
  MaximaPoint,
  MtbaResponse,
  RequestGate,
  ScatterPoint,
  Spectrum,
  Timeseries,
  queries,
} from "./api.js";
import { barChart, heatmap, lineChart, scatterChart } from "./charts.js";
import { clickBucket, clickMaximaCell } from "./drill.js";
import { RES_MS, ViewState, toggleDomain } from "./state.js";

export type Dispatch = (next: ViewState, pushHistory?: boolean) => void;

export abstract class Panel {
  readonly root: HTMLElement;
  protected body: HTMLElement;
  private gate = new RequestGate();
  protected lastState: ViewState | null = null;

  constructor(protected api: ApiClient, protected dispatch: Dispatch,
              title: string, cls: string) {
    this.root = document.createElement("section");
    this.root.className = `panel ${cls}`;
    const h = document.createElement("h2");
    h.textContent = title;
    this.body = document.createElement("div");
    this.body.className = "panel-body";
    this.root.append(h, this.body);
  }

  update(state: ViewState): void {
    this.lastState = state;
    const token = this.gate.next();
    this.render(state, token).catch((err) => {
      if (this.gate.isCurrent(token)) {
        this.showError(err);
      }
    });
  }

  /** Stale-response guard: subclasses check before touching the DOM. */
  protected fresh(token: number): boolean {
    return this.gate.isCurrent(token);
  }

  protected showError(err: unknown): void {
    this.body.innerHTML = "";
    const box = document.createElement("div");
    box.className = "error";
    box.textContent = `request failed: ${err instanceof Error ? err.message : String(err)} `;
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.onclick = () => this.lastState && this.update(this.lastState);
    box.append(retry);
    this.body.append(box);
  }

  protected show(html: string): void {
    this.body.innerHTML = html;
  }

  protected abstract render(state: ViewState, token: number): Promise<void>;
}

export class MaximaPanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "weekly maxima (hourly, per sensor)", "maxima");
  }

  protected async render(state: ViewState, token: number): Promise<void> {
    const from = state.to - 7 * 86_400_000;
    const pts = await this.api.get<MaximaPoint[]>(
      queries.maxima(from, state.to, "1h", state.dir));
    if (!this.fresh(token)) return;
    const rows = [...new Set(pts.map((p) => p.sensor))].sort();
    const cols = [...new Set(pts.map((p) => p.t))].sort((a, b) => a - b);
    const lookup = new Map(pts.map((p) => [`${p.sensor}:${p.t}`, p.max_eri]));
    this.show(heatmap(rows, cols,
      (r, c) => lookup.get(`${r}:${c}`) ?? null, 940, 28 + rows.length * 16,
      (r, c) => `data-sensor="${r}" data-t="${c}" class="cell"`));
    this.body.querySelectorAll<SVGRectElement>("rect.cell").forEach((el) => {
      el.addEventListener("click", () => {
        const sensor = el.getAttribute("data-sensor")!;
        const t = Number(el.getAttribute("data-t"));
        if (this.lastState) {
          this.dispatch(clickMaximaCell(this.lastState, sensor, t));
        }
      });
    });
  }
}

export class IndicatorPanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "indicators", "indicators");
  }

  protected async render(state: ViewState, token: number): Promise<void> {
    const sensor = state.sensors[0];
    if (!sensor) {
      this.show("<p class='hint'>pick a sensor in the maxima panel</p>");
      return;
    }
    const pts = await this.api.get<IndicatorPoint[]>(
      queries.indicators(sensor, state.dir, state.from, state.to, state.res));
    const markers: { x: number; color: string }[] = [];
    if (state.overlays.includes("alerts")) {
      const alerts = await this.api.get<AlertOut[]>(queries.alerts(state.from, state.to));
      if (!this.fresh(token)) return;
      for (const a of alerts) {
        if (a.sensor === sensor) markers.push({ x: a.t, color: "#c22" });
      }
    }
    if (!this.fresh(token)) return;
    const xs = pts.map((p) => p.t);
    this.show(
      `<p class="hint">${sensor}/${state.dir} at ${state.res}; click a bucket to ` +
      `zoom to its max second</p>` +
      lineChart([
        { xs, ys: pts.map((p) => p.eri), color: "#36c", label: "eri" },
        { xs, ys: pts.map((p) => p.max_eri), color: "#9bd", label: "max" },
      ], 940, 180, markers, state.focus));
    this.body.querySelector("svg")?.addEventListener("click", (ev) => {
      const svgEl = ev.currentTarget as SVGSVGElement;
      const frac = (ev as MouseEvent).offsetX / svgEl.clientWidth;
      const t = state.from + frac * (state.to - state.from);
      const bucketLen = RES_MS[state.res];
      if (bucketLen <= RES_MS["1s"]) return;
      const bucket = Math.floor(t / bucketLen) * bucketLen;
      clickBucket(this.api, state, bucket, bucketLen)
        .then((next) => this.dispatch(next))
        .catch((err) => this.showError(err));
    });
  }
}

export class TracePanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "raw trace / spectrum", "trace");
  }

  protected async render(state: ViewState, token: number): Promise<void> {
    const sensor = state.sensors[0];
    if (!sensor) {
      this.show("<p class='hint'>no sensor selected</p>");
      return;
    }
    const toggle = `<button id="domain-toggle">switch to ` +
      `${state.domain === "time" ? "frequency" : "time"} domain</button>`;
    if (state.domain === "frequency") {
      const spec = await this.api.get<Spectrum>(
        queries.fft(sensor, state.dir, state.from, state.to, state.method));
      if (!this.fresh(token)) return;
      this.show(toggle + lineChart(
        [{ xs: spec.freqs, ys: spec.power, color: "#36c" }], 940, 200));
    } else {
      const ts = await this.api.get<Timeseries>(
        queries.timeseries(sensor, state.from, state.to));
      if (!this.fresh(token)) return;
      if (!ts.rate) {
        this.show(toggle + "<p class='hint'>no raw data retained for this range</p>");
      } else {
        const axis = state.dir === "e" ? "z" : state.dir;
        const ys = ts[axis as "x" | "y" | "z"];
        const xs = ys.map((_, i) => ts.t0 + (i * 1000) / ts.rate);
        const series = [{ xs, ys, color: "#36c" }];
        if (state.overlays.includes("crack_gauge")) {
          const gauges = await this.api.get<Timeseries>(
            queries.timeseries("I1", state.from, state.to));
          if (!this.fresh(token)) return;
          if (gauges.rate) {
            series.push({
              xs: gauges.x.map((_, i) => gauges.t0 + (i * 1000) / gauges.rate),
              ys: gauges.x, color: "#2a2",
            });
          }
        }
        this.show(toggle + lineChart(series, 940, 200, [], state.focus));
      }
    }
    this.body.querySelector("#domain-toggle")?.addEventListener("click", () => {
      this.dispatch(toggleDomain(state));
    });
  }
}

export class ScatterPanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "response scatter: amplitude vs frequency content", "scatter");
  }

  protected async render(state: ViewState, token: number): Promise<void> {
    const sensor = state.sensors[0];
    if (!sensor) {
      this.show("<p class='hint'>no sensor selected</p>");
      return;
    }
    const pts = await this.api.get<ScatterPoint[]>(
      queries.scatter(sensor, state.dir, state.from, state.to));
    if (!this.fresh(token)) return;
    this.show(`<p class="hint">${pts.length} seconds</p>` +
              scatterChart(pts.map((p) => p.eci), pts.map((p) => p.eri), 460, 200));
  }
}

export class InclinationPanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "inclination trend", "inclination");
  }

  protected async render(state: ViewState, token: number): Promise<void> {
    const sensor = state.sensors[0];
    if (!sensor) {
      this.show("<p class='hint'>no sensor selected</p>");
      return;
    }
    const span = Math.max(state.to - state.from, 86_400_000);
    const pts = await this.api.get<InclinationPoint[]>(
      queries.inclination(sensor, state.to - span, state.to));
    if (!this.fresh(token)) return;
    if (!pts.length) {
      this.show("<p class='hint'>no inclination records in range</p>");
      return;
    }
    const xs = pts.map((p) => p.t);
    this.show(lineChart([
      { xs, ys: pts.map((p) => p.pitch_deg), color: "#36c" },
      { xs, ys: pts.map((p) => p.roll_deg), color: "#2a2" },
    ], 460, 160));
  }
}

export class HealthPanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "asset health (100% = training average)", "health");
  }

  protected async render(_state: ViewState, token: number): Promise<void> {
    const [points, mtba] = await Promise.all([
      this.api.get<HealthPoint[]>(queries.health()),
      this.api.get<MtbaResponse>(queries.mtba()),
    ]);
    if (!this.fresh(token)) return;
    if (!points.length) {
      this.show("<p class='hint'>no health index computed yet (run the score command)</p>");
      return;
    }
    const flags = mtba.escalations.length;
    this.show(`<p class="hint">${flags} escalation flag(s) on record</p>` +
              barChart(points.map((p) => p.date), points.map((p) => p.percent),
                       940, 160, 300));
  }
}

export class EventsPanel extends Panel {
  constructor(api: ApiClient, dispatch: Dispatch) {
    super(api, dispatch, "event snapshots", "events");
  }

  protected async render(state: ViewState, token: number): Promise<void> {
    const events = await this.api.get<EventOut[]>(queries.events());
    if (!this.fresh(token)) return;
    if (!events.length) {
      this.show("<p class='hint'>no snapshots captured</p>");
      return;
    }
    const rows = events.map((e) =>
      `<tr data-start="${e.range_start}" data-end="${e.range_end}" ` +
      `data-sensor="${e.sensors[0] ?? ""}">` +
      `<td>${e.event_id}</td><td>${new Date(e.trigger_time).toISOString()}</td>` +
      `<td>${e.sensors.join(" ")}</td><td>${e.partial ? "partial" : "full"}</td></tr>`);
    this.show(`<table><thead><tr><th>id</th><th>trigger</th><th>sensors</th><th></th>` +
              `</tr></thead><tbody>${rows.join("")}</tbody></table>`);
    this.body.querySelectorAll<HTMLTableRowElement>("tbody tr").forEach((tr) => {
      tr.addEventListener("click", () => {
        const sensor = tr.getAttribute("data-sensor")!;
        this.dispatch({
          ...state,
          sensors: sensor ? [sensor] : state.sensors,
          from: Number(tr.getAttribute("data-start")),
          to: Number(tr.getAttribute("data-end")),
          res: "1s",
          focus: null,
        });
      });
    });
  }
}
