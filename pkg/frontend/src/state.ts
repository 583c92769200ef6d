// View state of the virtual-inspection dashboard and its URL mapping.
//
// The whole view is a value: every panel renders from it, every transition
// produces a new one, and serialising it to the URL query string and back
// restores an identical view (same API queries issued). Drill-down
// transitions preserve the selected instant.

export type Dir = "x" | "y" | "z" | "e";
export type Res = "1s" | "1m" | "1h";
export type Domain = "time" | "frequency";
export type FftMethod = "fft" | "welch";
export type Overlay = "alerts" | "crack_gauge" | "temperature";

export interface ViewState {
  sensors: string[];
  dir: Dir;
  from: number;          // epoch ms
  to: number;            // epoch ms, exclusive
  res: Res;
  domain: Domain;
  method: FftMethod;
  overlays: Overlay[];   // kept sorted for canonical equality
  focus: number | null;  // selected instant, epoch ms
}

export const RES_MS: Record<Res, number> = { "1s": 1_000, "1m": 60_000, "1h": 3_600_000 };

const OVERLAY_ORDER: Overlay[] = ["alerts", "crack_gauge", "temperature"];

export function defaultState(now = Date.now()): ViewState {
  const to = Math.floor(now / 3_600_000) * 3_600_000;
  return {
    sensors: [],
    dir: "e",
    from: to - 7 * 86_400_000,
    to,
    res: "1h",
    domain: "time",
    method: "fft",
    overlays: ["alerts"],
    focus: null,
  };
}

function canonicalOverlays(raw: string[]): Overlay[] {
  const set = new Set(raw.filter((o): o is Overlay => (OVERLAY_ORDER as string[]).includes(o)));
  return OVERLAY_ORDER.filter((o) => set.has(o));
}

export function serializeView(state: ViewState): string {
  const q = new URLSearchParams();
  if (state.sensors.length) q.set("sensors", state.sensors.join(","));
  q.set("dir", state.dir);
  q.set("from", String(state.from));
  q.set("to", String(state.to));
  q.set("res", state.res);
  q.set("domain", state.domain);
  q.set("method", state.method);
  if (state.overlays.length) q.set("overlays", state.overlays.join(","));
  if (state.focus !== null) q.set("focus", String(state.focus));
  return q.toString();
}

export function parseView(query: string, fallback?: ViewState): ViewState {
  const base = fallback ?? defaultState();
  const q = new URLSearchParams(query);
  const num = (key: string, dflt: number): number => {
    const v = q.get(key);
    const n = v === null ? NaN : Number(v);
    return Number.isFinite(n) ? n : dflt;
  };
  const pick = <T extends string>(key: string, allowed: readonly T[], dflt: T): T => {
    const v = q.get(key);
    return allowed.includes(v as T) ? (v as T) : dflt;
  };
  const focusRaw = q.get("focus");
  const focusNum = focusRaw === null ? NaN : Number(focusRaw);
  return {
    sensors: (q.get("sensors") ?? "").split(",").filter((s) => s.length > 0),
    dir: pick("dir", ["x", "y", "z", "e"] as const, base.dir),
    from: num("from", base.from),
    to: num("to", base.to),
    res: pick("res", ["1s", "1m", "1h"] as const, base.res),
    domain: pick("domain", ["time", "frequency"] as const, base.domain),
    method: pick("method", ["fft", "welch"] as const, base.method),
    overlays: canonicalOverlays((q.get("overlays") ?? "").split(",")),
    focus: Number.isFinite(focusNum) ? focusNum : null,
  };
}

// -- transitions -------------------------------------------------------------

/** Click 1: a maxima-heatmap cell selects its sensor and opens that hour. */
export function drillMaximaToHour(state: ViewState, sensor: string, hourMs: number): ViewState {
  return {
    ...state,
    sensors: [sensor],
    from: hourMs,
    to: hourMs + 3_600_000,
    res: "1m",
    domain: "time",
    focus: hourMs,
  };
}

/**
 * Click 2: zooming a bucket down to seconds centers on the bucket's max
 * second (maxSecondMs comes from the per-second indicator payload).
 */
export function drillBucketToSeconds(state: ViewState, maxSecondMs: number,
                                     halfSpanMs = 20_000): ViewState {
  return {
    ...state,
    from: maxSecondMs - halfSpanMs,
    to: maxSecondMs + halfSpanMs + 1_000,
    res: "1s",
    domain: "time",
    focus: maxSecondMs,
  };
}

/** Flip time <-> frequency over the same range; everything else stays. */
export function toggleDomain(state: ViewState): ViewState {
  return { ...state, domain: state.domain === "time" ? "frequency" : "time" };
}

export function setOverlay(state: ViewState, overlay: Overlay, on: boolean): ViewState {
  const set = new Set(state.overlays);
  if (on) set.add(overlay);
  else set.delete(overlay);
  return { ...state, overlays: canonicalOverlays([...set]) };
}

export function viewEquals(a: ViewState, b: ViewState): boolean {
  return serializeView(a) === serializeView(b);
}
