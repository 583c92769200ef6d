// Typed client for the read-only inspection API.
//
// Query builders are pure string functions so tests can assert the exact
// request a view issues. Panels guard against out-of-order responses with
// a generation token per panel.

import type { Dir, FftMethod, Res, ViewState } from "./state.js";

export interface SensorInfo {
  sensor_id: string;
  kind: string;
  sample_rate: number;
  section: number;
  side: string;
  elevation_index: number;
}

export interface IndicatorPoint { t: number; eri: number; eci: number; max_eri: number; count: number }
export interface MaximaPoint { t: number; sensor: string; dir: string; max_eri: number }
export interface ScatterPoint { t: number; eri: number; eci: number }
export interface Timeseries { sensor: string; rate: number; t0: number; x: number[]; y: number[]; z: number[]; mask: number[] }
export interface Spectrum { sensor: string; dir: string; method: string; freqs: number[]; power: number[] }
export interface AlertOut { t: number; sensor: string; dir: string; indicator: string; value: number; limit: number; policy: string }
export interface EventOut { event_id: string; trigger_time: number; range_start: number; range_end: number; sensors: string[]; partial: boolean }
export interface HealthPoint { date: string; percent: number }
export interface InclinationPoint { t: number; pitch_deg: number; roll_deg: number }
export interface MtbaResponse { baseline_s: number; window_s: number; series: { t: number; mtba_s: number }[]; escalations: Record<string, number>[] }

function query(path: string, params: Record<string, string | number | undefined>): string {
  const q = new URLSearchParams();
  for (const [k, v] of Object.entries(params)) {
    if (v !== undefined) q.set(k, String(v));
  }
  return `${path}?${q.toString()}`;
}

export const queries = {
  sensors: (): string => "/sensors",
  indicators: (sensor: string, dir: Dir, from: number, to: number, res: Res): string =>
    query("/indicators", { sensor, dir, from, to, res }),
  maxima: (from: number, to: number, res: Res, dir: Dir, sensors?: string[]): string =>
    query("/maxima", { from, to, res, dir, sensors: sensors?.length ? sensors.join(",") : undefined }),
  scatter: (sensor: string, dir: Dir, from: number, to: number): string =>
    query("/scatter", { sensor, dir: dir === "e" ? "y" : dir, from, to }),
  timeseries: (sensor: string, from: number, to: number): string =>
    query("/timeseries", { sensor, from, to }),
  fft: (sensor: string, dir: Dir, from: number, to: number, method: FftMethod): string =>
    query("/fft", { sensor, dir: dir === "e" ? "z" : dir, from, to, method }),
  displacement: (sensor: string, dir: Dir, from: number, to: number): string =>
    query("/displacement", { sensor, dir: dir === "e" ? "z" : dir, from, to }),
  alerts: (from: number, to: number): string => query("/alerts", { from, to }),
  events: (): string => "/events",
  health: (): string => "/health-index?",
  inclination: (sensor: string, from: number, to: number): string =>
    query("/inclination", { sensor, from, to }),
  mtba: (): string => "/mtba?",
};

/** The /fft request a view's frequency domain issues: same range, same sensor. */
export function fftQueryForView(state: ViewState): string {
  const sensor = state.sensors[0] ?? "";
  return queries.fft(sensor, state.dir, state.from, state.to, state.method);
}

export type FetchLike = (url: string) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(private base: string = "", private fetchFn: FetchLike =
              (url) => fetch(url)) {}

  async get<T>(pathAndQuery: string): Promise<T> {
    const resp = await this.fetchFn(this.base + pathAndQuery);
    if (!resp.ok) {
      throw new ApiError(resp.status, `GET ${pathAndQuery} -> ${resp.status}`);
    }
    return (await resp.json()) as T;
  }
}

/** Monotone request generations; late responses from stale views are dropped. */
export class RequestGate {
  private generation = 0;

  next(): number {
    this.generation += 1;
    return this.generation;
  }

  isCurrent(token: number): boolean {
    return token === this.generation;
  }
}
