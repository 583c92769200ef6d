// Drill-down controller: the investigative walk from weekly maxima down to
// individual seconds, each step a pure state transition fed by one API call.

import { ApiClient, IndicatorPoint, queries } from "./api.js";
import { drillBucketToSeconds, drillMaximaToHour, ViewState } from "./state.js";

/** Click 1: maxima cell (sensor, hour bucket) -> hour view of that sensor. */
export function clickMaximaCell(state: ViewState, sensor: string, hourMs: number): ViewState {
  return drillMaximaToHour(state, sensor, hourMs);
}

/**
 * Click 2: a bucket in the hour view -> per-second view centered on the
 * bucket's max second. The max second comes from the per-second payload of
 * the bucket (the API owns the numbers; the UI only picks the argmax).
 */
export async function clickBucket(api: ApiClient, state: ViewState,
                                  bucketMs: number, bucketLenMs: number): Promise<ViewState> {
  const sensor = state.sensors[0];
  if (!sensor) {
    return state;
  }
  const seconds = await api.get<IndicatorPoint[]>(
    queries.indicators(sensor, state.dir, bucketMs, bucketMs + bucketLenMs, "1s"));
  if (!seconds.length) {
    return state;
  }
  let best = seconds[0];
  for (const p of seconds) {
    if (p.eri > best.eri) {
      best = p;
    }
  }
  return drillBucketToSeconds(state, best.t);
}
