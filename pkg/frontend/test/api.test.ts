import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, FetchLike, RequestGate, queries } from "../src/api.js";
import { linearScale } from "../src/charts.js";
import { parseView, serializeView } from "../src/state.js";

describe("query builders", () => {
  it("build the documented endpoint URLs", () => {
    expect(queries.indicators("I", "e", 1000, 2000, "1h"))
      .toBe("/indicators?sensor=I&dir=e&from=1000&to=2000&res=1h");
    expect(queries.maxima(0, 10, "1h", "e", ["I", "G"]))
      .toBe("/maxima?from=0&to=10&res=1h&dir=e&sensors=I%2CG");
    expect(queries.scatter("I", "e", 0, 10))
      .toBe("/scatter?sensor=I&dir=y&from=0&to=10");
    expect(queries.fft("I", "z", 0, 10, "welch"))
      .toBe("/fft?sensor=I&dir=z&from=0&to=10&method=welch");
  });
});

describe("client error surface", () => {
  it("non-2xx raises ApiError with the status", async () => {
    const fetchFn: FetchLike = async () => ({ ok: false, status: 404, json: async () => ({}) });
    const api = new ApiClient("", fetchFn);
    await expect(api.get("/indicators?x=1")).rejects.toThrowError(ApiError);
  });
});

describe("request gate", () => {
  it("drops responses of superseded generations", () => {
    const gate = new RequestGate();
    const first = gate.next();
    const second = gate.next();
    expect(gate.isCurrent(first)).toBe(false);
    expect(gate.isCurrent(second)).toBe(true);
  });
});

describe("payload pass-through", () => {
  it("identical view issues identical queries after a URL round trip", () => {
    const view = parseView("sensors=I&dir=z&from=100&to=200&res=1s&domain=time&method=fft");
    const again = parseView(serializeView(view));
    const urls = (v: typeof view) => [
      queries.indicators(v.sensors[0], v.dir, v.from, v.to, v.res),
      queries.scatter(v.sensors[0], v.dir, v.from, v.to),
      queries.timeseries(v.sensors[0], v.from, v.to),
    ];
    expect(urls(again)).toEqual(urls(view));
  });

  it("axis scaling is the only transformation applied to plotted values", () => {
    // the scale maps payload values linearly; inverting the map returns the
    // original numbers, so nothing else touched them
    const payload = [0.123456, 0.9, 0.4, 0.777];
    const s = linearScale(payload, 0, 100);
    const unmap = (px: number) => s.min + (px / 100) * (s.max - s.min);
    for (const v of payload) {
      expect(unmap(s.map(v))).toBeCloseTo(v, 12);
    }
  });
});
