import { describe, expect, it } from "vitest";

import {
  defaultState,
  drillBucketToSeconds,
  drillMaximaToHour,
  parseView,
  serializeView,
  setOverlay,
  toggleDomain,
  viewEquals,
  ViewState,
} from "../src/state.js";

const T0 = 1609459200000;

function sample(): ViewState {
  return {
    sensors: ["I", "G"],
    dir: "y",
    from: T0,
    to: T0 + 7 * 86400000,
    res: "1h",
    domain: "time",
    method: "welch",
    overlays: ["alerts", "temperature"],
    focus: T0 + 3600000,
  };
}

describe("URL round trip", () => {
  it("serialize -> parse restores an identical view", () => {
    const s = sample();
    const back = parseView(serializeView(s));
    expect(back).toEqual(s);
    expect(viewEquals(s, back)).toBe(true);
  });

  it("round trip is stable for many states", () => {
    const variants: ViewState[] = [
      defaultState(T0),
      { ...sample(), sensors: [], overlays: [], focus: null },
      { ...sample(), res: "1s", domain: "frequency", method: "fft" },
      drillBucketToSeconds(sample(), T0 + 1234000),
    ];
    for (const v of variants) {
      expect(parseView(serializeView(v))).toEqual(v);
    }
  });

  it("garbage query falls back to defaults without crashing", () => {
    const v = parseView("dir=q&from=zap&res=9h&overlays=bogus,alerts");
    expect(v.dir).toBe("e");
    expect(v.res).toBe("1h");
    expect(v.overlays).toEqual(["alerts"]);
  });

  it("overlay order is canonical so equality is well defined", () => {
    const a = setOverlay(setOverlay(sample(), "crack_gauge", true), "alerts", true);
    const b = setOverlay(setOverlay(sample(), "alerts", true), "crack_gauge", true);
    expect(serializeView(a)).toBe(serializeView(b));
  });
});

describe("drill-down transitions", () => {
  it("maxima click selects the sensor and opens the hour", () => {
    const s = drillMaximaToHour(sample(), "K", T0 + 14 * 3600000);
    expect(s.sensors).toEqual(["K"]);
    expect(s.from).toBe(T0 + 14 * 3600000);
    expect(s.to - s.from).toBe(3600000);
    expect(s.res).toBe("1m");
    expect(s.focus).toBe(T0 + 14 * 3600000);
  });

  it("bucket zoom centers the range on the max second", () => {
    const maxSecond = T0 + 14 * 3600000 + 1803000;
    const s = drillBucketToSeconds(sample(), maxSecond);
    expect(s.res).toBe("1s");
    expect(s.focus).toBe(maxSecond);
    const center = (s.from + (s.to - 1000)) / 2;
    expect(center).toBe(maxSecond);
  });

  it("domain toggle flips and preserves the instant and range", () => {
    const s = sample();
    const f = toggleDomain(s);
    expect(f.domain).toBe("frequency");
    expect(f.from).toBe(s.from);
    expect(f.to).toBe(s.to);
    expect(f.focus).toBe(s.focus);
    expect(toggleDomain(f).domain).toBe("time");
  });
});
