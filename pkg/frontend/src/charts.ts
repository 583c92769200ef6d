// Minimal SVG chart builders. The only arithmetic here is axis scaling:
// every plotted value is a number the API returned.

export interface Scale {
  min: number;
  max: number;
  map(v: number): number;
}

export function linearScale(values: number[], outLo: number, outHi: number,
                            pad = 0.05): Scale {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    min = 0;
    max = 1;
  }
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const span = max - min;
  min -= span * pad;
  max += span * pad;
  return {
    min, max,
    map: (v: number) => outLo + ((v - min) / (max - min)) * (outHi - outLo),
  };
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface Series {
  xs: number[];
  ys: number[];
  color: string;
  label?: string;
}

export function lineChart(series: Series[], width: number, height: number,
                          markers: { x: number; color: string }[] = [],
                          focus: number | null = null): string {
  const padL = 48, padR = 8, padT = 8, padB = 20;
  const allX = series.flatMap((s) => s.xs);
  const allY = series.flatMap((s) => s.ys);
  const sx = linearScale(allX, padL, width - padR, 0);
  const sy = linearScale(allY, height - padB, padT);
  const parts: string[] = [];
  for (const m of markers) {
    if (m.x >= sx.min && m.x <= sx.max) {
      const x = sx.map(m.x).toFixed(1);
      parts.push(`<line x1="${x}" y1="${padT}" x2="${x}" y2="${height - padB}" ` +
                 `stroke="${m.color}" stroke-dasharray="3,3"/>`);
    }
  }
  if (focus !== null && focus >= sx.min && focus <= sx.max) {
    const x = sx.map(focus).toFixed(1);
    parts.push(`<line x1="${x}" y1="${padT}" x2="${x}" y2="${height - padB}" ` +
               `stroke="#f90" stroke-width="2"/>`);
  }
  for (const s of series) {
    const pts = s.xs.map((x, i) => `${sx.map(x).toFixed(1)},${sy.map(s.ys[i]).toFixed(1)}`);
    parts.push(`<polyline fill="none" stroke="${s.color}" stroke-width="1.2" ` +
               `points="${pts.join(" ")}"/>`);
  }
  parts.push(axisLabels(sy, padL, padT, height - padB));
  return svg(width, height, parts.join(""));
}

export function scatterChart(xs: number[], ys: number[], width: number, height: number,
                             color = "#36c"): string {
  const padL = 48, padR = 8, padT = 8, padB = 24;
  const sx = linearScale(xs.length ? xs : [0, 2], padL, width - padR, 0.02);
  const sy = linearScale(ys.length ? ys : [0, 1], height - padB, padT);
  const dots = xs.map((x, i) =>
    `<circle cx="${sx.map(x).toFixed(1)}" cy="${sy.map(ys[i]).toFixed(1)}" r="1.6" ` +
    `fill="${color}" fill-opacity="0.45"/>`).join("");
  return svg(width, height, dots + axisLabels(sy, padL, padT, height - padB));
}

export function heatmap(rows: string[], cols: number[], value: (row: string, col: number) => number | null,
                        width: number, height: number,
                        cellAttr: (row: string, col: number) => string): string {
  const padL = 40, padT = 4, padB = 18;
  const cw = (width - padL) / Math.max(cols.length, 1);
  const rh = (height - padT - padB) / Math.max(rows.length, 1);
  let vmax = 0;
  for (const r of rows) {
    for (const c of cols) {
      const v = value(r, c);
      if (v !== null && v > vmax) vmax = v;
    }
  }
  const cells: string[] = [];
  rows.forEach((r, ri) => {
    cells.push(`<text x="2" y="${(padT + ri * rh + rh / 2 + 3).toFixed(1)}" ` +
               `font-size="10" fill="#555">${esc(r)}</text>`);
    cols.forEach((c, ci) => {
      const v = value(r, c);
      const alpha = v === null || vmax === 0 ? 0 : Math.max(0.04, v / vmax);
      cells.push(`<rect x="${(padL + ci * cw).toFixed(1)}" y="${(padT + ri * rh).toFixed(1)}" ` +
                 `width="${Math.max(cw - 1, 1).toFixed(1)}" height="${Math.max(rh - 1, 1).toFixed(1)}" ` +
                 `fill="#c22" fill-opacity="${alpha.toFixed(3)}" stroke="#eee" ` +
                 `${cellAttr(r, c)}/>`);
    });
  });
  return svg(width, height, cells.join(""));
}

export function barChart(labels: string[], values: number[], width: number, height: number,
                         threshold: number | null = null, color = "#36c"): string {
  const padL = 48, padR = 8, padT = 8, padB = 30;
  const sy = linearScale([0, ...values], height - padB, padT, 0.02);
  const bw = (width - padL - padR) / Math.max(values.length, 1);
  const parts = values.map((v, i) => {
    const y = sy.map(v);
    const base = sy.map(0);
    return `<rect x="${(padL + i * bw).toFixed(1)}" y="${Math.min(y, base).toFixed(1)}" ` +
           `width="${Math.max(bw - 2, 1).toFixed(1)}" height="${Math.abs(base - y).toFixed(1)}" ` +
           `fill="${v > (threshold ?? Infinity) ? "#c22" : color}"/>`;
  });
  if (threshold !== null) {
    const y = sy.map(threshold).toFixed(1);
    parts.push(`<line x1="${padL}" y1="${y}" x2="${width - padR}" y2="${y}" ` +
               `stroke="#c22" stroke-dasharray="4,3"/>`);
  }
  parts.push(axisLabels(sy, padL, padT, height - padB));
  return svg(width, height, parts.join(""));
}

function axisLabels(sy: Scale, x: number, yTop: number, yBot: number): string {
  const fmt = (v: number) => (Math.abs(v) >= 1000 ? v.toExponential(1) : v.toPrecision(3));
  return `<text x="2" y="${yTop + 10}" font-size="9" fill="#888">${fmt(sy.max)}</text>` +
         `<text x="2" y="${yBot}" font-size="9" fill="#888">${fmt(sy.min)}</text>` +
         `<line x1="${x - 2}" y1="${yTop}" x2="${x - 2}" y2="${yBot}" stroke="#ccc"/>`;
}

function svg(width: number, height: number, body: string): string {
  return `<svg viewBox="0 0 ${width} ${height}" width="100%" ` +
         `xmlns="http://www.w3.org/2000/svg">${body}</svg>`;
}
