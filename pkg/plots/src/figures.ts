/**
 * Figure renderers. Each consumes parsed artifacts and returns the SVG text
 * plus the numbers a test harness cares about (e.g. the oracle-overlay
 * deviation of the dual surface). Rendering is deterministic: identical
 * inputs give byte-identical SVG.
 */

import { CsvTable, DUAL_SCHEMA, PRIMAL_SCHEMA, groupByTime, readArtifact } from "./csv.js";
import { EmptyInput } from "./errors.js";
import { MertonOracle, dualValueW } from "./merton.js";
import { Frame, PALETTE, Svg, fmt, frame } from "./svg.js";

export interface FigureResult {
  svg: string;
  stats: Record<string, number | string | boolean>;
}

const WIDTH = 640;
const HEIGHT = 420;

function sliceIndices(n: number, want = 6): number[] {
  if (n <= want) return Array.from({ length: n }, (_, i) => i);
  const out: number[] = [];
  for (let k = 0; k < want; k++) out.push(Math.round((k * (n - 1)) / (want - 1)));
  return [...new Set(out)];
}

function drawSeries(svg: Svg, fr: Frame, xs: ArrayLike<number>, ys: ArrayLike<number>,
                    color: string, dash = "", width = 1.5): void {
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < xs.length; i++) {
    const px = fr.sx(xs[i]);
    const py = fr.sy(ys[i]);
    if (Number.isFinite(px) && Number.isFinite(py)) pts.push([px, py]);
  }
  svg.polyline(pts, color, width, dash);
}

function legend(svg: Svg, entries: Array<{ label: string; color: string; dash?: string }>,
                x: number, y: number): void {
  entries.forEach((e, i) => {
    const yy = y + 16 * i;
    svg.polyline([[x, yy], [x + 22, yy]], e.color, 2, e.dash ?? "");
    svg.text(x + 28, yy + 4, e.label, 10);
  });
}

// ---------------------------------------------------------------------------
// dual surface
// ---------------------------------------------------------------------------

export function dualSurface(dualText: string, manifestOracle: MertonOracle | null): FigureResult {
  const table = readArtifact(dualText, DUAL_SCHEMA);
  const grid = groupByTime(table, "y", ["W"]);
  const y = grid.space;

  // plot window: center decades of the solve grid
  const yLo = Math.max(y[0], 5e-2);
  const yHi = Math.min(y[y.length - 1], 5e1);
  const keep: number[] = [];
  for (let j = 0; j < y.length; j++) if (y[j] >= yLo && y[j] <= yHi) keep.push(j);

  let wMin = Infinity;
  let wMax = 0;
  const idxs = sliceIndices(grid.times.length);
  for (const k of idxs) {
    const W = grid.slices.get(k)!["W"];
    for (const j of keep) {
      if (W[j] > 0) {
        wMin = Math.min(wMin, W[j]);
        wMax = Math.max(wMax, W[j]);
      }
    }
  }
  if (!Number.isFinite(wMin) || wMax <= 0) throw new EmptyInput("dual surface has no positive values");

  const svg = new Svg(WIDTH, HEIGHT);
  const fr = frame(svg, [yLo, yHi], [wMin * 0.8, wMax * 1.2],
                   { xLog: true, yLog: true, xLabel: "dual state y",
                     yLabel: "W(t, y)", title: "Dual value surface" });

  let maxDev = 0;
  const entries: Array<{ label: string; color: string; dash?: string }> = [];
  idxs.forEach((k, i) => {
    const W = grid.slices.get(k)!["W"];
    const color = PALETTE[i % PALETTE.length];
    drawSeries(svg, fr, keep.map((j) => y[j]), keep.map((j) => W[j]), color);
    entries.push({ label: `t = ${grid.times[k].toFixed(2)}`, color });
    if (manifestOracle) {
      const exact = keep.map((j) => dualValueW(manifestOracle, grid.times[k], y[j]));
      drawSeries(svg, fr, keep.map((j) => y[j]), exact, "#000000", "4 3", 1);
      keep.forEach((j, jj) => {
        if (y[j] >= 0.2 && y[j] <= 5.0 && exact[jj] > 0) {
          maxDev = Math.max(maxDev, Math.abs(W[j] - exact[jj]) / exact[jj]);
        }
      });
    }
  });
  if (manifestOracle) {
    entries.push({ label: "closed form", color: "#000000", dash: "4 3" });
    svg.comment(`max relative overlay deviation on y in [0.2, 5]: ${maxDev.toExponential(3)}`);
  }
  legend(svg, entries, fr.x1 - 120, fr.y1 + 12);
  return {
    svg: svg.render(),
    stats: { maxRelDeviation: maxDev, slices: idxs.length, oracle: manifestOracle !== null },
  };
}

// ---------------------------------------------------------------------------
// primal curves / policy curves
// ---------------------------------------------------------------------------

export function primalCurves(primalText: string): FigureResult {
  const table = readArtifact(primalText, PRIMAL_SCHEMA);
  const grid = groupByTime(table, "x", ["V"]);
  const x = grid.space;
  const xLo = Math.max(x[0], 1e-2);
  const xHi = Math.min(x[x.length - 1], 1e2);
  const keep: number[] = [];
  for (let j = 0; j < x.length; j++) if (x[j] >= xLo && x[j] <= xHi) keep.push(j);

  let vMax = 0;
  const idxs = sliceIndices(grid.times.length);
  for (const k of idxs) {
    const V = grid.slices.get(k)!["V"];
    for (const j of keep) vMax = Math.max(vMax, V[j]);
  }
  const svg = new Svg(WIDTH, HEIGHT);
  const fr = frame(svg, [xLo, xHi], [0, vMax * 1.05],
                   { xLog: true, xLabel: "wealth x", yLabel: "V(t, x)",
                     title: "Recovered primal value" });
  const entries: Array<{ label: string; color: string }> = [];
  idxs.forEach((k, i) => {
    const V = grid.slices.get(k)!["V"];
    const color = PALETTE[i % PALETTE.length];
    drawSeries(svg, fr, keep.map((j) => x[j]), keep.map((j) => V[j]), color);
    entries.push({ label: `t = ${grid.times[k].toFixed(2)}`, color });
  });
  legend(svg, entries, fr.x0 + 12, fr.y1 + 12);
  return { svg: svg.render(), stats: { slices: idxs.length } };
}

export function policyCurves(primalText: string): FigureResult {
  const table = readArtifact(primalText, PRIMAL_SCHEMA);
  const grid = groupByTime(table, "x", ["C_feedback", "Pi_feedback"]);
  const x = grid.space;
  const xLo = Math.max(x[0], 1e-2);
  const xHi = Math.min(x[x.length - 1], 1e2);
  const keep: number[] = [];
  for (let j = 0; j < x.length; j++) if (x[j] >= xLo && x[j] <= xHi) keep.push(j);
  // drop the terminal slice: controls live on [0, T)
  const idxs = sliceIndices(grid.times.length - 1);

  const svg = new Svg(WIDTH, 2 * HEIGHT - 80);
  let cMax = 0;
  let pMax = 0;
  for (const k of idxs) {
    const rec = grid.slices.get(k)!;
    for (const j of keep) {
      cMax = Math.max(cMax, rec["C_feedback"][j] / x[j]);
      pMax = Math.max(pMax, rec["Pi_feedback"][j] / x[j]);
    }
  }
  const frTop = frame(svg, [xLo, xHi], [0, cMax * 1.1],
                      { xLog: true, xLabel: "", yLabel: "consumption rate C/x",
                        title: "Feedback policies" },
                      { left: 62, right: 16, top: 34, bottom: HEIGHT + 2 });
  const frBot = frame(svg, [xLo, xHi], [0, pMax * 1.1],
                      { xLog: true, xLabel: "wealth x", yLabel: "risky amount Pi/x",
                        title: "" },
                      { left: 62, right: 16, top: HEIGHT - 40, bottom: 42 });
  const entries: Array<{ label: string; color: string }> = [];
  idxs.forEach((k, i) => {
    const rec = grid.slices.get(k)!;
    const color = PALETTE[i % PALETTE.length];
    drawSeries(svg, frTop, keep.map((j) => x[j]),
               keep.map((j) => rec["C_feedback"][j] / x[j]), color);
    drawSeries(svg, frBot, keep.map((j) => x[j]),
               keep.map((j) => rec["Pi_feedback"][j] / x[j]), color);
    entries.push({ label: `t = ${grid.times[k].toFixed(2)}`, color });
  });
  legend(svg, entries, frTop.x0 + 12, frTop.y1 + 12);
  return { svg: svg.render(), stats: { slices: idxs.length } };
}

// ---------------------------------------------------------------------------
// duality-gap heatmap
// ---------------------------------------------------------------------------

function heatColor(v: number): string {
  // white -> red ramp
  const c = Math.max(0, Math.min(1, v));
  const g = Math.round(255 * (1 - c));
  return `rgb(255,${g},${g})`;
}

export function gapHeatmap(primalText: string): FigureResult {
  const table = readArtifact(primalText, PRIMAL_SCHEMA);
  const grid = groupByTime(table, "x", ["duality_gap", "V"]);
  const x = grid.space;
  const nT = grid.times.length;
  // relative gap against the grid tolerance scale 1 + V
  let gMax = 0;
  const rel: Float64Array[] = [];
  for (let k = 0; k < nT; k++) {
    const rec = grid.slices.get(k)!;
    const row = new Float64Array(x.length);
    for (let j = 0; j < x.length; j++) {
      row[j] = rec["duality_gap"][j] / (1 + Math.abs(rec["V"][j]));
      gMax = Math.max(gMax, row[j]);
    }
    rel.push(row);
  }
  const svg = new Svg(WIDTH, HEIGHT);
  const fr = frame(svg, [grid.times[0], grid.times[nT - 1]],
                   [Math.log10(x[0]), Math.log10(x[x.length - 1])],
                   { xLabel: "time t", yLabel: "log10 wealth",
                     title: "Duality gap / (1 + V)" });
  const cw = (fr.x1 - fr.x0) / nT;
  const ch = (fr.y1 - fr.y0) / x.length;   // negative: y axis points up
  for (let k = 0; k < nT; k++) {
    for (let j = 0; j < x.length; j++) {
      const v = gMax > 0 ? rel[k][j] / gMax : 0;
      svg.rect(fr.x0 + k * cw, fr.y0 + (j + 1) * ch, cw + 0.5, -ch + 0.5, heatColor(v));
    }
  }
  svg.text(fr.x1 - 4, fr.y1 + 12, `max relative gap ${gMax.toExponential(2)}`, 10, "end");
  return { svg: svg.render(), stats: { maxRelativeGap: gMax } };
}

// ---------------------------------------------------------------------------
// MC convergence fan
// ---------------------------------------------------------------------------

interface SimReportJson {
  estimate: number;
  std_error: number;
  reference?: number;
  seed?: number;
  running: Array<[number, number, number]>;
}

export function mcFan(reportTexts: string[]): FigureResult {
  const reports: SimReportJson[] = reportTexts.map((t) => JSON.parse(t));
  if (reports.length === 0 || !reports[0].running?.length) {
    throw new EmptyInput("mc_fan needs at least one simreport with running estimates");
  }
  let lo = Infinity;
  let hi = -Infinity;
  let nMax = 0;
  for (const r of reports) {
    for (const [n, est, se] of r.running) {
      lo = Math.min(lo, est - 2 * se);
      hi = Math.max(hi, est + 2 * se);
      nMax = Math.max(nMax, n);
    }
  }
  const ref = reports[0].reference;
  if (typeof ref === "number") {
    lo = Math.min(lo, ref);
    hi = Math.max(hi, ref);
  }
  const svg = new Svg(WIDTH, HEIGHT);
  const fr = frame(svg, [0, nMax], [lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo)],
                   { xLabel: "paths used", yLabel: "estimate",
                     title: "Monte Carlo convergence fan" });
  const entries: Array<{ label: string; color: string; dash?: string }> = [];
  reports.forEach((r, i) => {
    const color = PALETTE[i % PALETTE.length];
    const band: Array<[number, number]> = [];
    for (const [n, est, se] of r.running) band.push([fr.sx(n), fr.sy(est + 2 * se)]);
    for (let k = r.running.length - 1; k >= 0; k--) {
      const [n, est, se] = r.running[k];
      band.push([fr.sx(n), fr.sy(est - 2 * se)]);
    }
    svg.polygon(band, color, 0.15);
    drawSeries(svg, fr, r.running.map((q) => q[0]), r.running.map((q) => q[1]), color);
    entries.push({ label: `seed ${r.seed ?? i}`, color });
  });
  if (typeof ref === "number") {
    svg.polyline([[fr.x0, fr.sy(ref)], [fr.x1, fr.sy(ref)]], "#000", 1.2, "6 3");
    entries.push({ label: "reference V", color: "#000", dash: "6 3" });
  }
  legend(svg, entries, fr.x1 - 130, fr.y1 + 12);
  return { svg: svg.render(), stats: { fans: reports.length } };
}

// ---------------------------------------------------------------------------
// random-horizon equivalence bars
// ---------------------------------------------------------------------------

interface EquivalenceJson {
  direct: { estimate: number; std_error: number };
  transformed: { estimate: number; std_error: number };
  difference: number;
  combined_se: number;
  within_2se: boolean;
}

export function equivalenceBars(text: string): FigureResult {
  const eq: EquivalenceJson = JSON.parse(text);
  if (!eq.direct || !eq.transformed) throw new EmptyInput("not an equivalence report");
  const vals = [eq.direct, eq.transformed];
  const labels = ["stopped functional", "rewritten functional"];
  const lo = Math.min(...vals.map((v) => v.estimate - 3 * v.std_error));
  const hi = Math.max(...vals.map((v) => v.estimate + 3 * v.std_error));
  const svg = new Svg(WIDTH, HEIGHT);
  const fr = frame(svg, [0, 2], [lo, hi],
                   { xLabel: "", yLabel: "estimate", title: "Random-horizon equivalence" });
  vals.forEach((v, i) => {
    const cx = fr.sx(0.5 + i);
    const w = 70;
    svg.rect(cx - w / 2, fr.sy(v.estimate), w, fr.y0 - fr.sy(v.estimate), PALETTE[i]);
    svg.line(cx, fr.sy(v.estimate - 2 * v.std_error), cx, fr.sy(v.estimate + 2 * v.std_error), "#000", 2);
    svg.text(cx, fr.y0 + 16, labels[i], 11, "middle");
    svg.text(cx, fr.sy(v.estimate) - 8, v.estimate.toFixed(4), 10, "middle");
  });
  svg.text(fr.x1 - 4, fr.y1 + 12,
           `|diff| ${Math.abs(eq.difference).toExponential(2)} vs 2 x combined SE ` +
           `${(2 * eq.combined_se).toExponential(2)} -> ${eq.within_2se ? "consistent" : "INCONSISTENT"}`,
           10, "end");
  return { svg: svg.render(), stats: { within2se: eq.within_2se, difference: eq.difference } };
}
