/**
 * Minimal deterministic SVG scene builder: linear/log scales with decade or
 * round-step ticks, polylines, rect cells and text. Numbers are always
 * rendered with fixed precision so identical inputs produce byte-identical
 * files.
 */

export function fmt(v: number, digits = 2): string {
  if (!Number.isFinite(v)) return "0";
  return v.toFixed(digits);
}

export interface Scale {
  (v: number): number;
  ticks(): { v: number; label: string }[];
}

export function linearScale(lo: number, hi: number, out0: number, out1: number): Scale {
  const span = hi - lo || 1;
  const f = ((v: number) => out0 + ((v - lo) / span) * (out1 - out0)) as Scale;
  f.ticks = () => {
    const step = niceStep(span / 5);
    const first = Math.ceil(lo / step) * step;
    const ticks: { v: number; label: string }[] = [];
    for (let v = first; v <= hi + 1e-12 * Math.abs(hi); v += step) {
      ticks.push({ v, label: tickLabel(v) });
    }
    return ticks;
  };
  return f;
}

export function logScale(lo: number, hi: number, out0: number, out1: number): Scale {
  const l0 = Math.log10(lo);
  const l1 = Math.log10(hi);
  const span = l1 - l0 || 1;
  const f = ((v: number) => out0 + ((Math.log10(v) - l0) / span) * (out1 - out0)) as Scale;
  f.ticks = () => {
    const ticks: { v: number; label: string }[] = [];
    for (let e = Math.ceil(l0); e <= Math.floor(l1); e++) {
      ticks.push({ v: Math.pow(10, e), label: e === 0 ? "1" : `1e${e}` });
    }
    if (ticks.length < 2) {
      return linearScale(lo, hi, out0, out1).ticks().map((t) => ({ ...t }));
    }
    return ticks;
  };
  return f;
}

function niceStep(raw: number): number {
  const mag = Math.pow(10, Math.floor(Math.log10(Math.abs(raw) || 1)));
  const r = raw / mag;
  const base = r >= 5 ? 10 : r >= 2 ? 5 : r >= 1 ? 2 : 1;
  return base * mag;
}

function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-2) return v.toExponential(0);
  return Number(v.toPrecision(3)).toString();
}

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#17becf", "#7f7f7f",
];

export class Svg {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`);
    this.parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  }

  comment(text: string): void {
    this.parts.push(`<!-- ${text.replace(/--/g, "- -")} -->`);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke = "#333", width = 1): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ` +
      `stroke="${stroke}" stroke-width="${width}"/>`);
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.5, dash = ""): void {
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<polyline points="${d}" fill="none" stroke="${stroke}" stroke-width="${width}"${dashAttr}/>`);
  }

  polygon(pts: Array<[number, number]>, fill: string, opacity = 1): void {
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(`<polygon points="${d}" fill="${fill}" opacity="${fmt(opacity)}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, size = 11, anchor = "start", fill = "#222"): void {
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" text-anchor="${anchor}" ` +
      `fill="${fill}">${escapeXml(s)}</text>`);
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface Frame {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
  sx: Scale;
  sy: Scale;
}

/** Axes box with ticks and labels; returns the data->pixel scales. */
export function frame(
  svg: Svg,
  xDomain: [number, number],
  yDomain: [number, number],
  opts: { xLog?: boolean; yLog?: boolean; xLabel: string; yLabel: string; title: string },
  box = { left: 62, right: 16, top: 34, bottom: 42 },
): Frame {
  const x0 = box.left;
  const x1 = svg.width - box.right;
  const y0 = svg.height - box.bottom;
  const y1 = box.top;
  const sx = (opts.xLog ? logScale : linearScale)(xDomain[0], xDomain[1], x0, x1);
  const sy = (opts.yLog ? logScale : linearScale)(yDomain[0], yDomain[1], y0, y1);
  svg.line(x0, y0, x1, y0);
  svg.line(x0, y0, x0, y1);
  for (const t of sx.ticks()) {
    const px = sx(t.v);
    svg.line(px, y0, px, y0 + 4);
    svg.text(px, y0 + 16, t.label, 10, "middle");
  }
  for (const t of sy.ticks()) {
    const py = sy(t.v);
    svg.line(x0 - 4, py, x0, py);
    svg.text(x0 - 7, py + 3, t.label, 10, "end");
  }
  svg.text((x0 + x1) / 2, svg.height - 10, opts.xLabel, 11, "middle");
  svg.text(14, y1 - 10, opts.yLabel, 11, "start");
  svg.text((x0 + x1) / 2, 18, opts.title, 13, "middle");
  return { x0, x1, y0, y1, sx, sy };
}
