/**
 * Minimal deterministic SVG output. Numbers are formatted with a fixed
 * rule so identical inputs always produce byte-identical files.
 */

import { ticks } from "d3-array";

export function fmt(x: number): string {
  if (Number.isInteger(x) && Math.abs(x) < 1e15) return String(x);
  // 6 significant digits, trailing zeros dropped: 0.0050 -> "0.005"
  return Number(x.toPrecision(6)).toString();
}

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const attrs = (a: Record<string, string | number>) =>
  Object.entries(a)
    .map(([k, v]) => ` ${k}="${typeof v === "number" ? fmt(v) : v}"`)
    .join("");

export const rect = (a: Record<string, string | number>) => `<rect${attrs(a)}/>`;
export const line = (a: Record<string, string | number>) => `<line${attrs(a)}/>`;
export const text = (content: string, a: Record<string, string | number>) =>
  `<text${attrs(a)}>${esc(content)}</text>`;
export const polyline = (pts: Array<[number, number]>, a: Record<string, string | number>) =>
  `<polyline points="${pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ")}"${attrs(a)}/>`;
export const group = (cls: string, extra: Record<string, string | number>, body: string[]) =>
  `<g class="${cls}"${attrs(extra)}>\n${body.join("\n")}\n</g>`;

export function document(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif" font-size="12">`,
    rect({ x: 0, y: 0, width, height, fill: "#ffffff" }),
    ...body,
    `</svg>`,
  ].join("\n");
}

export interface Scale {
  (v: number): number;
  ticks(): number[];
  label(v: number): string;
}

export function linearScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const span = hi - lo || 1;
  const s = ((v: number) => rLo + ((v - lo) / span) * (rHi - rLo)) as Scale;
  s.ticks = () => ticks(lo, hi, 5);
  s.label = fmt;
  return s;
}

/** Log10 scale with decade ticks, labelled 1e-3 style. */
export function logScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const lLo = Math.log10(lo);
  const lHi = Math.log10(hi);
  const span = lHi - lLo || 1;
  const s = ((v: number) => rLo + ((Math.log10(v) - lLo) / span) * (rHi - rLo)) as Scale;
  s.ticks = () => {
    const out: number[] = [];
    for (let e = Math.ceil(lLo); e <= Math.floor(lHi); e++) out.push(10 ** e);
    return out.length >= 2 ? out : [lo, hi];
  };
  s.label = (v) => {
    const e = Math.log10(v);
    return Number.isInteger(e) ? `1e${e}` : fmt(v);
  };
  return s;
}

export const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export const MARGIN = { top: 28, right: 16, bottom: 46, left: 70 };

/** Axes, tick marks, tick labels and axis titles for an x/y chart. */
export function frame(
  width: number,
  height: number,
  x: Scale,
  y: Scale,
  xTitle: string,
  yTitle: string,
): string[] {
  const m = MARGIN;
  const parts: string[] = [];
  parts.push(line({ x1: m.left, y1: height - m.bottom, x2: width - m.right, y2: height - m.bottom, stroke: "#000" }));
  parts.push(line({ x1: m.left, y1: m.top, x2: m.left, y2: height - m.bottom, stroke: "#000" }));
  for (const t of x.ticks()) {
    const px = x(t);
    parts.push(line({ x1: px, y1: height - m.bottom, x2: px, y2: height - m.bottom + 5, stroke: "#000" }));
    parts.push(text(x.label(t), { x: px, y: height - m.bottom + 18, "text-anchor": "middle" }));
  }
  for (const t of y.ticks()) {
    const py = y(t);
    parts.push(line({ x1: m.left - 5, y1: py, x2: m.left, y2: py, stroke: "#000" }));
    parts.push(line({ x1: m.left, y1: py, x2: width - m.right, y2: py, stroke: "#ddd" }));
    parts.push(text(y.label(t), { x: m.left - 8, y: py + 4, "text-anchor": "end" }));
  }
  parts.push(text(xTitle, { x: (m.left + width - m.right) / 2, y: height - 10, "text-anchor": "middle" }));
  parts.push(
    text(yTitle, {
      x: 16,
      y: (m.top + height - m.bottom) / 2,
      "text-anchor": "middle",
      transform: `rotate(-90 16 ${fmt((m.top + height - m.bottom) / 2)})`,
    }),
  );
  return parts;
}
