/**
 * The three figure styles rendered from metrics files:
 *
 *  - per-epoch:  metric vs. training epochs, one line per run
 *  - per-time:   metric vs. virtual time, time axis normalized so the
 *                longest run spans 100 units (comparable across runs)
 *  - swimlane:   one lane per worker; per-iteration runtime bars next
 *                to relative chunk-count bars, showing load balancing
 */

import { writeFileSync } from "node:fs";
import { UsageError } from "./errors.js";
import { RunMetrics, Sidecar, parseMetricsCsv, parseSidecar } from "./schema.js";
import {
  MARGIN,
  PALETTE,
  Scale,
  document,
  fmt,
  frame,
  group,
  line,
  linearScale,
  logScale,
  polyline,
  rect,
  text,
} from "./svg.js";

export type PlotKind = "per-epoch" | "per-time" | "swimlane";

export const PLOT_KINDS: PlotKind[] = ["per-epoch", "per-time", "swimlane"];

export interface PlotSpec {
  inputPaths: string[];
  kind: PlotKind;
  labels: string[];
  outputPath: string;
}

const WIDTH = 720;
const HEIGHT = 440;
const LANE_HEIGHT = 26;

function checkSpec(spec: PlotSpec): void {
  if (!PLOT_KINDS.includes(spec.kind)) {
    throw new UsageError(`unknown plot kind "${spec.kind}", expected one of ${PLOT_KINDS.join(", ")}`);
  }
  if (spec.inputPaths.length === 0) {
    throw new UsageError("at least one --in file is required");
  }
  if (spec.inputPaths.length !== spec.labels.length) {
    throw new UsageError(
      `${spec.inputPaths.length} inputs but ${spec.labels.length} labels; counts must match`,
    );
  }
  if (spec.kind === "swimlane" && spec.inputPaths.length !== 1) {
    throw new UsageError("swimlane plots take exactly one input run");
  }
}

// log axis when the pooled metric spans over a decade (duality gaps);
// accuracy-style series in a narrow positive band stay linear
function metricScale(values: number[], rLo: number, rHi: number): Scale {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  if (lo > 0 && hi / lo > 10) return logScale(lo, hi, rLo, rHi);
  return linearScale(Math.min(lo, 0), hi, rLo, rHi);
}

function legend(labels: string[]): string[] {
  const parts: string[] = [];
  labels.forEach((label, i) => {
    const y = MARGIN.top + 8 + i * 18;
    const x = WIDTH - MARGIN.right - 150;
    parts.push(line({ x1: x, y1: y, x2: x + 22, y2: y, stroke: PALETTE[i % PALETTE.length]!, "stroke-width": 2 }));
    parts.push(text(label, { x: x + 28, y: y + 4 }));
  });
  return parts;
}

function lineChart(
  series: Array<{ label: string; points: Array<[number, number]> }>,
  xTitle: string,
  xMax: number,
): string {
  const xs = series.flatMap((s) => s.points.map((p) => p[0]));
  const ys = series.flatMap((s) => s.points.map((p) => p[1]));
  const x = linearScale(0, xMax || Math.max(...xs), MARGIN.left, WIDTH - MARGIN.right);
  const y = metricScale(ys, HEIGHT - MARGIN.bottom, MARGIN.top);
  const body = frame(WIDTH, HEIGHT, x, y, xTitle, "metric");
  series.forEach((s, i) => {
    body.push(
      polyline(
        s.points.map(([px, py]) => [x(px), y(py)]),
        { fill: "none", stroke: PALETTE[i % PALETTE.length]!, "stroke-width": 1.5 },
      ),
    );
  });
  body.push(...legend(series.map((s) => s.label)));
  return document(WIDTH, HEIGHT, body);
}

function perEpoch(runs: RunMetrics[], labels: string[]): string {
  const series = runs.map((run, i) => ({
    label: labels[i]!,
    points: run.points.map((p): [number, number] => [p.epoch, p.metric]),
  }));
  return lineChart(series, "epochs", 0);
}

function perTime(runs: RunMetrics[], labels: string[]): string {
  // one shared scale: the longest run maps to 100 time units, so a run
  // that finishes sooner visibly ends short of the right edge
  const maxT = Math.max(...runs.flatMap((r) => r.points.map((p) => p.virtualTime)));
  const scale = maxT > 0 ? 100 / maxT : 1;
  const series = runs.map((run, i) => ({
    label: labels[i]!,
    points: run.points.map((p): [number, number] => [p.virtualTime * scale, p.metric]),
  }));
  return lineChart(series, "time (normalized to 100 units)", 100);
}

interface LaneCell {
  runtime: number;
  chunks: number;
}

function swimlane(run: RunMetrics, sidecar: Sidecar, label: string): string {
  const workers = [...sidecar.workers].sort((a, b) => a - b);
  const iterations = [...new Set(run.rows.map((r) => r.iteration))].sort((a, b) => a - b);

  const cells = new Map<number, Map<number, LaneCell>>(workers.map((w) => [w, new Map()]));
  const totals = new Map<number, number>();
  let maxRuntime = 0;
  for (const row of run.rows) {
    cells.get(row.workerId)?.set(row.iteration, { runtime: row.runtime, chunks: row.chunks });
    totals.set(row.iteration, (totals.get(row.iteration) ?? 0) + row.chunks);
    maxRuntime = Math.max(maxRuntime, row.runtime);
  }
  let maxShare = 0;
  for (const row of run.rows) {
    const total = totals.get(row.iteration)!;
    if (total > 0) maxShare = Math.max(maxShare, row.chunks / total);
  }
  maxRuntime = maxRuntime || 1;
  maxShare = maxShare || 1;

  const height = MARGIN.top + workers.length * LANE_HEIGHT + MARGIN.bottom;
  const plotLeft = MARGIN.left;
  const plotRight = WIDTH - MARGIN.right;
  const colW = (plotRight - plotLeft) / iterations.length;
  const barMax = LANE_HEIGHT - 6;

  const body: string[] = [];
  body.push(text(label, { x: WIDTH / 2, y: 16, "text-anchor": "middle", "font-weight": "bold" }));

  workers.forEach((worker, laneIndex) => {
    const laneTop = MARGIN.top + laneIndex * LANE_HEIGHT;
    const baseline = laneTop + LANE_HEIGHT - 2;
    const laneParts: string[] = [
      line({ x1: plotLeft, y1: baseline, x2: plotRight, y2: baseline, stroke: "#ccc" }),
      text(`w${worker}`, { x: plotLeft - 8, y: baseline - 6, "text-anchor": "end" }),
    ];
    const row = cells.get(worker)!;
    iterations.forEach((iter, col) => {
      const cell = row.get(iter);
      if (!cell) return; // worker not in the roster this iteration
      const x0 = plotLeft + col * colW;
      const runtimeH = (cell.runtime / maxRuntime) * barMax;
      if (runtimeH > 0) {
        laneParts.push(
          rect({
            x: x0 + colW * 0.08,
            y: baseline - runtimeH,
            width: colW * 0.4,
            height: runtimeH,
            fill: PALETTE[0]!,
          }),
        );
      }
      const total = totals.get(iter)!;
      const share = total > 0 ? cell.chunks / total : 0;
      const shareH = (share / maxShare) * barMax;
      if (shareH > 0) {
        laneParts.push(
          rect({
            x: x0 + colW * 0.52,
            y: baseline - shareH,
            width: colW * 0.4,
            height: shareH,
            fill: PALETTE[4]!,
          }),
        );
      }
    });
    body.push(group("lane", { "data-worker": worker }, laneParts));
  });

  // iteration axis: label every k-th column to keep ~10 readable ticks
  const axisY = MARGIN.top + workers.length * LANE_HEIGHT;
  body.push(line({ x1: plotLeft, y1: axisY, x2: plotRight, y2: axisY, stroke: "#000" }));
  const step = Math.max(1, Math.ceil(iterations.length / 10));
  iterations.forEach((iter, col) => {
    if (col % step !== 0) return;
    const px = plotLeft + (col + 0.5) * colW;
    body.push(line({ x1: px, y1: axisY, x2: px, y2: axisY + 5, stroke: "#000" }));
    body.push(text(String(iter), { x: px, y: axisY + 18, "text-anchor": "middle" }));
  });
  body.push(text("iteration", { x: (plotLeft + plotRight) / 2, y: height - 10, "text-anchor": "middle" }));

  const legendY = height - 10;
  body.push(rect({ x: plotRight - 220, y: legendY - 10, width: 10, height: 10, fill: PALETTE[0]! }));
  body.push(text("runtime", { x: plotRight - 206, y: legendY, }));
  body.push(rect({ x: plotRight - 130, y: legendY - 10, width: 10, height: 10, fill: PALETTE[4]! }));
  body.push(text("chunk share", { x: plotRight - 116, y: legendY }));

  return document(WIDTH, height, body);
}

/** Renders the figure described by `spec` and returns it as SVG text. */
export function renderToString(spec: PlotSpec): string {
  checkSpec(spec);
  const runs = spec.inputPaths.map(parseMetricsCsv);
  switch (spec.kind) {
    case "per-epoch":
      return perEpoch(runs, spec.labels);
    case "per-time":
      return perTime(runs, spec.labels);
    case "swimlane":
      return swimlane(runs[0]!, parseSidecar(spec.inputPaths[0]!), spec.labels[0]!);
  }
}

/** Renders and writes the figure to `spec.outputPath`. */
export function render(spec: PlotSpec): void {
  const svg = renderToString(spec);
  writeFileSync(spec.outputPath, svg + "\n");
}
