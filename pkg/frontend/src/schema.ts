/**
 * Readers for the training metrics interface: a CSV with one row per
 * (iteration, worker) and a JSON sidecar at `<csv>.json` describing the
 * run. Everything here validates eagerly and throws SchemaError with a
 * column/line diagnostic, so rendering never sees malformed data.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";
import { z } from "zod";
import { SchemaError } from "./errors.js";

export const COLUMNS = [
  "iteration",
  "epoch",
  "metric",
  "virtual_time",
  "worker_id",
  "runtime",
  "chunks",
] as const;

export interface MetricsRow {
  iteration: number;
  epoch: number;
  metric: number;
  virtualTime: number;
  workerId: number;
  runtime: number;
  chunks: number;
}

/** One point of the global convergence trace (identical across workers). */
export interface IterationPoint {
  iteration: number;
  epoch: number;
  metric: number;
  virtualTime: number;
}

export interface RunMetrics {
  path: string;
  rows: MetricsRow[];
  points: IterationPoint[];
}

// iteration/worker_id/chunks are counts; the rest are float columns
const INT_COLUMNS = new Set<string>(["iteration", "worker_id", "chunks"]);

function parseField(raw: string, column: string, path: string, line: number): number {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    throw new SchemaError(
      `${path}:${line}: column "${column}" is not a number: ${JSON.stringify(raw)}`,
    );
  }
  if (INT_COLUMNS.has(column) && !Number.isInteger(value)) {
    throw new SchemaError(
      `${path}:${line}: column "${column}" must be an integer, got ${raw}`,
    );
  }
  return value;
}

export function parseMetricsCsv(path: string): RunMetrics {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch (err) {
    throw new SchemaError(`${path}: cannot read: ${(err as Error).message}`);
  }

  const parsed = Papa.parse<string[]>(text, { skipEmptyLines: true });
  const lines = parsed.data;
  if (lines.length === 0) {
    throw new SchemaError(`${path}: empty file, expected header ${COLUMNS.join(",")}`);
  }

  const header = lines[0]!;
  if (header.length !== COLUMNS.length) {
    throw new SchemaError(
      `${path}: header has ${header.length} columns, expected ${COLUMNS.length} (${COLUMNS.join(",")})`,
    );
  }
  for (let i = 0; i < COLUMNS.length; i++) {
    if (header[i] !== COLUMNS[i]) {
      throw new SchemaError(
        `${path}: header column ${i + 1} is ${JSON.stringify(header[i])}, expected "${COLUMNS[i]}"`,
      );
    }
  }
  if (lines.length === 1) {
    throw new SchemaError(`${path}: no data rows after the header`);
  }

  const rows: MetricsRow[] = [];
  const points: IterationPoint[] = [];
  let lastIteration = -1;
  for (let r = 1; r < lines.length; r++) {
    const fields = lines[r]!;
    const line = r + 1; // 1-based, header on line 1
    if (fields.length !== COLUMNS.length) {
      throw new SchemaError(
        `${path}:${line}: expected ${COLUMNS.length} fields, got ${fields.length}`,
      );
    }
    const value = (i: number) => parseField(fields[i]!, COLUMNS[i]!, path, line);
    const row: MetricsRow = {
      iteration: value(0),
      epoch: value(1),
      metric: value(2),
      virtualTime: value(3),
      workerId: value(4),
      runtime: value(5),
      chunks: value(6),
    };
    rows.push(row);
    if (row.iteration !== lastIteration) {
      points.push({
        iteration: row.iteration,
        epoch: row.epoch,
        metric: row.metric,
        virtualTime: row.virtualTime,
      });
      lastIteration = row.iteration;
    }
  }
  return { path, rows, points };
}

const sidecarSchema = z.object({
  run_config: z.record(z.unknown()),
  workers: z.array(z.number().int().nonnegative()),
  iterations: z.number().int().nonnegative(),
});

export interface Sidecar {
  runConfig: Record<string, unknown>;
  workers: number[];
  iterations: number;
}

/** Loads `<csvPath>.json`, the run descriptor written next to the CSV. */
export function parseSidecar(csvPath: string): Sidecar {
  const path = `${csvPath}.json`;
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    throw new SchemaError(`${path}: cannot read sidecar: ${(err as Error).message}`);
  }
  const result = sidecarSchema.safeParse(raw);
  if (!result.success) {
    const first = result.error.issues[0]!;
    const where = first.path.length ? ` at ${first.path.join(".")}` : "";
    throw new SchemaError(`${path}: bad sidecar${where}: ${first.message}`);
  }
  return {
    runConfig: result.data.run_config,
    workers: result.data.workers,
    iterations: result.data.iterations,
  };
}
