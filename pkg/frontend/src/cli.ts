#!/usr/bin/env node
/**
 * plot — render a figure from training metrics files.
 *
 * Usage:
 *   plot --kind per-time --in a.csv --in b.csv --label uni --label micro16 --out fig.svg
 *
 * Kinds: per-epoch, per-time, swimlane (swimlane takes one --in and
 * reads the <csv>.json sidecar for the worker roster).
 *
 * Exit codes: 0 ok, 1 unreadable/mismatched input, 2 bad usage.
 */

import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import { SchemaError, UsageError } from "./errors.js";
import { PLOT_KINDS, PlotKind, render } from "./plots.js";

const USAGE =
  `usage: plot --kind {${PLOT_KINDS.join("|")}} --in RUN.csv [--in ...] ` +
  "--label NAME [--label ...] --out FIG.svg";

export function run(argv: string[], log = console.log, err = console.error): number {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        kind: { type: "string" },
        in: { type: "string", multiple: true },
        label: { type: "string", multiple: true },
        out: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    }));
  } catch (e) {
    err((e as Error).message);
    err(USAGE);
    return 2;
  }
  if (values.help) {
    log(USAGE);
    return 0;
  }

  try {
    if (!values.kind || !values.out || !values.in?.length) {
      throw new UsageError("--kind, --in and --out are required");
    }
    render({
      kind: values.kind as PlotKind,
      inputPaths: values.in,
      labels: values.label ?? [],
      outputPath: values.out,
    });
    log(`wrote ${values.out}`);
    return 0;
  } catch (e) {
    if (e instanceof UsageError) {
      err(`error: ${e.message}`);
      err(USAGE);
      return 2;
    }
    if (e instanceof SchemaError) {
      err(`error: ${e.message}`);
      return 1;
    }
    err(`error: ${(e as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(run(process.argv.slice(2)));
}
