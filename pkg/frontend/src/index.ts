export { SchemaError, UsageError } from "./errors.js";
export {
  COLUMNS,
  parseMetricsCsv,
  parseSidecar,
  type IterationPoint,
  type MetricsRow,
  type RunMetrics,
  type Sidecar,
} from "./schema.js";
export { PLOT_KINDS, render, renderToString, type PlotKind, type PlotSpec } from "./plots.js";
export { run } from "./cli.js";
