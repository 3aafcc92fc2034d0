/** Bad flags or an ill-formed plot spec — the CLI exits 2 for these. */
export class UsageError extends Error {}

/** An input file that doesn't match the metrics schema — the CLI exits 1. */
export class SchemaError extends Error {}
