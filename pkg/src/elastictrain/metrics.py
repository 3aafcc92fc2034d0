"""Metrics output: per-worker CSV rows plus a JSON provenance sidecar.

One iteration record becomes one CSV row per worker.  Floats are
written with repr, which round-trips exactly, so downstream readers can
compare values rather than prefixes.  The sidecar lives at
``<path>.json`` and carries the resolved run configuration plus the set
of workers that ever appeared.
"""

import csv
import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .errors import IoError, ParseError
from .trainer import IterationRecord

CSV_COLUMNS = ["iteration", "epoch", "metric", "virtual_time",
               "worker_id", "runtime", "chunks"]


@dataclass(frozen=True)
class MetricRow:
    iteration: int
    epoch: float
    metric: float
    virtual_time: float
    worker_id: int
    runtime: float
    chunks: int


def sidecar_path(path) -> str:
    return f"{path}.json"


def write_metrics(records: Sequence[IterationRecord], path,
                  run_config: Optional[dict] = None) -> None:
    workers = sorted({w for r in records for w in r.worker_ids})
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for record in records:
                for w, runtime, chunks in zip(record.worker_ids,
                                              record.per_worker_runtime,
                                              record.per_worker_chunks):
                    writer.writerow([record.iteration,
                                     repr(record.epoch_progress),
                                     repr(record.metric),
                                     repr(record.virtual_time),
                                     w, repr(runtime), chunks])
        with open(sidecar_path(path), "w") as fh:
            json.dump({"run_config": run_config or {},
                       "workers": workers,
                       "iterations": len(records)}, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_metrics(path) -> List[MetricRow]:
    try:
        with open(path, "r", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError("missing CSV header") from None
            if header != CSV_COLUMNS:
                raise ParseError(
                    f"expected columns {CSV_COLUMNS}, got {header}")
            rows = []
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(CSV_COLUMNS):
                    raise ParseError(
                        f"expected {len(CSV_COLUMNS)} columns, got "
                        f"{len(row)}", line_no)
                rows.append(MetricRow(int(row[0]), float(row[1]),
                                      float(row[2]), float(row[3]),
                                      int(row[4]), float(row[5]),
                                      int(row[6])))
            return rows
    except OSError as exc:
        raise IoError(str(exc)) from exc
