"""Samples, fixed-capacity data chunks, chunk ownership and movement.

Chunks are the unit of data movement: each holds a slice of the training
set plus optional per-sample solver state (dual variables), so state and
the samples it belongs to always travel together.  Workers own their local
chunks while an iteration runs; the scheduler owns everything in between.
Both rules are enforced through :class:`OwnershipContract`.

Byte accounting for capacity checks is fixed: 4 bytes per sparse index,
8 bytes per feature value, 8 bytes per label and 8 bytes per dual-state
entry.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolation, EmptyDataset, InvalidMove, UnknownWorker

INDEX_BYTES = 4
VALUE_BYTES = 8
LABEL_BYTES = 8
DUAL_BYTES = 8


@dataclass(frozen=True)
class Sample:
    """One training sample with a sparse feature vector.

    ``features`` is a tuple of ``(index, value)`` pairs with strictly
    increasing indices.
    """

    id: int
    features: tuple[tuple[int, float], ...]
    label: float

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"sample id must be non-negative, got {self.id}")
        prev = -1
        for idx, _ in self.features:
            if idx <= prev:
                raise ValueError(
                    f"sample {self.id}: feature indices must be strictly increasing"
                )
            prev = idx

    @property
    def byte_size(self) -> int:
        return len(self.features) * (INDEX_BYTES + VALUE_BYTES) + LABEL_BYTES


def sample_byte_size(sample: Sample, with_dual_state: bool = False) -> int:
    return sample.byte_size + (DUAL_BYTES if with_dual_state else 0)


@dataclass
class Model:
    """Dense weight vector plus iteration counter."""

    weights: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "Model":
        return Model(self.weights.copy(), self.iteration)


class OwnershipPhase(Enum):
    TASK_OWNED = "task-owned"
    SCHEDULER_OWNED = "scheduler-owned"


class OwnershipContract:
    """Tracks which side currently owns the chunks.

    Chunk contents may only change while tasks own them; ownership may
    only change while the scheduler does.
    """

    def __init__(self):
        self.phase = OwnershipPhase.SCHEDULER_OWNED

    def begin_iteration(self):
        if self.phase is not OwnershipPhase.SCHEDULER_OWNED:
            raise ContractViolation("iteration already running")
        self.phase = OwnershipPhase.TASK_OWNED

    def end_iteration(self):
        if self.phase is not OwnershipPhase.TASK_OWNED:
            raise ContractViolation("no iteration running")
        self.phase = OwnershipPhase.SCHEDULER_OWNED


class DataChunk:
    """Fixed-capacity container of samples plus optional dual state."""

    def __init__(self, chunk_id: int, samples: Sequence[Sample], dual_state=None):
        if dual_state is not None and len(dual_state) not in (0, len(samples)):
            raise ValueError("dual_state length must be 0 or match sample count")
        self.chunk_id = chunk_id
        self.samples = list(samples)
        self._dual = (
            np.asarray(dual_state, dtype=np.float64)
            if dual_state is not None and len(dual_state)
            else None
        )
        self._csr_cache = None

    def __len__(self):
        return len(self.samples)

    def __repr__(self):
        return f"DataChunk(id={self.chunk_id}, samples={len(self.samples)})"

    @property
    def has_dual_state(self) -> bool:
        return self._dual is not None

    @property
    def dual_state(self) -> np.ndarray | None:
        return self._dual

    def dual_view(self, phase: OwnershipPhase) -> np.ndarray:
        """Mutable dual array; only a task that owns the chunk may write."""
        if phase is not OwnershipPhase.TASK_OWNED:
            raise ContractViolation("chunk state may only be mutated while task-owned")
        if self._dual is None:
            raise ContractViolation("chunk has no dual state")
        return self._dual

    def init_dual_state(self):
        self._dual = np.zeros(len(self.samples), dtype=np.float64)

    @property
    def byte_size(self) -> int:
        size = sum(s.byte_size for s in self.samples)
        if self._dual is not None:
            size += DUAL_BYTES * len(self._dual)
        return size

    def sample_ids(self) -> list[int]:
        return [s.id for s in self.samples]

    def feature_arrays(self):
        """CSR-style (indptr, indices, values, labels) built once per chunk."""
        if self._csr_cache is None:
            indptr = np.zeros(len(self.samples) + 1, dtype=np.int64)
            nnz = sum(len(s.features) for s in self.samples)
            indices = np.empty(nnz, dtype=np.int32)
            values = np.empty(nnz, dtype=np.float64)
            labels = np.empty(len(self.samples), dtype=np.float64)
            pos = 0
            for i, s in enumerate(self.samples):
                labels[i] = s.label
                for idx, val in s.features:
                    indices[pos] = idx
                    values[pos] = val
                    pos += 1
                indptr[i + 1] = pos
            self._csr_cache = (indptr, indices, values, labels)
        return self._csr_cache


def partition_into_chunks(
    dataset: Sequence[Sample],
    capacity_bytes: int,
    seed: int,
    with_dual_state: bool = False,
) -> list[DataChunk]:
    """Pack a dataset into chunks of at most ``capacity_bytes``.

    Samples are shuffled with the given seed, then packed greedily in
    order.  A single sample larger than the capacity gets a chunk of its
    own.  Chunk ids are dense from 0.
    """
    if not dataset:
        raise EmptyDataset("cannot partition an empty dataset")
    if capacity_bytes <= 0:
        raise ValueError("capacity_bytes must be positive")

    order = list(dataset)
    random.Random(seed).shuffle(order)

    chunks: list[DataChunk] = []
    current: list[Sample] = []
    current_bytes = 0
    for sample in order:
        size = sample_byte_size(sample, with_dual_state)
        if current and current_bytes + size > capacity_bytes:
            chunks.append(_make_chunk(len(chunks), current, with_dual_state))
            current = []
            current_bytes = 0
        current.append(sample)
        current_bytes += size
    chunks.append(_make_chunk(len(chunks), current, with_dual_state))
    return chunks


def _make_chunk(chunk_id, samples, with_dual_state):
    chunk = DataChunk(chunk_id, samples)
    if with_dual_state:
        chunk.init_dual_state()
    return chunk


@dataclass
class ChunkAssignment:
    """Total mapping of chunk ids to owning workers.

    ``workers`` also lists workers that currently own nothing, so that
    lookups for them return 0 instead of failing.
    """

    owner: dict[int, int] = field(default_factory=dict)
    workers: set[int] = field(default_factory=set)

    def __post_init__(self):
        self.workers = set(self.workers) | set(self.owner.values())

    def owner_of(self, chunk_id: int) -> int:
        return self.owner[chunk_id]

    def chunks_of(self, worker_id: int) -> list[int]:
        if worker_id not in self.workers:
            raise UnknownWorker(f"worker {worker_id} is not registered")
        return sorted(c for c, w in self.owner.items() if w == worker_id)

    def register_worker(self, worker_id: int):
        self.workers.add(worker_id)

    def drop_worker(self, worker_id: int):
        if any(w == worker_id for w in self.owner.values()):
            raise InvalidMove(f"worker {worker_id} still owns chunks")
        self.workers.discard(worker_id)

    def copy(self) -> "ChunkAssignment":
        return ChunkAssignment(dict(self.owner), set(self.workers))


def apply_moves(
    assignment: ChunkAssignment,
    moves: Iterable[tuple[int, int, int]],
    phase: OwnershipPhase,
) -> ChunkAssignment:
    """Apply ``(chunk_id, from_worker, to_worker)`` moves, returning a new
    assignment.  Moves are only legal while the scheduler owns the chunks,
    and each move must name the chunk's current owner."""
    if phase is not OwnershipPhase.SCHEDULER_OWNED:
        raise ContractViolation("chunks may only be moved while scheduler-owned")
    result = assignment.copy()
    for chunk_id, from_worker, to_worker in moves:
        actual = result.owner.get(chunk_id)
        if actual != from_worker:
            raise InvalidMove(
                f"chunk {chunk_id} is owned by {actual}, not {from_worker}"
            )
        if to_worker not in result.workers:
            raise UnknownWorker(f"worker {to_worker} is not registered")
        result.owner[chunk_id] = to_worker
    return result


def chunk_size_table(chunks: Iterable[DataChunk]) -> dict[int, int]:
    return {c.chunk_id: len(c) for c in chunks}


def worker_sample_count(
    assignment: ChunkAssignment,
    chunks: Mapping[int, "DataChunk | int"],
    worker_id: int,
) -> int:
    """Total samples across the chunks a worker owns.

    ``chunks`` maps chunk id to either the chunk itself or its sample count.
    """
    total = 0
    for c in assignment.chunks_of(worker_id):
        entry = chunks[c]
        total += entry if isinstance(entry, int) else len(entry)
    return total
