"""Elastic distributed training with one task per node and movable
stateful data chunks."""

__version__ = "0.1.0"

from .data import (ChunkAssignment, DataChunk, Model, OwnershipContract,
                   OwnershipPhase, Sample, apply_moves,
                   partition_into_chunks)
from .errors import ElasticTrainError
from .solvers import HyperParams, LocalUpdate, Loss
from .trainer import (IterationRecord, TrainerConfig, emulate_microtasks,
                      merge_updates, run_training)
