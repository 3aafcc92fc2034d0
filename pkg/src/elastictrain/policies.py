"""Between-iteration decision policies.

Three planners produce chunk-move lists that the trainer applies while
the scheduler owns the chunks:

* ``plan_rebalance``: shift chunks from slow to fast workers using
  learned per-sample runtimes, a few moves per round.
* ``plan_scale_out``: seed new workers with randomly picked chunks from
  the most-loaded donors until loads are level.
* ``plan_scale_in``: evacuate doomed workers round-robin onto survivors.

Planners never mutate the assignment; they return moves for apply_moves.
"""

import math
import random
from collections import deque
from dataclasses import dataclass, field
from statistics import median
from typing import Dict, List, Optional, Sequence, Tuple

from .data import ChunkAssignment
from .errors import NoHistory, NoWorkersLeft, UnknownWorker

Move = Tuple[int, int, int]


@dataclass
class RebalanceConfig:
    """window: how many recent runtimes feed the median estimate.

    max_moves_per_round=None derives ceil(chunks / (10 * workers)) at
    planning time, spreading a full rebalance over roughly ten rounds.
    """

    window: int = 5
    max_moves_per_round: Optional[int] = None

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.max_moves_per_round is not None \
                and self.max_moves_per_round < 1:
            raise ValueError("max_moves_per_round must be >= 1")


@dataclass
class WorkerProfile:
    """Sliding runtime window and the derived per-sample time."""

    worker_id: int
    window: int = 5
    runtime_history: deque = field(default_factory=deque)
    per_sample_time: Optional[float] = None

    def __post_init__(self):
        self.runtime_history = deque(self.runtime_history,
                                     maxlen=self.window)

    def observe(self, runtime: float) -> None:
        if runtime < 0:
            raise ValueError("runtime must be non-negative")
        self.runtime_history.append(float(runtime))


def estimate_per_sample_time(profile: WorkerProfile,
                             samples_per_iteration: int) -> float:
    """Median of the runtime window divided by the samples each
    iteration processes.  The median keeps one straggler spike from
    poisoning the estimate."""
    if not profile.runtime_history:
        raise NoHistory(f"worker {profile.worker_id} has no runtimes")
    if samples_per_iteration < 1:
        raise ValueError("samples_per_iteration must be >= 1")
    est = median(profile.runtime_history) / samples_per_iteration
    profile.per_sample_time = est
    return est


def _owned_samples(assignment: ChunkAssignment,
                   counts: Dict[int, int]) -> Dict[int, int]:
    owned = {w: 0 for w in assignment.workers}
    for chunk_id, worker in assignment.owner.items():
        owned[worker] += counts[chunk_id]
    return owned


def plan_rebalance(profiles: Sequence[WorkerProfile],
                   assignment: ChunkAssignment,
                   chunk_sample_counts: Dict[int, int],
                   config: RebalanceConfig) -> List[Move]:
    """One round of slow-to-fast chunk moves.

    Workers are ranked by predicted runtime (per_sample_time times owned
    samples, ties broken by worker id).  Moves flow from the head of the
    ranking to the tail until either the round's move budget is spent or
    the predicted spread drops below the time the fastest worker needs
    for one average chunk (the stopping rule), at which point the plan
    is final and later rounds return empty.
    """
    workers = sorted(assignment.workers)
    pst = {}
    for profile in profiles:
        if profile.per_sample_time is None:
            raise NoHistory(
                f"worker {profile.worker_id} has no per-sample estimate")
        pst[profile.worker_id] = profile.per_sample_time
    for w in workers:
        if w not in pst:
            raise NoHistory(f"worker {w} is not profiled")
    if len(workers) < 2 or not assignment.owner:
        return []

    counts = dict(chunk_sample_counts)
    owned = _owned_samples(assignment, counts)
    pools = {w: sorted(assignment.chunks_of(w)) for w in workers}
    predicted = {w: pst[w] * owned[w] for w in workers}

    avg_chunk = sum(counts[c] for c in assignment.owner) \
        / len(assignment.owner)
    fastest_pst = min(pst[w] for w in workers)
    threshold = fastest_pst * avg_chunk

    budget = config.max_moves_per_round
    if budget is None:
        budget = math.ceil(len(assignment.owner) / (10 * len(workers)))
    moves: List[Move] = []
    for _ in range(budget):
        order = sorted(workers, key=lambda w: (-predicted[w], w))
        slow, fast = order[0], order[-1]
        if slow == fast or not pools[slow]:
            break
        if predicted[slow] - predicted[fast] < threshold:
            break
        # smallest chunk first: gentle steps avoid overshooting
        chunk = min(pools[slow], key=lambda c: (counts[c], c))
        new_fast = predicted[fast] + pst[fast] * counts[chunk]
        if new_fast >= predicted[slow]:
            break
        pools[slow].remove(chunk)
        pools[fast].append(chunk)
        predicted[slow] -= pst[slow] * counts[chunk]
        predicted[fast] = new_fast
        moves.append((chunk, slow, fast))
    return moves


def plan_scale_out(new_workers: Sequence[int],
                   assignment: ChunkAssignment, seed: int,
                   chunk_sample_counts: Optional[Dict[int, int]] = None
                   ) -> List[Move]:
    """Seed fresh workers by pulling random chunks off loaded donors.

    Loads are sample counts when chunk_sample_counts is given, chunk
    counts otherwise.  Each pick takes a seeded-random chunk from the
    currently most-loaded donor and hands it to the least-loaded new
    worker, while the move still strictly reduces the imbalance.
    """
    if not new_workers:
        return []
    incoming = sorted(set(new_workers))
    for w in incoming:
        if w in assignment.workers and assignment.chunks_of(w):
            raise ValueError(f"incoming worker {w} already owns chunks")
    old = sorted(w for w in assignment.workers if w not in incoming)
    if not old:
        return []

    if chunk_sample_counts is None:
        weight = {c: 1 for c in assignment.owner}
    else:
        weight = dict(chunk_sample_counts)
    pools = {w: sorted(c for c in assignment.owner
                       if assignment.owner[c] == w) for w in old}
    load = {w: sum(weight[c] for c in pools[w]) for w in old}
    for w in incoming:
        pools[w] = []
        load[w] = 0

    rng = random.Random(seed)
    moves: List[Move] = []
    while True:
        donor = max(old, key=lambda w: (load[w], -w))
        takers = [w for w in incoming]
        taker = min(takers, key=lambda w: (load[w], w))
        if not pools[donor]:
            break
        chunk = rng.choice(pools[donor])
        if load[taker] + weight[chunk] >= load[donor]:
            break
        pools[donor].remove(chunk)
        pools[taker].append(chunk)
        load[donor] -= weight[chunk]
        load[taker] += weight[chunk]
        moves.append((chunk, donor, taker))
    return moves


def plan_scale_in(removed_workers: Sequence[int],
                  assignment: ChunkAssignment) -> List[Move]:
    """Round-robin the doomed workers' chunks over the survivors.

    Chunks are taken in ascending id and dealt to survivors in ascending
    worker id, so the plan is a pure function of the ids involved.
    """
    removed = sorted(set(removed_workers))
    if not removed:
        return []
    for w in removed:
        if w not in assignment.workers:
            raise UnknownWorker(f"worker {w} is not part of the cluster")
    remaining = sorted(w for w in assignment.workers if w not in removed)
    if not remaining:
        raise NoWorkersLeft("cannot evacuate: no workers would remain")
    doomed = set(removed)
    pooled = sorted(c for c, w in assignment.owner.items() if w in doomed)
    return [(chunk, assignment.owner[chunk], remaining[k % len(remaining)])
            for k, chunk in enumerate(pooled)]
