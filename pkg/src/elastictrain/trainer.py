"""The driver: synchronous iteration loop, merging, elastic policies.

One logical control loop owns the model.  Each iteration broadcasts the
model, lets every worker solve on its chunks, merges the deltas with
sample-count weights and advances the virtual clock by the slowest
worker's runtime.  Between iterations the driver fires scenario events
(scale in/out) and consults the rebalancer; chunk moves happen only in
that window, while the scheduler owns the chunks.

``emulate_microtasks`` runs the same math over K fixed partitions and
projects iteration times onto N nodes with the wave formula, so the
per-epoch trajectory depends on (K, seed) only.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cluster import (AddNodes, RemoveNodes, Scenario, VirtualClock,
                      advance_scenario, microtask_hetero_time,
                      microtask_iteration_time)
from .data import (ChunkAssignment, DataChunk, Model, OwnershipContract,
                   OwnershipPhase, apply_moves, partition_into_chunks)
from .errors import (EmptyDataset, IterationFailed, NoWork, NoWorkersLeft,
                     StateMissing, WorkerUnavailable)
from .policies import (RebalanceConfig, WorkerProfile, plan_rebalance,
                       plan_scale_in, plan_scale_out)
from .solvers import (HyperParams, LocalView, LocalUpdate, Loss,
                      dual_objective, effective_lr, evaluate,
                      primal_objective)
from .transport import (AddChunk, BroadcastModel, FetchDuals,
                        InProcessTransport, StartIteration, TakeChunk,
                        dispatch)

# stop an SGD run once the metric has not improved for this many records
PLATEAU_WINDOW = 10
_MAX_ITERATIONS = 200_000


@dataclass(frozen=True)
class TrainerConfig:
    """micro_tasks=None runs one task per node; an integer K fixes the
    partition count independently of the node count."""

    hp: HyperParams
    convergence_target: float
    max_epochs: float
    seed: int
    micro_tasks: Optional[int] = None

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.micro_tasks is not None and self.micro_tasks < 1:
            raise ValueError("micro_tasks must be >= 1")

    @property
    def algorithm(self) -> str:
        return "scd" if self.hp.loss is Loss.HINGE else "sgd"


@dataclass
class IterationRecord:
    iteration: int
    epoch_progress: float
    metric: float
    virtual_time: float
    worker_ids: Tuple[int, ...]
    per_worker_runtime: Tuple[float, ...]
    per_worker_chunks: Tuple[int, ...]


def merge_updates(updates: Sequence[LocalUpdate],
                  total_processed: int) -> np.ndarray:
    """Sample-count-weighted average of the worker deltas.

    Updates are reduced in ascending worker id so the float sum is
    identical no matter how the caller collected them.
    """
    if not updates:
        raise ValueError("updates must be non-empty")
    if total_processed == 0:
        raise NoWork("no samples were processed")
    if total_processed != sum(u.samples_processed for u in updates):
        raise ValueError("total_processed does not match the updates")
    ordered = sorted(updates, key=lambda u: u.worker_id)
    delta = np.zeros_like(ordered[0].delta_weights)
    for u in ordered:
        delta += (u.samples_processed / total_processed) * u.delta_weights
    return delta


def child_seed(*parts: int) -> int:
    """Stable derived seed from a tuple of integers."""
    entropy = [int(p) & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(
        1, dtype=np.uint64)[0])


class ClusterHandle:
    """Driver-side bundle: transport, clock, chunk mirror, contract."""

    def __init__(self, transport, scenario: Scenario, n_total: int,
                 dimension: int):
        self.transport = transport
        self.contract = OwnershipContract()
        self.clock = VirtualClock()
        self.scenario = scenario
        self.cursor = 0
        self.speeds: Dict[int, float] = {}
        self.mirror: Dict[int, DataChunk] = {}
        self.n_total = n_total
        self.dimension = dimension
        self.total_work = float(scenario.total_work_units)
        self.progress = 0.0
        self.last_processed: Dict[int, int] = {}
        self._full_view: Optional[LocalView] = None

    def sample_counts(self) -> Dict[int, int]:
        return {cid: len(chunk.samples)
                for cid, chunk in self.mirror.items()}

    def full_view(self) -> LocalView:
        if self._full_view is None:
            ordered = [self.mirror[c] for c in sorted(self.mirror)]
            self._full_view = LocalView(ordered, self.dimension)
        return self._full_view

    def unit_time_per_sample(self) -> float:
        return self.total_work / self.n_total


def _collect_duals(handle: ClusterHandle,
                   assignment: ChunkAssignment) -> np.ndarray:
    """Dual vector over all chunks in ascending chunk id, fetched from
    whichever worker holds each chunk."""
    by_chunk: Dict[int, np.ndarray] = {}
    for w in sorted(assignment.workers):
        ids = assignment.chunks_of(w)
        if not ids:
            continue
        reply = dispatch(handle.transport.handle_for(w),
                         FetchDuals(tuple(ids)))
        by_chunk.update(reply.duals)
    view = handle.full_view()
    return np.concatenate([by_chunk[c.chunk_id] for c in view.chunks])


def _transport_gap(handle: ClusterHandle, model: Model,
                   assignment: ChunkAssignment, lam: float) -> float:
    view = handle.full_view()
    view.duals = _collect_duals(handle, assignment)
    return primal_objective(model, view, lam) - dual_objective(view, lam)


def run_iteration(handle: ClusterHandle, model: Model,
                  config: TrainerConfig,
                  assignment: ChunkAssignment
                  ) -> Tuple[Model, IterationRecord]:
    """One synchronous round: broadcast, solve everywhere, merge, score."""
    workers = sorted(assignment.workers)
    if not workers:
        raise NoWorkersLeft("no workers to run on")
    hp = config.hp
    owned = {w: sum(len(handle.mirror[c].samples)
                    for c in assignment.chunks_of(w)) for w in workers}
    handle.contract.begin_iteration()
    try:
        updates: List[LocalUpdate] = []
        try:
            for w in workers:
                dispatch(handle.transport.handle_for(w),
                         BroadcastModel(model))
            for w in workers:
                steps = None
                lr = None
                if config.algorithm == "sgd":
                    lr = effective_lr(hp.base_lr, len(workers))
                    share = owned[w] * len(workers) / handle.n_total
                    steps = max(1, round(hp.H * share))
                msg = StartIteration(
                    iteration=model.iteration,
                    algorithm=config.algorithm, hp=hp,
                    n_total=handle.n_total,
                    seed=child_seed(config.seed, 0, model.iteration, w),
                    steps=steps, lr=lr)
                reply = dispatch(handle.transport.handle_for(w), msg)
                updates.append(reply.update)
        except (WorkerUnavailable, StateMissing, ConnectionError) as exc:
            raise IterationFailed(str(exc)) from exc
        total = sum(u.samples_processed for u in updates)
        delta = merge_updates(updates, total)
        new_model = Model(model.weights + delta, model.iteration + 1)
        if config.algorithm == "scd":
            metric = _transport_gap(handle, new_model, assignment, hp.lam)
        else:
            _, metric = evaluate(new_model, handle.full_view(), hp.loss)
    finally:
        handle.contract.end_iteration()
    unit = handle.unit_time_per_sample()
    runtimes = tuple(u.samples_processed * unit / handle.speeds[w]
                     for w, u in zip(workers, updates))
    handle.clock.advance(max(runtimes))
    handle.progress += total / handle.n_total
    handle.last_processed = {w: u.samples_processed
                             for w, u in zip(workers, updates)}
    record = IterationRecord(
        iteration=new_model.iteration,
        epoch_progress=handle.progress,
        metric=metric,
        virtual_time=handle.clock.now,
        worker_ids=tuple(workers),
        per_worker_runtime=runtimes,
        per_worker_chunks=tuple(len(assignment.chunks_of(w))
                                for w in workers))
    return new_model, record


def _apply_plan(handle: ClusterHandle, assignment: ChunkAssignment,
                moves) -> ChunkAssignment:
    """Validate a move plan, then physically relocate the chunks."""
    if not moves:
        return assignment
    new_assignment = apply_moves(assignment, moves, handle.contract.phase)
    for chunk_id, source, target in moves:
        reply = dispatch(handle.transport.handle_for(source),
                         TakeChunk(chunk_id))
        handle.mirror[chunk_id] = reply.chunk
        dispatch(handle.transport.handle_for(target),
                 AddChunk(reply.chunk))
    return new_assignment


def _fire_events(handle: ClusterHandle, assignment: ChunkAssignment,
                 live: Dict[int, float], events,
                 profiles: Dict[int, WorkerProfile],
                 rebalance: RebalanceConfig, seed_tag: int
                 ) -> ChunkAssignment:
    for event in events:
        if isinstance(event, RemoveNodes):
            removed = list(event.node_ids)
            moves = plan_scale_in(removed, assignment)
            assignment = _apply_plan(handle, assignment, moves)
            for node_id in removed:
                handle.transport.remove_worker(node_id)
                assignment.drop_worker(node_id)
                handle.speeds.pop(node_id, None)
                profiles.pop(node_id, None)
        elif isinstance(event, AddNodes):
            fresh = []
            for spec in event.nodes:
                handle.transport.add_worker(spec.node_id)
                assignment.register_worker(spec.node_id)
                handle.speeds[spec.node_id] = spec.speed
                profiles[spec.node_id] = WorkerProfile(
                    spec.node_id, rebalance.window)
                fresh.append(spec.node_id)
            moves = plan_scale_out(fresh, assignment,
                                   child_seed(seed_tag, 1, len(fresh)),
                                   handle.sample_counts())
            assignment = _apply_plan(handle, assignment, moves)
    return assignment


def _maybe_rebalance(handle: ClusterHandle, assignment: ChunkAssignment,
                     ratio_history: Dict[int, List[float]],
                     profiles: Dict[int, WorkerProfile],
                     rebalance: RebalanceConfig) -> ChunkAssignment:
    workers = sorted(assignment.workers)
    if len(workers) < 2:
        return assignment
    for w in workers:
        history = ratio_history.get(w)
        if not history:
            return assignment
        profiles[w].per_sample_time = float(np.median(history))
    moves = plan_rebalance([profiles[w] for w in workers], assignment,
                           handle.sample_counts(), rebalance)
    return _apply_plan(handle, assignment, moves)


def _converged(config: TrainerConfig,
               records: List[IterationRecord]) -> bool:
    if not records:
        return False
    metric = records[-1].metric
    if config.algorithm == "scd":
        return metric <= config.convergence_target
    if metric >= config.convergence_target:
        return True
    if len(records) > PLATEAU_WINDOW:
        recent = [r.metric for r in records[-PLATEAU_WINDOW:]]
        best_before = max(r.metric
                          for r in records[:-PLATEAU_WINDOW])
        if max(recent) <= best_before + 1e-12:
            return True
    return False


def run_training(config: TrainerConfig, scenario: Scenario,
                 dataset, chunk_capacity_bytes: int,
                 transport=None,
                 rebalance: Optional[RebalanceConfig] = None,
                 rebalance_enabled: bool = True
                 ) -> List[IterationRecord]:
    """Full elastic run in virtual time; returns one record per
    iteration.  Deterministic given config.seed."""
    if not dataset:
        raise EmptyDataset("dataset is empty")
    rebalance = rebalance or RebalanceConfig()
    with_duals = config.hp.loss is Loss.HINGE
    chunks = partition_into_chunks(dataset, chunk_capacity_bytes,
                                   config.seed,
                                   with_dual_state=with_duals)
    dimension = max((idx for s in dataset for idx, _ in s.features),
                    default=-1) + 1
    if dimension == 0:
        dimension = 1
    owns_transport = transport is None
    if transport is None:
        transport = InProcessTransport()
    handle = ClusterHandle(transport, scenario, len(dataset), dimension)
    try:
        return _training_loop(handle, config, scenario, chunks,
                              rebalance, rebalance_enabled)
    finally:
        if owns_transport:
            transport.close()


def _training_loop(handle: ClusterHandle, config: TrainerConfig,
                   scenario: Scenario, chunks: List[DataChunk],
                   rebalance: RebalanceConfig,
                   rebalance_enabled: bool) -> List[IterationRecord]:
    assignment = ChunkAssignment()
    live = {}
    for spec in scenario.initial_nodes:
        handle.transport.add_worker(spec.node_id)
        assignment.register_worker(spec.node_id)
        handle.speeds[spec.node_id] = spec.speed
        live[spec.node_id] = spec.speed
    initial_workers = sorted(live)
    for k, chunk in enumerate(sorted(chunks, key=lambda c: c.chunk_id)):
        owner = initial_workers[k % len(initial_workers)]
        assignment.owner[chunk.chunk_id] = owner
        handle.mirror[chunk.chunk_id] = chunk
        dispatch(handle.transport.handle_for(owner), AddChunk(chunk))

    profiles = {w: WorkerProfile(w, rebalance.window)
                for w in initial_workers}
    ratio_history: Dict[int, List[float]] = {w: [] for w in initial_workers}
    model = Model(np.zeros(handle.dimension))
    records: List[IterationRecord] = []
    while (handle.progress < config.max_epochs
           and len(records) < _MAX_ITERATIONS):
        live, fired, handle.cursor = advance_scenario(
            scenario, handle.clock, live, handle.cursor)
        if fired:
            assignment = _fire_events(handle, assignment, live, fired,
                                      profiles, rebalance, config.seed)
            ratio_history = {w: ratio_history.get(w, [])
                             for w in assignment.workers}
        if rebalance_enabled:
            assignment = _maybe_rebalance(handle, assignment,
                                          ratio_history, profiles,
                                          rebalance)
        model, record = run_iteration(handle, model, config, assignment)
        records.append(record)
        for w, runtime in zip(record.worker_ids,
                              record.per_worker_runtime):
            processed = handle.last_processed.get(w, 0)
            profiles[w].observe(runtime)
            if processed > 0:
                history = ratio_history.setdefault(w, [])
                history.append(runtime / processed)
                del history[:-rebalance.window]
        if _converged(config, records):
            break
    return records


def _partition_fixed(dataset, k: int, seed: int,
                     with_duals: bool) -> List[DataChunk]:
    """K near-equal partitions after a seeded shuffle; a pure function
    of (dataset, K, seed)."""
    import random as _random

    order = list(range(len(dataset)))
    _random.Random(seed).shuffle(order)
    base, extra = divmod(len(dataset), k)
    partitions = []
    at = 0
    for p in range(k):
        size = base + (1 if p < extra else 0)
        samples = [dataset[i] for i in order[at:at + size]]
        at += size
        chunk = DataChunk(p, samples,
                          [0.0] * len(samples) if with_duals else None)
        partitions.append(chunk)
    return partitions


def _wave_time(k: int, speeds: Sequence[float],
               total_work: float) -> float:
    """Iteration time for K gang-scheduled tasks on the given nodes."""
    classes = sorted(set(speeds), reverse=True)
    if len(classes) == 1:
        base = microtask_iteration_time(k, len(speeds), total_work)
        return float(base) / classes[0]
    if len(classes) == 2:
        fast, slow = classes
        n_fast = sum(1 for s in speeds if s == fast)
        n_slow = len(speeds) - n_fast
        base = microtask_hetero_time(k, n_fast, n_slow, fast / slow,
                                     total_work)
        return float(base) / fast
    raise ValueError("wave projection supports at most two speed classes")


def emulate_microtasks(config: TrainerConfig, dataset,
                       nodes: Union[int, Scenario]
                       ) -> List[IterationRecord]:
    """Micro-task run: K fixed partitions solved every iteration, with
    iteration time projected onto the (possibly changing) node roster.
    The metric trajectory depends only on (K, seed)."""
    if config.micro_tasks is None:
        raise ValueError("config.micro_tasks must be set")
    if not dataset:
        raise EmptyDataset("dataset is empty")
    k = config.micro_tasks
    if len(dataset) < k:
        raise EmptyDataset(f"need at least {k} samples for {k} tasks")
    hp = config.hp
    with_duals = hp.loss is Loss.HINGE
    partitions = _partition_fixed(dataset, k, config.seed, with_duals)
    dimension = max((idx for s in dataset for idx, _ in s.features),
                    default=-1) + 1
    if dimension == 0:
        dimension = 1
    n_total = len(dataset)

    if isinstance(nodes, Scenario):
        scenario = nodes
    else:
        from .cluster import NodeSpec

        scenario = Scenario([NodeSpec(i) for i in range(nodes)], [])
    clock = VirtualClock()
    live = {s.node_id: s.speed for s in scenario.initial_nodes}
    cursor = 0
    total_work = float(scenario.total_work_units)

    from .solvers import scd_local_solve, sgd_local_solve

    views = [LocalView([p], dimension, with_duals=with_duals)
             for p in partitions]
    full_view = LocalView(partitions, dimension)
    model = Model(np.zeros(dimension))
    records: List[IterationRecord] = []
    progress = 0.0
    while progress < config.max_epochs and len(records) < _MAX_ITERATIONS:
        live, _, cursor = advance_scenario(scenario, clock, live, cursor)
        updates = []
        for p, partition in enumerate(partitions):
            seed = child_seed(config.seed, 0, model.iteration, p)
            if config.algorithm == "scd":
                update = scd_local_solve([partition], model, hp, n_total,
                                         len(partition.samples), seed,
                                         view=views[p])
            else:
                update = sgd_local_solve([partition], model, hp, seed,
                                         lr=effective_lr(hp.base_lr, k),
                                         view=views[p])
            update.worker_id = p
            update.iteration = model.iteration
            updates.append(update)
        total = sum(u.samples_processed for u in updates)
        delta = merge_updates(updates, total)
        model = Model(model.weights + delta, model.iteration + 1)
        if config.algorithm == "scd":
            full_view.duals = np.concatenate([v.duals for v in views])
            metric = primal_objective(model, full_view, hp.lam) \
                - dual_objective(full_view, hp.lam)
        else:
            _, metric = evaluate(model, full_view, hp.loss)
        speeds = [live[n] for n in sorted(live)]
        iter_time = _wave_time(k, speeds, total_work)
        clock.advance(iter_time)
        progress += total / n_total
        node_ids = sorted(live)
        n_nodes = len(node_ids)
        records.append(IterationRecord(
            iteration=model.iteration,
            epoch_progress=progress,
            metric=metric,
            virtual_time=clock.now,
            worker_ids=tuple(node_ids),
            per_worker_runtime=tuple(iter_time for _ in node_ids),
            per_worker_chunks=tuple(
                sum(1 for p in range(k) if p % n_nodes == i)
                for i in range(n_nodes))))
        if _converged(config, records):
            break
    return records
