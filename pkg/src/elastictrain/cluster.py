"""Virtual cluster: node roster, scripted elasticity events, a virtual
clock, and iteration-time projections for task-based scheduling.

Projections use exact rational arithmetic (``fractions.Fraction``) so the
published worked values are reproduced without rounding.  Total work is
normalized to 16 units by default: a reference-speed node processing
1/16th of the data takes one time unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import TooLarge, UnknownNode

DEFAULT_TOTAL_WORK = 16


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x)  # exact value of the float


@dataclass(frozen=True)
class NodeSpec:
    """A node and its relative speed (work units per time unit)."""

    node_id: int
    speed: float = 1.0

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"node {self.node_id}: speed must be positive")


@dataclass(frozen=True)
class AddNodes:
    nodes: tuple[NodeSpec, ...]


@dataclass(frozen=True)
class RemoveNodes:
    node_ids: tuple[int, ...]


@dataclass
class Scenario:
    """Initial node roster plus a time-ordered script of add/remove events."""

    initial_nodes: list[NodeSpec]
    events: list[tuple[float, "AddNodes | RemoveNodes"]] = field(default_factory=list)
    total_work_units: float = DEFAULT_TOTAL_WORK

    def __post_init__(self):
        times = [t for t, _ in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        if not self.initial_nodes:
            raise ValueError("scenario needs at least one initial node")


class VirtualClock:
    def __init__(self):
        self.now = 0.0

    def advance(self, dt):
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        self.now += dt


def advance_scenario(
    scenario: Scenario,
    clock: VirtualClock,
    live_nodes: dict[int, float],
    cursor: int = 0,
):
    """Fire every event scheduled at or before ``clock.now``.

    ``live_nodes`` maps node id to speed.  Returns ``(live_nodes,
    fired_events, cursor)``; the cursor marks how far into the event script
    the run has progressed, so each event fires exactly once.  Removal
    events are returned to the caller so chunks can be evacuated before the
    nodes disappear.
    """
    live = dict(live_nodes)
    fired = []
    while cursor < len(scenario.events) and scenario.events[cursor][0] <= clock.now:
        _, event = scenario.events[cursor]
        if isinstance(event, AddNodes):
            for node in event.nodes:
                live[node.node_id] = node.speed
        else:
            for node_id in event.node_ids:
                if node_id not in live:
                    raise UnknownNode(f"cannot remove unknown node {node_id}")
                del live[node_id]
            if not live:
                raise ValueError("scenario removed every node")
        fired.append(event)
        cursor += 1
    return live, fired, cursor


def microtask_iteration_time(K: int, N: int, total_work=DEFAULT_TOTAL_WORK) -> Fraction:
    """Iteration time for K equal tasks on N equal nodes.

    Only N tasks run at once, so an iteration needs ceil(K/N) task waves of
    total_work/K time units each.
    """
    if K < 1 or N < 1:
        raise ValueError("K and N must be at least 1")
    waves = -(-K // N)
    return _frac(total_work) / K * waves


def microtask_hetero_time(
    K: int,
    n_fast: int,
    n_slow: int,
    slow_factor,
    total_work=DEFAULT_TOTAL_WORK,
) -> Fraction:
    """Shortest iteration for K equal tasks on a two-speed cluster.

    Minimizes ``max(i * slow_factor, j) * total_work/K`` over per-node task
    counts ``i`` (slow) and ``j`` (fast) with ``n_slow*i + n_fast*j >= K``.
    Ties prefer the smaller makespan, then the smaller slow-node count.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if n_fast + n_slow < 1:
        raise ValueError("need at least one node")
    sf = _frac(slow_factor)
    if sf <= 1:
        raise ValueError("slow_factor must exceed 1")
    per_task = _frac(total_work) / K

    i_max = -(-K // n_slow) if n_slow else 0
    j_max = -(-K // n_fast) if n_fast else 0
    best = None
    best_i = None
    for i in range(i_max + 1):
        for j in range(j_max + 1):
            if n_slow * i + n_fast * j < K:
                continue
            load = max(i * sf, Fraction(j))
            if best is None or load < best or (load == best and i < best_i):
                best = load
                best_i = i
    return best * per_task


def unitask_balanced_time(speeds: Sequence, total_work=DEFAULT_TOTAL_WORK) -> Fraction:
    """Iteration time with work split proportionally to node speeds."""
    if not speeds:
        raise ValueError("speeds must be non-empty")
    return _frac(total_work) / sum(_frac(s) for s in speeds)


def brute_force_min_makespan(task_works: Sequence, speeds: Sequence) -> Fraction:
    """Exact minimum makespan over all task-to-node assignments.

    Independent oracle for the projection formulas; exhaustive search with
    branch-and-bound pruning, so instances must stay small (<= 12 tasks or
    <= 8 nodes).
    """
    if not task_works or not speeds:
        raise ValueError("need at least one task and one node")
    if len(task_works) > 12 and len(speeds) > 8:
        raise TooLarge(
            f"{len(task_works)} tasks on {len(speeds)} nodes is too large to enumerate"
        )
    works = sorted((_frac(w) for w in task_works), reverse=True)
    node_speeds = [_frac(s) for s in speeds]
    loads = [Fraction(0)] * len(node_speeds)

    best = [sum(works) / min(node_speeds)]  # everything on the slowest node

    def recurse(t: int, current_max: Fraction):
        if current_max >= best[0]:
            return
        if t == len(works):
            best[0] = current_max
            return
        seen = set()
        for n, speed in enumerate(node_speeds):
            key = (loads[n], speed)
            if key in seen:  # identical nodes are interchangeable
                continue
            seen.add(key)
            loads[n] += works[t]
            recurse(t + 1, max(current_max, loads[n] / speed))
            loads[n] -= works[t]

    recurse(0, Fraction(0))
    return best[0]
