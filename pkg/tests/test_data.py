"""Core data structures: samples, chunks, packing, ownership."""

import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastictrain.data import (ChunkAssignment, DataChunk, Model,
                               OwnershipContract, OwnershipPhase, Sample,
                               apply_moves, chunk_size_table,
                               partition_into_chunks, sample_byte_size,
                               worker_sample_count)
from elastictrain.errors import (ContractViolation, EmptyDataset,
                                 InvalidMove, UnknownWorker)


def oracle_sample_bytes(n_features: int, with_dual: bool) -> int:
    # 4 bytes per index, 8 per value, 8 for the label, 8 per dual entry
    return n_features * 12 + 8 + (8 if with_dual else 0)


def make_sample(i: int, nnz: int = 3) -> Sample:
    feats = tuple((j * 2, float(j + 1)) for j in range(nnz))
    return Sample(i, feats, 1.0 if i % 2 == 0 else -1.0)


def test_sample_byte_size_matches_accounting():
    s = Sample(0, ((0, 1.0), (4, 2.0)), 1.0)
    assert s.byte_size == oracle_sample_bytes(2, False) == 32
    assert sample_byte_size(s, with_dual_state=True) == 40


def test_sample_rejects_unsorted_indices():
    with pytest.raises(ValueError):
        Sample(0, ((3, 1.0), (2, 1.0)), 1.0)
    with pytest.raises(ValueError):
        Sample(0, ((2, 1.0), (2, 1.0)), 1.0)


def test_sample_rejects_negative_id():
    with pytest.raises(ValueError):
        Sample(-1, ((0, 1.0),), 1.0)


def test_model_rejects_non_finite_weights():
    with pytest.raises(ValueError):
        Model(np.array([1.0, float("nan")]))


def test_partition_respects_capacity():
    ds = [make_sample(i) for i in range(100)]
    per = sample_byte_size(ds[0])
    chunks = partition_into_chunks(ds, capacity_bytes=per * 7, seed=1)
    for c in chunks:
        assert c.byte_size <= per * 7
        assert len(c) <= 7


def test_partition_conserves_and_ids_dense():
    ds = [make_sample(i) for i in range(57)]
    chunks = partition_into_chunks(ds, 200, seed=3)
    assert [c.chunk_id for c in chunks] == list(range(len(chunks)))
    seen = sorted(sid for c in chunks for sid in c.sample_ids())
    assert seen == list(range(57))


def test_partition_empty_dataset():
    with pytest.raises(EmptyDataset):
        partition_into_chunks([], 100, seed=0)


def test_partition_oversized_sample_gets_own_chunk():
    big = Sample(0, tuple((j, 1.0) for j in range(50)), 1.0)
    small = make_sample(1)
    chunks = partition_into_chunks([big, small], capacity_bytes=64,
                                   seed=0)
    holders = [c for c in chunks if 0 in c.sample_ids()]
    assert len(holders) == 1 and len(holders[0]) == 1


def test_partition_seed_changes_shuffle_not_content():
    ds = [make_sample(i) for i in range(40)]
    a = partition_into_chunks(ds, 150, seed=1)
    b = partition_into_chunks(ds, 150, seed=1)
    c = partition_into_chunks(ds, 150, seed=2)
    assert [x.sample_ids() for x in a] == [x.sample_ids() for x in b]
    assert {s for x in c for s in x.sample_ids()} == set(range(40))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 80), cap_samples=st.integers(1, 9),
       seed=st.integers(0, 999))
def test_partition_multiset_conservation(n, cap_samples, seed):
    ds = [make_sample(i) for i in range(n)]
    cap = sample_byte_size(ds[0]) * cap_samples
    chunks = partition_into_chunks(ds, cap, seed=seed)
    seen = collections.Counter(s for c in chunks for s in c.sample_ids())
    assert seen == collections.Counter(range(n))


def test_dual_state_sized_with_chunk():
    ds = [make_sample(i) for i in range(10)]
    chunks = partition_into_chunks(ds, 10_000, seed=0,
                                   with_dual_state=True)
    (chunk,) = chunks
    assert chunk.has_dual_state
    assert len(chunk.dual_state) == 10
    # dual entries count toward the chunk's serialized size
    assert chunk.byte_size == sum(
        sample_byte_size(s, True) for s in chunk.samples)


def test_dual_view_requires_task_ownership():
    chunk = DataChunk(0, [make_sample(0)], [0.0])
    view = chunk.dual_view(OwnershipPhase.TASK_OWNED)
    view[0] = 0.5
    assert chunk.dual_state[0] == 0.5
    with pytest.raises(ContractViolation):
        chunk.dual_view(OwnershipPhase.SCHEDULER_OWNED)


def test_contract_alternates_phases():
    contract = OwnershipContract()
    assert contract.phase is OwnershipPhase.SCHEDULER_OWNED
    contract.begin_iteration()
    assert contract.phase is OwnershipPhase.TASK_OWNED
    with pytest.raises(ContractViolation):
        contract.begin_iteration()
    contract.end_iteration()
    assert contract.phase is OwnershipPhase.SCHEDULER_OWNED
    with pytest.raises(ContractViolation):
        contract.end_iteration()


def _assignment():
    a = ChunkAssignment()
    for w in (1, 2, 3):
        a.register_worker(w)
    a.owner.update({0: 1, 1: 1, 2: 2, 3: 3})
    return a


def test_moves_only_while_scheduler_owned():
    a = _assignment()
    moves = [(0, 1, 2)]
    with pytest.raises(ContractViolation):
        apply_moves(a, moves, OwnershipPhase.TASK_OWNED)
    b = apply_moves(a, moves, OwnershipPhase.SCHEDULER_OWNED)
    assert b.owner_of(0) == 2
    assert a.owner_of(0) == 1  # original untouched


def test_move_must_name_current_owner():
    a = _assignment()
    with pytest.raises(InvalidMove):
        apply_moves(a, [(0, 2, 3)], OwnershipPhase.SCHEDULER_OWNED)


def test_move_to_unknown_worker():
    a = _assignment()
    with pytest.raises(UnknownWorker):
        apply_moves(a, [(0, 1, 9)], OwnershipPhase.SCHEDULER_OWNED)


def test_sequential_moves_validate_against_intermediate_state():
    a = _assignment()
    b = apply_moves(a, [(0, 1, 2), (0, 2, 3)],
                    OwnershipPhase.SCHEDULER_OWNED)
    assert b.owner_of(0) == 3


def test_chunks_of_unknown_worker():
    a = _assignment()
    with pytest.raises(UnknownWorker):
        a.chunks_of(99)


def test_drop_worker_requires_empty():
    a = _assignment()
    with pytest.raises(InvalidMove):
        a.drop_worker(1)
    b = apply_moves(a, [(0, 1, 2), (1, 1, 2)],
                    OwnershipPhase.SCHEDULER_OWNED)
    b.drop_worker(1)
    assert 1 not in b.workers


def test_worker_sample_count():
    a = _assignment()
    ds = [make_sample(i) for i in range(8)]
    table = {0: DataChunk(0, ds[:3]), 1: DataChunk(1, ds[3:4]),
             2: DataChunk(2, ds[4:6]), 3: DataChunk(3, ds[6:])}
    assert worker_sample_count(a, table, 1) == 4
    assert worker_sample_count(a, table, 2) == 2
    sizes = chunk_size_table(table.values())
    assert worker_sample_count(a, sizes, 1) == 4
    a.register_worker(7)
    assert worker_sample_count(a, sizes, 7) == 0
