"""Worker handles and two interchangeable transports.

The driver talks to workers through request/reply messages only; every
message is a snapshot, so a run behaves identically whether the workers
live in the driver process or behind a socket.  The socket transport
runs one thread per worker over a local stream socket pair using the
wire framing; it exists to prove the message protocol is complete, and
any run must produce records identical to the in-process transport.
"""

import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import errors as errors_mod
from . import wire
from .data import DataChunk, Model, OwnershipPhase
from .errors import StateMissing, UnknownWorker, WorkerUnavailable
from .solvers import (HyperParams, LocalUpdate, scd_local_solve,
                      sgd_local_solve)


@dataclass(frozen=True)
class BroadcastModel:
    model: Model


@dataclass(frozen=True)
class StartIteration:
    iteration: int
    algorithm: str  # "scd" or "sgd"
    hp: HyperParams
    n_total: int
    seed: int
    steps: Optional[int] = None
    lr: Optional[float] = None


@dataclass(frozen=True)
class FetchModel:
    pass


@dataclass(frozen=True)
class AddChunk:
    chunk: DataChunk


@dataclass(frozen=True)
class TakeChunk:
    chunk_id: int


@dataclass(frozen=True)
class FetchDuals:
    chunk_ids: Tuple[int, ...]


@dataclass(frozen=True)
class Shutdown:
    pass


@dataclass(frozen=True)
class Ack:
    pass


@dataclass(frozen=True)
class IterationFinished:
    update: LocalUpdate


@dataclass(frozen=True)
class ModelPayload:
    model: Model


@dataclass(frozen=True)
class ChunkPayload:
    chunk: DataChunk


@dataclass(frozen=True)
class DualsPayload:
    duals: Dict[int, np.ndarray]


class Worker:
    """One task: holds its chunks, solves on request."""

    def __init__(self, worker_id: int):
        self.worker_id = worker_id
        self.chunks: Dict[int, DataChunk] = {}
        self.model: Optional[Model] = None

    def handle(self, msg):
        if isinstance(msg, BroadcastModel):
            self.model = msg.model.copy()
            return Ack()
        if isinstance(msg, StartIteration):
            return IterationFinished(self._solve(msg))
        if isinstance(msg, FetchModel):
            if self.model is None:
                raise StateMissing("no model broadcast yet")
            return ModelPayload(self.model.copy())
        if isinstance(msg, AddChunk):
            self.chunks[msg.chunk.chunk_id] = msg.chunk
            return Ack()
        if isinstance(msg, TakeChunk):
            if msg.chunk_id not in self.chunks:
                raise StateMissing(
                    f"worker {self.worker_id} holds no chunk "
                    f"{msg.chunk_id}")
            return ChunkPayload(self.chunks.pop(msg.chunk_id))
        if isinstance(msg, FetchDuals):
            out = {}
            for cid in msg.chunk_ids:
                chunk = self.chunks.get(cid)
                if chunk is None or chunk.dual_state is None:
                    raise StateMissing(
                        f"no dual state for chunk {cid} on worker "
                        f"{self.worker_id}")
                out[cid] = np.array(chunk.dual_state, dtype=np.float64)
            return DualsPayload(out)
        if isinstance(msg, Shutdown):
            return Ack()
        raise TypeError(f"unknown message {type(msg).__name__}")

    def _solve(self, msg: StartIteration) -> LocalUpdate:
        if self.model is None:
            raise StateMissing("no model broadcast yet")
        ordered = [self.chunks[c] for c in sorted(self.chunks)]
        if not ordered:
            # a freshly added (or fully drained) task still answers the
            # barrier; it just contributes no samples to the merge
            return LocalUpdate(np.zeros(self.model.dimension), 0,
                               worker_id=self.worker_id,
                               iteration=msg.iteration)
        if msg.algorithm == "scd":
            steps = msg.steps
            if steps is None:
                steps = sum(len(c.samples) for c in ordered)
            update = scd_local_solve(ordered, self.model, msg.hp,
                                     msg.n_total, steps, msg.seed,
                                     phase=OwnershipPhase.TASK_OWNED)
        elif msg.algorithm == "sgd":
            update = sgd_local_solve(ordered, self.model, msg.hp,
                                     msg.seed, steps=msg.steps,
                                     lr=msg.lr)
        else:
            raise ValueError(f"unknown algorithm {msg.algorithm!r}")
        update.worker_id = self.worker_id
        update.iteration = msg.iteration
        return update


def dispatch(worker_handle, message):
    """Request/reply against one worker handle."""
    return worker_handle.dispatch(message)


class InProcessHandle:
    def __init__(self, worker: Worker):
        self.worker = worker
        self.alive = True

    def dispatch(self, message):
        if not self.alive:
            raise WorkerUnavailable(
                f"worker {self.worker.worker_id} is gone")
        return self.worker.handle(message)

    def close(self):
        self.alive = False


class InProcessTransport:
    """Direct method-call transport; the default for simulations."""

    def __init__(self):
        self.handles: Dict[int, InProcessHandle] = {}

    def add_worker(self, worker_id: int) -> InProcessHandle:
        if worker_id in self.handles:
            raise ValueError(f"worker {worker_id} already exists")
        handle = InProcessHandle(Worker(worker_id))
        self.handles[worker_id] = handle
        return handle

    def handle_for(self, worker_id: int):
        if worker_id not in self.handles:
            raise UnknownWorker(f"no worker {worker_id}")
        return self.handles[worker_id]

    def remove_worker(self, worker_id: int) -> None:
        handle = self.handle_for(worker_id)
        handle.dispatch(Shutdown())
        handle.close()
        del self.handles[worker_id]

    def worker_ids(self):
        return sorted(self.handles)

    def close(self):
        for worker_id in list(self.handles):
            self.remove_worker(worker_id)


# ---------------------------------------------------------------------
# socket transport

_REQUEST_CODECS = {
    wire.TAG_BROADCAST_MODEL: BroadcastModel,
    wire.TAG_START_ITERATION: StartIteration,
    wire.TAG_FETCH_MODEL: FetchModel,
    wire.TAG_ADD_CHUNK: AddChunk,
    wire.TAG_TAKE_CHUNK: TakeChunk,
    wire.TAG_FETCH_DUALS: FetchDuals,
    wire.TAG_SHUTDOWN: Shutdown,
}


def encode_request(msg) -> bytes:
    if isinstance(msg, BroadcastModel):
        return wire.frame(wire.TAG_BROADCAST_MODEL,
                          wire.encode_model(msg.model))
    if isinstance(msg, StartIteration):
        algo = 0 if msg.algorithm == "scd" else 1
        steps = -1 if msg.steps is None else msg.steps
        has_lr = msg.lr is not None
        payload = struct.pack(">qB", msg.iteration, algo) \
            + wire.encode_hyperparams(msg.hp) \
            + struct.pack(">IqQBd", msg.n_total, steps, msg.seed,
                          1 if has_lr else 0,
                          msg.lr if has_lr else 0.0)
        return wire.frame(wire.TAG_START_ITERATION, payload)
    if isinstance(msg, FetchModel):
        return wire.frame(wire.TAG_FETCH_MODEL, b"")
    if isinstance(msg, AddChunk):
        return wire.frame(wire.TAG_ADD_CHUNK, wire.encode_chunk(msg.chunk))
    if isinstance(msg, TakeChunk):
        return wire.frame(wire.TAG_TAKE_CHUNK,
                          struct.pack(">q", msg.chunk_id))
    if isinstance(msg, FetchDuals):
        payload = struct.pack(">I", len(msg.chunk_ids)) \
            + b"".join(struct.pack(">q", c) for c in msg.chunk_ids)
        return wire.frame(wire.TAG_FETCH_DUALS, payload)
    if isinstance(msg, Shutdown):
        return wire.frame(wire.TAG_SHUTDOWN, b"")
    raise TypeError(f"not a request: {type(msg).__name__}")


def decode_request(tag: int, payload: bytes):
    if tag == wire.TAG_BROADCAST_MODEL:
        return BroadcastModel(wire.decode_model(payload))
    if tag == wire.TAG_START_ITERATION:
        r = wire._Reader(payload)
        iteration, algo = r.take("qB")
        hp = wire.decode_hyperparams(r)
        n_total, steps, seed, has_lr, lr = r.take("IqQBd")
        return StartIteration(iteration=iteration,
                              algorithm="scd" if algo == 0 else "sgd",
                              hp=hp, n_total=n_total, seed=seed,
                              steps=None if steps < 0 else steps,
                              lr=lr if has_lr else None)
    if tag == wire.TAG_FETCH_MODEL:
        return FetchModel()
    if tag == wire.TAG_ADD_CHUNK:
        return AddChunk(wire.decode_chunk(payload))
    if tag == wire.TAG_TAKE_CHUNK:
        return TakeChunk(struct.unpack(">q", payload)[0])
    if tag == wire.TAG_FETCH_DUALS:
        r = wire._Reader(payload)
        count = r.take("I")
        return FetchDuals(tuple(r.take("q") for _ in range(count)))
    if tag == wire.TAG_SHUTDOWN:
        return Shutdown()
    raise ValueError(f"unknown request tag {tag:#06x}")


def encode_reply(msg) -> bytes:
    if isinstance(msg, Ack):
        return wire.frame(wire.TAG_ACK, b"")
    if isinstance(msg, IterationFinished):
        return wire.frame(wire.TAG_ITERATION_FINISHED,
                          wire.encode_update(msg.update))
    if isinstance(msg, ModelPayload):
        return wire.frame(wire.TAG_MODEL_PAYLOAD,
                          wire.encode_model(msg.model))
    if isinstance(msg, ChunkPayload):
        return wire.frame(wire.TAG_CHUNK_PAYLOAD,
                          wire.encode_chunk(msg.chunk))
    if isinstance(msg, DualsPayload):
        parts = [struct.pack(">I", len(msg.duals))]
        for cid in sorted(msg.duals):
            arr = np.ascontiguousarray(msg.duals[cid], dtype=">f8")
            parts.append(struct.pack(">qI", cid, arr.shape[0]))
            parts.append(arr.tobytes())
        return wire.frame(wire.TAG_DUALS_PAYLOAD, b"".join(parts))
    raise TypeError(f"not a reply: {type(msg).__name__}")


def decode_reply(tag: int, payload: bytes):
    if tag == wire.TAG_ACK:
        return Ack()
    if tag == wire.TAG_ITERATION_FINISHED:
        return IterationFinished(wire.decode_update(payload))
    if tag == wire.TAG_MODEL_PAYLOAD:
        return ModelPayload(wire.decode_model(payload))
    if tag == wire.TAG_CHUNK_PAYLOAD:
        return ChunkPayload(wire.decode_chunk(payload))
    if tag == wire.TAG_DUALS_PAYLOAD:
        r = wire._Reader(payload)
        count = r.take("I")
        duals = {}
        for _ in range(count):
            cid, n = r.take("qI")
            duals[cid] = r.take_f64_array(n)
        return DualsPayload(duals)
    if tag == wire.TAG_ERROR:
        kind, message = wire.decode_error(payload)
        exc = getattr(errors_mod, kind, None)
        if exc is None or not isinstance(exc, type):
            raise RuntimeError(f"worker error {kind}: {message}")
        raise exc(message)
    raise ValueError(f"unknown reply tag {tag:#06x}")


def _serve_worker(worker: Worker, conn: socket.socket) -> None:
    try:
        while True:
            try:
                tag, payload = wire.read_frame(conn.recv)
            except (ConnectionError, OSError):
                break
            msg = decode_request(tag, payload)
            try:
                reply = worker.handle(msg)
            except Exception as exc:
                conn.sendall(wire.frame(
                    wire.TAG_ERROR,
                    wire.encode_error(type(exc).__name__, str(exc))))
                continue
            conn.sendall(encode_reply(reply))
            if isinstance(msg, Shutdown):
                break
    finally:
        conn.close()


class SocketHandle:
    def __init__(self, worker_id: int, conn: socket.socket,
                 thread: threading.Thread):
        self.worker_id = worker_id
        self.conn = conn
        self.thread = thread
        self.alive = True

    def dispatch(self, message):
        if not self.alive:
            raise WorkerUnavailable(f"worker {self.worker_id} is gone")
        try:
            self.conn.sendall(encode_request(message))
            tag, payload = wire.read_frame(self.conn.recv)
        except (ConnectionError, OSError) as exc:
            self.alive = False
            raise WorkerUnavailable(
                f"worker {self.worker_id}: {exc}") from exc
        return decode_reply(tag, payload)

    def close(self):
        if self.alive:
            self.alive = False
            self.conn.close()
        self.thread.join(timeout=5)


class SocketTransport:
    """One thread per worker behind a local stream socket pair."""

    def __init__(self):
        self.handles: Dict[int, SocketHandle] = {}

    def add_worker(self, worker_id: int) -> SocketHandle:
        if worker_id in self.handles:
            raise ValueError(f"worker {worker_id} already exists")
        client, server = socket.socketpair()
        worker = Worker(worker_id)
        thread = threading.Thread(target=_serve_worker,
                                  args=(worker, server),
                                  name=f"worker-{worker_id}", daemon=True)
        thread.start()
        handle = SocketHandle(worker_id, client, thread)
        self.handles[worker_id] = handle
        return handle

    def handle_for(self, worker_id: int):
        if worker_id not in self.handles:
            raise UnknownWorker(f"no worker {worker_id}")
        return self.handles[worker_id]

    def remove_worker(self, worker_id: int) -> None:
        handle = self.handle_for(worker_id)
        try:
            handle.dispatch(Shutdown())
        except WorkerUnavailable:
            pass
        handle.close()
        del self.handles[worker_id]

    def worker_ids(self):
        return sorted(self.handles)

    def close(self):
        for worker_id in list(self.handles):
            self.remove_worker(worker_id)
