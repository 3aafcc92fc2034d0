"""Binary message framing for the socket transport.

Frame layout: 4-byte big-endian payload length, 2-byte message-type tag,
payload.  The length covers the tag plus payload.  Scalars are
big-endian; feature indices are 4 bytes and values, labels, duals and
weights are 8 bytes each, matching the chunk byte accounting.

The codec is lossless for IEEE-754 doubles, so a round trip through the
wire cannot perturb solver state.
"""

import struct
from typing import Callable, Tuple

import numpy as np

from .data import DataChunk, Model, Sample
from .errors import ParseError

HEADER = struct.Struct(">IH")

# request tags
TAG_BROADCAST_MODEL = 0x0001
TAG_START_ITERATION = 0x0002
TAG_FETCH_MODEL = 0x0003
TAG_ADD_CHUNK = 0x0004
TAG_TAKE_CHUNK = 0x0005
TAG_FETCH_DUALS = 0x0006
TAG_SHUTDOWN = 0x0007
# reply tags
TAG_ACK = 0x0081
TAG_ITERATION_FINISHED = 0x0082
TAG_MODEL_PAYLOAD = 0x0083
TAG_CHUNK_PAYLOAD = 0x0084
TAG_DUALS_PAYLOAD = 0x0086
TAG_ERROR = 0x00FF


def frame(tag: int, payload: bytes) -> bytes:
    return HEADER.pack(2 + len(payload), tag) + payload


def read_frame(read: Callable[[int], bytes]) -> Tuple[int, bytes]:
    """Read one frame via ``read(n)``; raises ConnectionError on EOF."""
    head = _read_exact(read, HEADER.size)
    length, tag = HEADER.unpack(head)
    if length < 2:
        raise ParseError(f"frame length {length} too short")
    return tag, _read_exact(read, length - 2)


def _read_exact(read: Callable[[int], bytes], n: int) -> bytes:
    parts = []
    got = 0
    while got < n:
        piece = read(n - got)
        if not piece:
            raise ConnectionError("peer closed mid-frame")
        parts.append(piece)
        got += len(piece)
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        st = struct.Struct(">" + fmt)
        vals = st.unpack_from(self.buf, self.pos)
        self.pos += st.size
        return vals if len(vals) > 1 else vals[0]

    def take_bytes(self, n: int) -> bytes:
        out = self.buf[self.pos:self.pos + n]
        if len(out) != n:
            raise ParseError("payload truncated")
        self.pos += n
        return out

    def take_f64_array(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take_bytes(8 * n), dtype=">f8") \
            .astype(np.float64)


def encode_model(model: Model) -> bytes:
    w = np.ascontiguousarray(model.weights, dtype=">f8")
    return struct.pack(">qI", model.iteration, w.shape[0]) + w.tobytes()


def decode_model(payload: bytes) -> Model:
    r = _Reader(payload)
    iteration, dim = r.take("qI")
    return Model(r.take_f64_array(dim), iteration)


def encode_sample(sample: Sample) -> bytes:
    parts = [struct.pack(">qdI", sample.id, sample.label,
                         len(sample.features))]
    for idx, val in sample.features:
        parts.append(struct.pack(">Id", idx, val))
    return b"".join(parts)


def _decode_sample(r: _Reader) -> Sample:
    sid, label, nnz = r.take("qdI")
    feats = tuple(tuple(r.take("Id")) for _ in range(nnz))
    return Sample(sid, feats, label)


def encode_chunk(chunk: DataChunk) -> bytes:
    has_duals = chunk.dual_state is not None
    parts = [struct.pack(">qIB", chunk.chunk_id, len(chunk.samples),
                         1 if has_duals else 0)]
    parts.extend(encode_sample(s) for s in chunk.samples)
    if has_duals:
        parts.append(np.ascontiguousarray(chunk.dual_state,
                                          dtype=">f8").tobytes())
    return b"".join(parts)


def decode_chunk(payload: bytes) -> DataChunk:
    r = _Reader(payload)
    chunk_id, n, has_duals = r.take("qIB")
    samples = [_decode_sample(r) for _ in range(n)]
    duals = r.take_f64_array(n) if has_duals else None
    return DataChunk(chunk_id, samples, duals)


def encode_update(update) -> bytes:
    d = np.ascontiguousarray(update.delta_weights, dtype=">f8")
    return struct.pack(">Iqqq", d.shape[0], update.samples_processed,
                       update.worker_id, update.iteration) + d.tobytes()


def decode_update(payload: bytes):
    from .solvers import LocalUpdate

    r = _Reader(payload)
    dim, processed, worker_id, iteration = r.take("Iqqq")
    return LocalUpdate(r.take_f64_array(dim), processed,
                       worker_id, iteration)


def encode_hyperparams(hp) -> bytes:
    sigma = hp.sigma_prime
    return struct.pack(">dBIIddBd", hp.lam,
                       0 if hp.loss.value == "hinge" else 1,
                       hp.L, hp.H, hp.base_lr, hp.momentum,
                       0 if sigma is None else 1,
                       0.0 if sigma is None else sigma)


def decode_hyperparams(r: _Reader):
    from .solvers import HyperParams, Loss

    lam, loss_tag, L, H, base_lr, momentum, has_sigma, sigma = \
        r.take("dBIIddBd")
    return HyperParams(lam=lam,
                       loss=Loss.HINGE if loss_tag == 0 else Loss.LOGISTIC,
                       L=L, H=H, base_lr=base_lr, momentum=momentum,
                       sigma_prime=sigma if has_sigma else None)


def encode_error(kind: str, message: str) -> bytes:
    kb = kind.encode()
    mb = message.encode()
    return struct.pack(">H", len(kb)) + kb \
        + struct.pack(">I", len(mb)) + mb


def decode_error(payload: bytes) -> Tuple[str, str]:
    r = _Reader(payload)
    kb = r.take_bytes(r.take("H"))
    mb = r.take_bytes(r.take("I"))
    return kb.decode(), mb.decode()
