"""Messages exchanged between community agents and the weight agent.

First-order information is the product a community contributes to a
neighbor's pre-activation, ``p[l, r->m] = A[m, r] Z[l, r] W[l+1]``.
Second-order information is forwarded by ``r`` on behalf of its other
neighbors, so no two-hop adjacency product is ever formed:

    l <= L-2:  s[l, r->m] = (Z[l+1, r],  sum_{r' != m} p[l, r'->r])
    l == L-1:  s[l, r->m] = (Z[L, r] - sum_{r' != m} p[L-1, r'->r],  U[r])

where ``r'`` runs over ``N_r`` and ``r`` itself.

Wire frame: ``<BIIIQQB`` header (kind, src, dst, layer, rows, cols,
payload count) followed by each payload as little-endian float64,
row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .graph import spmm
from .problem import Community


class Kind(IntEnum):
    FIRST_ORDER = 1
    SECOND_ORDER = 2
    WEIGHT_BROADCAST = 3
    Z_REPORT = 4


class ProtocolError(RuntimeError):
    pass


HEADER = struct.Struct("<BIIIQQB")
_F64 = np.dtype("<f8")


@dataclass(frozen=True, eq=False)
class Message:
    kind: Kind
    src: int
    dst: int
    layer: int
    payload: tuple

    def __post_init__(self):
        shapes = {p.shape for p in self.payload}
        if not self.payload or len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError("payload must be one or more 2-D matrices of equal shape")

    @property
    def shape(self):
        return self.payload[0].shape

    @property
    def nbytes(self):
        return HEADER.size + sum(p.size for p in self.payload) * 8

    def same_as(self, other) -> bool:
        """Bit-exact equality of header and payloads."""
        return (
            (self.kind, self.src, self.dst, self.layer) == (other.kind, other.src, other.dst, other.layer)
            and len(self.payload) == len(other.payload)
            and all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.payload, other.payload))
        )


def encode(msg: Message) -> bytes:
    rows, cols = msg.shape
    head = HEADER.pack(int(msg.kind), msg.src, msg.dst, msg.layer, rows, cols, len(msg.payload))
    return head + b"".join(np.ascontiguousarray(p, dtype=_F64).tobytes() for p in msg.payload)


def decode(buf: bytes) -> Message:
    msg, used = decode_from(buf, 0)
    if used != len(buf):
        raise ProtocolError(f"{len(buf) - used} trailing bytes after frame")
    return msg


def decode_from(buf, offset=0):
    """Decode one frame starting at ``offset``; return ``(message, end)``."""
    if len(buf) - offset < HEADER.size:
        raise ProtocolError("truncated frame header")
    kind, src, dst, layer, rows, cols, count = HEADER.unpack_from(buf, offset)
    pos = offset + HEADER.size
    size = rows * cols * 8
    if len(buf) - pos < size * count:
        raise ProtocolError("truncated frame payload")
    payload = []
    for _ in range(count):
        arr = np.frombuffer(buf, dtype=_F64, count=rows * cols, offset=pos).reshape(rows, cols)
        payload.append(arr.astype(np.float64))
        pos += size
    return Message(Kind(kind), src, dst, layer, tuple(payload)), pos


def read_frame(stream):
    """Read one frame from a binary stream; ``None`` at clean EOF."""
    head = stream.read(HEADER.size)
    if not head:
        return None
    if len(head) < HEADER.size:
        raise ProtocolError("truncated frame header")
    _, _, _, _, rows, cols, count = HEADER.unpack(head)
    body = stream.read(rows * cols * 8 * count)
    return decode(head + body)


class TraceWriter:
    """Append-only log of frames; ``read_trace`` replays it."""

    def __init__(self, path):
        self._fh = open(path, "wb")

    def write(self, msg: Message):
        self._fh.write(encode(msg))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path):
    with open(path, "rb") as fh:
        while (msg := read_frame(fh)) is not None:
            yield msg


def build_first_order(comm_r: Community, layer, dst, Z_lr, W_next, XW=None) -> Message:
    """``p[layer, r->dst]`` computed by agent ``r`` (``comm_r``).

    ``XW`` may carry a precomputed ``Z_lr @ W_next`` shared across
    destinations.
    """
    r = comm_r.index
    if dst == r:
        block = comm_r.A_in[r]
    elif dst in comm_r.A_out:
        block = comm_r.A_out[dst]
    else:
        raise ProtocolError(f"community {dst} is not a neighbor of {r}; no first-order message (l={layer})")
    if XW is None:
        XW = Z_lr @ W_next
    return Message(Kind.FIRST_ORDER, r, dst, layer, (spmm(block, XW),))


def build_second_order(comm_r: Community, layer, dst, inbox, n_layers, Z_next_r, U_r=None) -> Message:
    """``s[layer, r->dst]`` assembled from first-order messages ``r`` holds.

    ``Z_next_r`` is ``Z[layer+1, r]``; for the last hidden layer it is
    ``Z[L, r]`` and ``U_r`` must be given.
    """
    r = comm_r.index
    if dst not in comm_r.neighbors:
        raise ProtocolError(f"community {dst} is not a neighbor of {r}; no second-order message (l={layer})")
    agg = None
    for src in comm_r.closed_neighbors:
        if src == dst:
            continue
        p = inbox.first(layer, src)
        agg = p.copy() if agg is None else agg + p
    if agg is None:
        agg = np.zeros_like(Z_next_r)
    if layer == n_layers - 1:
        if U_r is None:
            raise ProtocolError("last-layer second-order message needs the multiplier U_r")
        payload = (Z_next_r - agg, U_r)
    else:
        payload = (Z_next_r, agg)
    return Message(Kind.SECOND_ORDER, r, dst, layer, payload)


class Inbox:
    """Messages received by one agent during an outer iteration."""

    def __init__(self, owner):
        self.owner = owner
        self._box = {}

    def put(self, msg: Message):
        if msg.dst != self.owner:
            raise ProtocolError(f"message for {msg.dst} delivered to {self.owner}")
        key = (msg.kind, msg.layer, msg.src)
        if key in self._box:
            raise ProtocolError(f"duplicate {msg.kind.name} message (l={msg.layer}, {msg.src}->{self.owner})")
        self._box[key] = msg

    def has(self, kind, layer, src):
        return (kind, layer, src) in self._box

    def get(self, kind, layer, src) -> Message:
        try:
            return self._box[(kind, layer, src)]
        except KeyError:
            raise ProtocolError(
                f"missing {Kind(kind).name} message (l={layer}, {src}->{self.owner})"
            ) from None

    def first(self, layer, src):
        return self.get(Kind.FIRST_ORDER, layer, src).payload[0]

    def second(self, layer, src):
        return self.get(Kind.SECOND_ORDER, layer, src).payload

    def aggregate(self, layer, sources):
        """Sum of first-order payloads over ``sources`` in ascending order."""
        out = None
        for src in sorted(sources):
            p = self.first(layer, src)
            out = p.copy() if out is None else out + p
        return out

    def messages(self):
        return list(self._box.values())

    def __len__(self):
        return len(self._box)
