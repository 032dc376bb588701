"""Binary framing for the socket transport.

Frame: ``b"FDA1"`` | 1-byte type | 8-byte little-endian payload length | payload.
Arrays inside a payload are a 4-byte little-endian element count followed by
little-endian float64 values.
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"FDA1"
HEADER = struct.Struct("<4sBQ")
MAX_PAYLOAD = 1 << 31

HELLO = 0
BROADCAST = 1
UPLOAD = 2
SHUTDOWN = 3
ERROR = 4

_F64 = np.dtype("<f8")


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Broadcast:
    x: np.ndarray
    nu: np.ndarray
    h_diag: np.ndarray
    round: int
    cursor: int


@dataclass(frozen=True, eq=False)
class Upload:
    client_id: int
    arrays: tuple


def encode_arrays(arrays):
    parts = []
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=_F64).ravel()
        parts.append(struct.pack("<I", a.size))
        parts.append(a.tobytes())
    return b"".join(parts)


def decode_arrays(buf, offset=0, end=None, count=None):
    """Decode arrays from ``buf[offset:end]``; returns ``(arrays, new_offset)``."""
    end = len(buf) if end is None else end
    out = []
    while offset < end and (count is None or len(out) < count):
        if offset + 4 > end:
            raise ProtocolError("truncated array header")
        (n,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        stop = offset + 8 * n
        if stop > end:
            raise ProtocolError("truncated array body")
        out.append(np.frombuffer(buf, dtype=_F64, count=n, offset=offset).astype(np.float64))
        offset = stop
    return out, offset


def encode_broadcast(msg):
    body = encode_arrays([msg.x, msg.nu, msg.h_diag]) + struct.pack("<qq", msg.round, msg.cursor)
    return frame(BROADCAST, body)


def decode_broadcast(payload):
    arrays, off = decode_arrays(payload, 0, len(payload) - 16, count=3)
    if len(arrays) != 3 or off != len(payload) - 16:
        raise ProtocolError("malformed broadcast payload")
    rnd, cursor = struct.unpack_from("<qq", payload, off)
    return Broadcast(arrays[0], arrays[1], arrays[2], rnd, cursor)


def encode_upload(msg):
    return frame(UPLOAD, struct.pack("<Q", msg.client_id) + encode_arrays(msg.arrays))


def decode_upload(payload):
    if len(payload) < 8:
        raise ProtocolError("malformed upload payload")
    (cid,) = struct.unpack_from("<Q", payload, 0)
    arrays, _ = decode_arrays(payload, 8)
    return Upload(cid, tuple(arrays))


def frame(kind, payload=b""):
    return HEADER.pack(MAGIC, kind, len(payload)) + payload


def _recv_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise ProtocolError("connection closed mid-message")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock):
    magic, kind, length = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload too large: {length}")
    return kind, _recv_exact(sock, length) if length else b""
