"""Binary framing and message codecs for the steering link.

Frame layout: magic ``SHRL``, version byte (1), message type byte, u64
little-endian payload length, payload. All multi-byte values are
little-endian regardless of host. Strings are a u32 length followed by
UTF-8 bytes. Framing errors are fatal to the session; no
resynchronization is attempted.
"""

from __future__ import annotations

import select
import socket
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SHRL"
VERSION = 1
HEADER = struct.Struct("<4sBBQ")
DEFAULT_PORT = 7411

METHOD_CODES = {"elasticity": 0, "harmonic": 1}
METHOD_NAMES = {v: k for k, v in METHOD_CODES.items()}


class ProtocolError(Exception):
    """Fatal framing or codec error."""


class NeedMoreBytes(Exception):
    """Internal signal: the buffer holds only a partial frame."""


@dataclass(frozen=True)
class Hello:
    TYPE = 1
    client_version: str = "meshsteer-1"


@dataclass(frozen=True)
class SurfaceMeshMsg:
    TYPE = 2
    coords: np.ndarray  # (n, 3) f64
    triangles: np.ndarray  # (t, 3) u64
    tags: np.ndarray  # (t,) i64
    volume_ids: np.ndarray  # (n,) u64

    def __eq__(self, other):
        return (
            isinstance(other, SurfaceMeshMsg)
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.tags, other.tags)
            and np.array_equal(self.volume_ids, other.volume_ids)
        )


@dataclass(frozen=True)
class Displacement:
    TYPE = 3
    values: np.ndarray  # (n, 3) f64
    schedule_steps: int = 1
    steps_between: int = 0
    method: int = 0  # METHOD_CODES

    def __eq__(self, other):
        return (
            isinstance(other, Displacement)
            and np.array_equal(self.values, other.values)
            and self.schedule_steps == other.schedule_steps
            and self.steps_between == other.steps_between
            and self.method == other.method
        )


@dataclass(frozen=True)
class Ack:
    TYPE = 4
    code: int
    detail: str = ""


@dataclass(frozen=True)
class Snapshot:
    TYPE = 5
    step: int
    field_name: str
    values: np.ndarray  # (n,) f64

    def __eq__(self, other):
        return (
            isinstance(other, Snapshot)
            and self.step == other.step
            and self.field_name == other.field_name
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class Bye:
    TYPE = 6


MESSAGE_TYPES = {m.TYPE: m for m in (Hello, SurfaceMeshMsg, Displacement, Ack, Snapshot, Bye)}

# ACK codes
ACK_OK = 0
ACK_REJECT_DUPLICATE = 1
ACK_ERROR = 2


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_f64(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _pack_u64(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<u8").tobytes()


def _pack_i64(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<i8").tobytes()


def encode(msg) -> bytes:
    """Deterministic frame bytes for a message."""
    if isinstance(msg, Hello):
        payload = _pack_string(msg.client_version)
    elif isinstance(msg, SurfaceMeshMsg):
        n, t = len(msg.coords), len(msg.triangles)
        payload = (
            struct.pack("<Q", n)
            + _pack_f64(msg.coords)
            + struct.pack("<Q", t)
            + _pack_u64(msg.triangles)
            + _pack_i64(msg.tags)
            + _pack_u64(msg.volume_ids)
        )
    elif isinstance(msg, Displacement):
        payload = (
            struct.pack("<Q", len(msg.values))
            + _pack_f64(msg.values)
            + struct.pack("<IIB", msg.schedule_steps, msg.steps_between, msg.method)
        )
    elif isinstance(msg, Ack):
        payload = struct.pack("<I", msg.code) + _pack_string(msg.detail)
    elif isinstance(msg, Snapshot):
        payload = (
            struct.pack("<Q", msg.step)
            + _pack_string(msg.field_name)
            + struct.pack("<Q", len(msg.values))
            + _pack_f64(msg.values)
        )
    elif isinstance(msg, Bye):
        payload = b""
    else:
        raise ProtocolError(f"cannot encode {type(msg).__name__}")
    return HEADER.pack(MAGIC, VERSION, msg.TYPE, len(payload)) + payload


class _Reader:
    def __init__(self, payload: bytes):
        self.buf = payload
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ProtocolError("payload shorter than its declared arrays")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def f64_array(self, count, width=1) -> np.ndarray:
        a = np.frombuffer(self.take(8 * count * width), dtype="<f8")
        return a.reshape(count, width) if width > 1 else a

    def int_array(self, count, dtype, width=1) -> np.ndarray:
        a = np.frombuffer(self.take(8 * count * width), dtype=dtype)
        return a.reshape(count, width) if width > 1 else a

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise ProtocolError(
                f"payload length mismatch: {len(self.buf) - self.pos} trailing bytes"
            )


def decode(buf: bytes):
    """Decode one frame; returns (message, consumed) or (None, 0) if partial."""
    if len(buf) < HEADER.size:
        if len(buf) >= 4 and buf[:4] != MAGIC:
            raise ProtocolError(f"bad magic {buf[:4]!r}")
        return None, 0
    magic, version, msg_type, payload_len = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unknown protocol version {version}")
    if msg_type not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg_type}")
    total = HEADER.size + payload_len
    if len(buf) < total:
        return None, 0
    rd = _Reader(bytes(buf[HEADER.size : total]))
    if msg_type == Hello.TYPE:
        msg = Hello(rd.string())
    elif msg_type == SurfaceMeshMsg.TYPE:
        n = rd.u64()
        coords = rd.f64_array(n, 3)
        t = rd.u64()
        triangles = rd.int_array(t, "<u8", 3)
        tags = rd.int_array(t, "<i8")
        volume_ids = rd.int_array(n, "<u8")
        msg = SurfaceMeshMsg(coords, triangles, tags, volume_ids)
    elif msg_type == Displacement.TYPE:
        n = rd.u64()
        values = rd.f64_array(n, 3)
        steps = rd.u32()
        between = rd.u32()
        method = rd.u8()
        if method not in METHOD_NAMES:
            raise ProtocolError(f"unknown deformation method code {method}")
        msg = Displacement(values, steps, between, method)
    elif msg_type == Ack.TYPE:
        msg = Ack(rd.u32(), rd.string())
    elif msg_type == Snapshot.TYPE:
        step = rd.u64()
        name = rd.string()
        values = rd.f64_array(rd.u64())
        msg = Snapshot(step, name, values)
    else:
        msg = Bye()
    rd.done()
    return msg, total


class Connection:
    """One duplex stream carrying frames; reads buffer partial frames."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = bytearray()
        self.queue: list = []
        self.closed = False

    def send(self, msg) -> None:
        self.sock.sendall(encode(msg))

    def poll(self, timeout: float = 0.0) -> list:
        """Drain readable bytes and return all complete pending messages."""
        while True:
            ready, _, _ = select.select([self.sock], [], [], timeout)
            timeout = 0.0
            if not ready:
                break
            chunk = self.sock.recv(1 << 20)
            if not chunk:
                self.closed = True
                break
            self.buf.extend(chunk)
        while True:
            msg, used = decode(self.buf)
            if msg is None:
                break
            del self.buf[:used]
            self.queue.append(msg)
        out, self.queue = self.queue, []
        return out

    def recv(self, timeout: float = 30.0):
        """Block up to timeout for the next single message."""
        import time

        deadline = time.monotonic() + timeout
        while True:
            msgs = self.poll(max(0.0, deadline - time.monotonic()))
            if msgs:
                self.queue = msgs[1:] + self.queue
                return msgs[0]
            if self.closed:
                raise ProtocolError("connection closed by peer")
            if time.monotonic() >= deadline:
                raise TimeoutError("no message within timeout")

    def close(self) -> None:
        try:
            self.sock.close()
        finally:
            self.closed = True
