"""Length-prefixed message framing for the two-party session.

Frame layout, byte-exact:

    u32 big-endian length  (= 1 + payload size, covers the type byte)
    u8  message type
    payload bytes

The protocol runs over any reliable ordered byte stream; a TCP transport
and an in-memory loopback (for same-process peers, thread-safe) are
provided.  Transports move frames and nothing else: transcript folding
into the authentication context is the session layer's job.
"""

from __future__ import annotations

import queue
import socket
import struct
from enum import IntEnum

MAX_PAYLOAD = 1 << 28


class MessageType(IntEnum):
    HELLO = 1
    PARAMS = 2
    SYNDROME = 3
    CONFIRM_HASH = 4
    CONFIRM_RESULT = 5
    BLOCK_DISCLOSE = 6
    PA_PARAMS = 7
    AUTH_TAG = 8
    ABORT = 9


class TransportError(ConnectionError):
    """Stream ended or timed out mid-protocol."""


class ProtocolError(ValueError):
    """Malformed or out-of-contract frame."""


_HEADER = struct.Struct(">IB")


def encode_frame(mtype: MessageType, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload exceeds {MAX_PAYLOAD} bytes")
    return _HEADER.pack(len(payload) + 1, int(MessageType(mtype))) + payload


def decode_frame(frame: bytes):
    """Split one complete frame into (type, payload); inverse of
    encode_frame."""
    if len(frame) < _HEADER.size:
        raise ProtocolError("frame shorter than header")
    length, raw_type = _HEADER.unpack_from(frame)
    if length < 1 or length - 1 > MAX_PAYLOAD:
        raise ProtocolError(f"bad frame length {length}")
    if len(frame) != 4 + length:
        raise ProtocolError("frame size does not match header")
    try:
        mtype = MessageType(raw_type)
    except ValueError as exc:
        raise ProtocolError(f"unknown message type {raw_type}") from exc
    return mtype, frame[_HEADER.size:]


class MemoryChannel:
    """One endpoint of an in-process loopback pair."""

    def __init__(self, inbox: "queue.Queue", outbox: "queue.Queue", timeout: float):
        self._inbox = inbox
        self._outbox = outbox
        self._timeout = timeout

    @classmethod
    def pair(cls, timeout: float = 30.0):
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        return cls(b_to_a, a_to_b, timeout), cls(a_to_b, b_to_a, timeout)

    def send(self, mtype: MessageType, payload: bytes = b"") -> bytes:
        frame = encode_frame(mtype, payload)
        self._outbox.put(frame)
        return frame

    def recv(self):
        try:
            frame = self._inbox.get(timeout=self._timeout)
        except queue.Empty as exc:
            raise TransportError("timed out waiting for peer") from exc
        mtype, payload = decode_frame(frame)
        return mtype, payload, frame

    def close(self):
        pass


class SocketChannel:
    """Frame transport over a connected stream socket."""

    def __init__(self, sock: socket.socket, timeout: float = 30.0):
        self._sock = sock
        sock.settimeout(timeout)

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._sock.recv(remaining)
            except socket.timeout as exc:
                raise TransportError("socket timeout") from exc
            if not chunk:
                raise TransportError("peer closed the stream mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def send(self, mtype: MessageType, payload: bytes = b"") -> bytes:
        frame = encode_frame(mtype, payload)
        self._sock.sendall(frame)
        return frame

    def recv(self):
        header = self._recv_exact(_HEADER.size)
        length, _ = _HEADER.unpack(header)
        if length < 1 or length - 1 > MAX_PAYLOAD:
            raise ProtocolError(f"bad frame length {length}")
        body = self._recv_exact(length - 1)
        frame = header + body
        mtype, payload = decode_frame(frame)
        return mtype, payload, frame

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
