"""Transport abstraction: typed round messages, bit-exact framing, an
in-memory transport for simulation and a TCP transport for socket runs.

Framing headers are big-endian; numeric payloads (floats, field residues)
are little-endian. Delivery is reliable and per-pair FIFO; packet loss is
modeled only as participant dropout.
"""

import queue
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConnectionClosed,
    CorruptHeader,
    LengthMismatch,
    Timeout,
    TruncatedFrame,
    UnknownParticipant,
    UnknownType,
)
from .params import ParamVector

MSG_GLOBAL_MODEL = 1
MSG_CLIENT_UPDATE = 2
MSG_MASK_SHARE = 3
MSG_MASKED_UPLOAD = 4
MSG_AGG_SHARE = 5
MSG_EVAL_REPORT = 6
MSG_CONTROL = 7
_KNOWN_TYPES = frozenset(range(1, 8))

SERVER_ID = 0
BROADCAST_ID = 0xFFFF


@dataclass(frozen=True)
class RoundMessage:
    msg_type: int
    round: int
    sender: int
    receiver: int
    payload: bytes = b""


def encode_frame(msg: RoundMessage) -> bytes:
    if msg.msg_type not in _KNOWN_TYPES:
        raise UnknownType(f"message type {msg.msg_type}")
    body = struct.pack(
        ">BIHH", msg.msg_type, msg.round, msg.sender, msg.receiver
    ) + msg.payload
    return struct.pack(">I", len(body)) + body


def decode_frame(data: bytes) -> RoundMessage:
    if len(data) < 4:
        raise TruncatedFrame("missing length prefix")
    (length,) = struct.unpack_from(">I", data, 0)
    if len(data) - 4 != length:
        raise LengthMismatch(f"declared {length}, got {len(data) - 4}")
    if length < 9:
        raise TruncatedFrame("frame body shorter than fixed header")
    msg_type, rnd, sender, receiver = struct.unpack_from(">BIHH", data, 4)
    if msg_type not in _KNOWN_TYPES:
        raise UnknownType(f"message type {msg_type}")
    return RoundMessage(msg_type, rnd, sender, receiver, data[13:])


def serialize_params(pv: ParamVector) -> bytes:
    """Segment directory (big-endian) followed by little-endian float64s."""
    out = [struct.pack(">H", len(pv.layout))]
    for name, shape in pv.layout:
        nb = name.encode("utf-8")
        out.append(struct.pack(">B", len(nb)) + nb)
        out.append(struct.pack(">B", len(shape)))
        for dim in shape:
            out.append(struct.pack(">I", dim))
    out.append(pv.data.astype("<f8").tobytes())
    return b"".join(out)


def deserialize_params(data: bytes) -> ParamVector:
    try:
        off = 0
        (nseg,) = struct.unpack_from(">H", data, off)
        off += 2
        layout = []
        total = 0
        for _ in range(nseg):
            (nlen,) = struct.unpack_from(">B", data, off)
            off += 1
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from(">B", data, off)
            off += 1
            shape = struct.unpack_from(f">{ndim}I", data, off) if ndim else ()
            off += 4 * ndim
            layout.append((name, tuple(int(d) for d in shape)))
            total += int(np.prod(shape)) if shape else 1
        flat = np.frombuffer(data, dtype="<f8", count=total, offset=off)
        if off + 8 * total != len(data):
            raise CorruptHeader("trailing bytes after parameter data")
        return ParamVector(flat.astype(np.float64), layout)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CorruptHeader(str(exc)) from exc


# ---------------------------------------------------------------------------
# In-memory transport

class Endpoint:
    """One participant's mailbox plus its send hooks."""

    def __init__(self, participant_id: int, transport):
        self.participant_id = participant_id
        self.inbox: "queue.Queue[RoundMessage]" = queue.Queue()
        self._transport = transport

    def send(self, msg: RoundMessage):
        self._transport.route(msg)

    def broadcast(self, msg: RoundMessage):
        self._transport.route(
            RoundMessage(msg.msg_type, msg.round, msg.sender, BROADCAST_ID,
                         msg.payload)
        )

    def recv(self, timeout: float | None = None) -> RoundMessage:
        try:
            return self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise Timeout(
                f"participant {self.participant_id} timed out after {timeout}s"
            ) from None


class MemoryTransport:
    """Queue-backed loopback transport for single-process simulation."""

    def __init__(self, participant_ids):
        self.endpoints = {pid: Endpoint(pid, self) for pid in participant_ids}

    def endpoint(self, pid: int) -> Endpoint:
        if pid not in self.endpoints:
            raise UnknownParticipant(f"participant {pid}")
        return self.endpoints[pid]

    def route(self, msg: RoundMessage):
        # encode/decode round-trip keeps memory and TCP byte-compatible
        frame = decode_frame(encode_frame(msg))
        if msg.receiver == BROADCAST_ID:
            for pid, ep in self.endpoints.items():
                if pid != msg.sender:
                    ep.inbox.put(frame)
            return
        if msg.receiver not in self.endpoints:
            raise UnknownParticipant(f"receiver {msg.receiver}")
        self.endpoints[msg.receiver].inbox.put(frame)

    def close(self):
        pass


# ---------------------------------------------------------------------------
# TCP transport (server relays client-to-client frames)

def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        buf += chunk
    return buf


def _read_frame(sock: socket.socket) -> RoundMessage:
    header = _read_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    return decode_frame(header + _read_exact(sock, length))


class TcpServerTransport:
    """Server side: accepts one connection per client, routes frames.

    Frames addressed to the server land in its endpoint inbox; frames
    addressed to another client are forwarded over that client's
    connection; broadcasts fan out to every client.
    """

    def __init__(self, num_clients: int, host="127.0.0.1", port=0):
        self.num_clients = num_clients
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self.server_endpoint = Endpoint(SERVER_ID, self)
        self._conns: dict[int, socket.socket] = {}
        self._locks: dict[int, threading.Lock] = {}
        self._readers: list[threading.Thread] = []
        self._closed = False

    def accept_clients(self):
        """Hello handshake: each client announces its id in a Control frame."""
        for _ in range(self.num_clients):
            conn, _ = self._listener.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            hello = _read_frame(conn)
            if hello.msg_type != MSG_CONTROL:
                raise UnknownType("expected Control hello")
            cid = hello.sender
            self._conns[cid] = conn
            self._locks[cid] = threading.Lock()
            self._write(cid, RoundMessage(MSG_CONTROL, 0, SERVER_ID, cid, b"ack"))
            t = threading.Thread(target=self._reader, args=(cid, conn), daemon=True)
            t.start()
            self._readers.append(t)

    def _reader(self, cid: int, conn: socket.socket):
        try:
            while True:
                msg = _read_frame(conn)
                if msg.receiver == SERVER_ID:
                    self.server_endpoint.inbox.put(msg)
                else:
                    self._write(msg.receiver, msg)
        except (ConnectionClosed, OSError):
            return

    def _write(self, cid: int, msg: RoundMessage):
        if cid not in self._conns:
            raise UnknownParticipant(f"client {cid}")
        with self._locks[cid]:
            self._conns[cid].sendall(encode_frame(msg))

    # Endpoint hook
    def route(self, msg: RoundMessage):
        if msg.receiver == BROADCAST_ID:
            for cid in sorted(self._conns):
                self._write(cid, RoundMessage(msg.msg_type, msg.round,
                                              msg.sender, cid, msg.payload))
            return
        self._write(msg.receiver, msg)

    def endpoint(self, pid: int) -> Endpoint:
        if pid != SERVER_ID:
            raise UnknownParticipant("TCP server transport only owns id 0")
        return self.server_endpoint

    def close(self):
        if self._closed:
            return
        self._closed = True
        for conn in self._conns.values():
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        self._listener.close()


class TcpClientTransport:
    """Client side: one connection to the server; all frames flow over it."""

    def __init__(self, participant_id: int, address):
        self.participant_id = participant_id
        self._sock = socket.create_connection(address)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._lock = threading.Lock()
        self.client_endpoint = Endpoint(participant_id, self)
        hello = RoundMessage(MSG_CONTROL, 0, participant_id, SERVER_ID, b"hello")
        with self._lock:
            self._sock.sendall(encode_frame(hello))
        ack = _read_frame(self._sock)
        if ack.msg_type != MSG_CONTROL or ack.payload != b"ack":
            raise UnknownType("bad handshake ack")
        self._reader_thread = threading.Thread(target=self._reader, daemon=True)
        self._reader_thread.start()

    def _reader(self):
        try:
            while True:
                self.client_endpoint.inbox.put(_read_frame(self._sock))
        except (ConnectionClosed, OSError):
            return

    def route(self, msg: RoundMessage):
        with self._lock:
            self._sock.sendall(encode_frame(msg))

    def endpoint(self, pid: int) -> Endpoint:
        if pid != self.participant_id:
            raise UnknownParticipant(f"this transport owns id {self.participant_id}")
        return self.client_endpoint

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
