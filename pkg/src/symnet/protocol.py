"""Binary wire protocol for structure-proposal services.

Every message is a length-prefixed frame: u32 little-endian payload length,
then the payload. Integers are little-endian throughout; data values travel
as IEEE-754 binary32 bit patterns, most significant bit first (sign, exponent,
fraction), 4 bytes per value.

Request payload:
    u32 magic = 0x314E5053 (bytes "SNP1")
    u32 version = 1
    u32 d        true feature count
    u32 d_max    padded feature count of the block
    u32 n        number of rows
    u32 encoding = 1 (binary32 multi-hot)
    u32 k        candidates requested
    n*(d_max+1)*4 bytes: rows of [x_0 .. x_{d_max-1}, y]

Response payload:
    u32 magic, u32 version, u32 status (0 ok, 1 error)
    ok:    u32 k, then per candidate: f64 score, u32 n_tokens, i32 tokens...
    error: u32 msg_len, utf8 message

One-shot mode: a single request frame on stdin, a single response frame on
stdout. Stream mode: any number of frames per connection.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .codec import SequenceLabel

__all__ = [
    "MAGIC",
    "VERSION",
    "ProtocolError",
    "encode_request",
    "decode_request",
    "encode_response",
    "encode_error_response",
    "decode_response",
    "read_frame",
    "write_frame",
    "request_over_socket",
    "ProposerServer",
]

MAGIC = 0x314E5053  # b"SNP1" little-endian
VERSION = 1
ENCODING_BINARY32 = 1
MAX_FRAME = 256 * 1024 * 1024


class ProtocolError(ValueError):
    pass


def encode_request(X: np.ndarray, y: np.ndarray, d: int, k: int, d_max: int) -> bytes:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if X.shape[1] > d_max:
        raise ProtocolError(f"data has {X.shape[1]} features, block width is {d_max}")
    if X.shape[1] < d_max:
        X = np.column_stack([X, np.zeros((n, d_max - X.shape[1]))])
    rows = np.column_stack([X, y]).astype(">f4")
    head = struct.pack("<7I", MAGIC, VERSION, d, d_max, n, ENCODING_BINARY32, k)
    return head + rows.tobytes()


def decode_request(payload: bytes) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Returns (X padded (n, d_max), y, d, k)."""
    if len(payload) < 28:
        raise ProtocolError("request shorter than its fixed header")
    magic, version, d, d_max, n, encoding, k = struct.unpack("<7I", payload[:28])
    if magic != MAGIC:
        raise ProtocolError(f"bad magic 0x{magic:08x}")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    if encoding != ENCODING_BINARY32:
        raise ProtocolError(f"unknown encoding id {encoding}")
    expect = n * (d_max + 1) * 4
    body = payload[28:]
    if len(body) != expect:
        raise ProtocolError(f"block length {len(body)} != expected {expect}")
    rows = np.frombuffer(body, dtype=">f4").reshape(n, d_max + 1).astype(np.float64)
    return rows[:, :d_max], rows[:, d_max], d, k


def encode_response(candidates: list[tuple[SequenceLabel, float]]) -> bytes:
    parts = [struct.pack("<3I", MAGIC, VERSION, 0), struct.pack("<I", len(candidates))]
    for label, score in candidates:
        toks = np.asarray(label.tokens, dtype="<i4")
        parts.append(struct.pack("<d", float(score)))
        parts.append(struct.pack("<I", len(toks)))
        parts.append(toks.tobytes())
    return b"".join(parts)


def encode_error_response(message: str) -> bytes:
    raw = message.encode("utf-8")
    return struct.pack("<3I", MAGIC, VERSION, 1) + struct.pack("<I", len(raw)) + raw


def decode_response(payload: bytes) -> list[tuple[SequenceLabel, float]]:
    if len(payload) < 12:
        raise ProtocolError("response shorter than its fixed header")
    magic, version, status = struct.unpack("<3I", payload[:12])
    if magic != MAGIC:
        raise ProtocolError(f"bad magic 0x{magic:08x}")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    off = 12
    if status == 1:
        (mlen,) = struct.unpack_from("<I", payload, off)
        msg = payload[off + 4 : off + 4 + mlen].decode("utf-8", "replace")
        raise ProtocolError(f"server error: {msg}")
    if status != 0:
        raise ProtocolError(f"unknown status {status}")
    (k,) = struct.unpack_from("<I", payload, off)
    off += 4
    out = []
    for _ in range(k):
        if off + 12 > len(payload):
            raise ProtocolError("truncated candidate list")
        (score,) = struct.unpack_from("<d", payload, off)
        off += 8
        (ntok,) = struct.unpack_from("<I", payload, off)
        off += 4
        end = off + 4 * ntok
        if end > len(payload):
            raise ProtocolError("truncated token sequence")
        toks = np.frombuffer(payload[off:end], dtype="<i4")
        off = end
        out.append((SequenceLabel(tuple(int(t) for t in toks)), float(score)))
    if off != len(payload):
        raise ProtocolError("trailing bytes after candidate list")
    return out


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------


def write_frame(stream, payload: bytes) -> None:
    stream.write(struct.pack("<I", len(payload)) + payload)
    stream.flush()


def read_frame(stream) -> bytes | None:
    head = _read_exact(stream, 4)
    if head is None:
        return None
    (n,) = struct.unpack("<I", head)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame length {n} exceeds limit")
    body = _read_exact(stream, n)
    if body is None and n > 0:
        raise ProtocolError("connection closed mid-frame")
    return body if body is not None else b""


def _read_exact(stream, n: int) -> bytes | None:
    """Read exactly n bytes; None on EOF at a message boundary."""
    if n == 0:
        return b""
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            if got == 0:
                return None
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def request_over_socket(host: str, port: int, payload: bytes, timeout: float = 30.0) -> bytes:
    with socket.create_connection((host, port), timeout=timeout) as s:
        f = s.makefile("rwb")
        write_frame(f, payload)
        resp = read_frame(f)
        if resp is None:
            raise ProtocolError("server closed the connection without a response")
        return resp


@dataclass
class ProposerServer:
    """Serve a handler(request payload bytes) -> response payload bytes over TCP.

    Doubles as the mock-server fixture for tests: pass a handler built from
    ``make_handler`` with any proposer-like object, or a lambda returning a
    canned response.
    """

    handler: callable
    host: str = "127.0.0.1"
    port: int = 0  # 0 = pick a free port

    def __post_init__(self) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((self.host, self.port))
        self._sock.listen(8)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> "ProposerServer":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket) -> None:
        with conn:
            f = conn.makefile("rwb")
            while not self._stop.is_set():
                try:
                    payload = read_frame(f)
                except (ProtocolError, OSError):
                    return
                if payload is None:
                    return
                try:
                    resp = self.handler(payload)
                except Exception as exc:  # the connection must survive bad requests
                    resp = encode_error_response(str(exc))
                try:
                    write_frame(f, resp)
                except OSError:
                    return

    def stop(self) -> None:
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def __enter__(self) -> "ProposerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_stdio(handler) -> None:
    """One-shot subprocess mode: one request on stdin, one response on stdout."""
    import sys

    payload = read_frame(sys.stdin.buffer)
    if payload is None:
        return
    try:
        resp = handler(payload)
    except Exception as exc:
        resp = encode_error_response(str(exc))
    write_frame(sys.stdout.buffer, resp)
