"""Halo exchange, barriers and small collectives between workers.

Two transports share one interface.  The in-process transport runs every
worker as a thread against a shared mailbox group and is the default.  The
socket transport runs workers as separate processes over Unix-domain or TCP
stream sockets with endpoints written ``unix:<path>`` or ``tcp:host:port``.

Wire format (socket transport): every message is one frame,

    header  struct "<QIBQ" = (seq, src, face tag, payload bytes)
    payload float64 (or int64 for barriers) little endian, axes ordered
            (variable, azimuthal, radial, axial), i.e. a block slab is
            transposed (0, 3, 2, 1) before serialization

Sequence numbers count per (src, dst, tag) channel from zero so a lost or
duplicated frame is detected immediately.

The halo update itself runs as two sequential passes per call: axial planes
first (owned azimuthal range only), then azimuthal planes covering the full
extended axial range, which fills the corner ghosts with the axial
neighbor's azimuthal neighbor data.  The azimuthal ring skips the closing
station that geometrically repeats station zero, so the two layers next to
a block boundary always come from distinct physical stations.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from collections import deque

import numpy as np

from .meshgen import GHOST
from .partition import PartitionTopology

__all__ = ["ExchangeError", "ExchangeTimeout", "ThreadGroup", "SocketTransport",
           "HaloExchanger", "ring_allgather", "parse_endpoint",
           "default_unix_endpoints"]

TAG_AX_LO = 0   # fills the receiver's low-axial ghost planes
TAG_AX_HI = 1
TAG_AZ_LO = 2
TAG_AZ_HI = 3
TAG_SYNC = 4
TAG_RING = 5
TAG_GATHER = 6

_HEADER = struct.Struct("<QIBQ")


class ExchangeError(RuntimeError):
    pass


class ExchangeTimeout(ExchangeError):
    pass


def _wire_axes(ndim: int) -> tuple[int, ...]:
    return (0,) + tuple(reversed(range(1, ndim)))


def _to_wire(arr: np.ndarray) -> bytes:
    if arr.ndim <= 1:
        return np.ascontiguousarray(arr).tobytes()
    return np.ascontiguousarray(arr.transpose(_wire_axes(arr.ndim))).tobytes()


def _from_wire(data: bytes, shape: tuple[int, ...], dtype) -> np.ndarray:
    flat = np.frombuffer(data, dtype=dtype)
    if len(shape) <= 1:
        return flat.reshape(shape).copy()
    wire_shape = (shape[0],) + tuple(reversed(shape[1:]))
    axes = _wire_axes(len(shape))
    return np.ascontiguousarray(flat.reshape(wire_shape).transpose(axes))


# -- in-process transport ----------------------------------------------------

class ThreadGroup:
    """Shared state for one group of worker threads."""

    def __init__(self, size: int, timeout: float = 60.0):
        self.size = size
        self.timeout = timeout
        self._cond = threading.Condition()
        self._boxes: dict[tuple[int, int, int], deque] = {}
        self._send_seq: dict[tuple[int, int, int], int] = {}
        self._sync_vals: list[int] = []
        self._sync_gen = 0
        self._sync_results: dict[int, int] = {}

    def transport(self, rank: int) -> "ThreadTransport":
        return ThreadTransport(self, rank)

    # internal, called by ThreadTransport
    def _send(self, src: int, dst: int, tag: int, arr: np.ndarray) -> None:
        key = (src, dst, tag)
        with self._cond:
            seq = self._send_seq.get(key, 0)
            self._send_seq[key] = seq + 1
            self._boxes.setdefault(key, deque()).append((seq, np.array(arr, copy=True)))
            self._cond.notify_all()

    def _recv(self, src: int, dst: int, tag: int, expect_seq: int,
              shape, dtype) -> np.ndarray:
        key = (src, dst, tag)
        deadline = time.monotonic() + self.timeout
        with self._cond:
            while not self._boxes.get(key):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ExchangeTimeout(
                        f"rank {dst} timed out waiting for rank {src}, tag {tag}")
                self._cond.wait(remaining)
            seq, arr = self._boxes[key].popleft()
        if seq != expect_seq:
            raise ExchangeError(
                f"rank {dst} expected seq {expect_seq} from rank {src} tag {tag}, got {seq}")
        if tuple(arr.shape) != tuple(shape):
            raise ExchangeError(
                f"rank {dst} expected shape {tuple(shape)} from rank {src} tag {tag}, "
                f"got {arr.shape}")
        return arr.astype(dtype, copy=False)

    def _sync(self, value: int) -> int:
        with self._cond:
            gen = self._sync_gen
            self._sync_vals.append(int(value))
            if len(self._sync_vals) == self.size:
                self._sync_results[gen] = max(self._sync_vals)
                self._sync_vals = []
                self._sync_gen += 1
                self._sync_results.pop(gen - 2, None)
                self._cond.notify_all()
            else:
                deadline = time.monotonic() + self.timeout
                while gen not in self._sync_results:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise ExchangeTimeout(f"barrier timed out at generation {gen}")
                    self._cond.wait(remaining)
            return self._sync_results[gen]


class ThreadTransport:
    def __init__(self, group: ThreadGroup, rank: int):
        self.group = group
        self.rank = rank
        self.size = group.size
        self._recv_seq: dict[tuple[int, int], int] = {}

    def send(self, dst: int, tag: int, arr: np.ndarray) -> None:
        self.group._send(self.rank, dst, tag, arr)

    def recv(self, src: int, tag: int, shape, dtype=np.float64) -> np.ndarray:
        key = (src, tag)
        seq = self._recv_seq.get(key, 0)
        self._recv_seq[key] = seq + 1
        return self.group._recv(src, self.rank, tag, seq, shape, dtype)

    def sync(self, value: int = 0) -> int:
        return self.group._sync(value)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- socket transport --------------------------------------------------------

def parse_endpoint(ep: str):
    """Split ``unix:<path>`` or ``tcp:host:port`` into (family, address)."""
    if ep.startswith("unix:"):
        return socket.AF_UNIX, ep[5:]
    if ep.startswith("tcp:"):
        host, _, port = ep[4:].rpartition(":")
        if not host or not port.isdigit():
            raise ExchangeError(f"malformed tcp endpoint {ep!r}")
        return socket.AF_INET, (host, int(port))
    raise ExchangeError(f"unknown endpoint scheme {ep!r}")


def default_unix_endpoints(size: int, directory: str) -> list[str]:
    return [f"unix:{directory}/worker-{r}.sock" for r in range(size)]


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        try:
            part = sock.recv(n - got)
        except OSError:
            return None
        if not part:
            return None
        chunks.append(part)
        got += len(part)
    return b"".join(chunks)


class SocketTransport:
    """Stream-socket transport; one listener plus lazy peer connections."""

    def __init__(self, rank: int, endpoints: list[str], timeout: float = 60.0):
        self.rank = rank
        self.size = len(endpoints)
        self.timeout = timeout
        self._endpoints = endpoints
        self._cond = threading.Condition()
        self._boxes: dict[tuple[int, int], deque] = {}
        self._send_seq: dict[tuple[int, int], int] = {}
        self._recv_seq: dict[tuple[int, int], int] = {}
        self._peers: dict[int, socket.socket] = {}
        self._peer_locks: dict[int, threading.Lock] = {}
        self._closing = False

        family, addr = parse_endpoint(endpoints[rank])
        if family == socket.AF_UNIX:
            import os
            try:
                os.unlink(addr)
            except FileNotFoundError:
                pass
        self._listener = socket.socket(family, socket.SOCK_STREAM)
        if family == socket.AF_INET:
            self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(addr)
        self._listener.listen(self.size + 4)
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._reader, args=(conn,), daemon=True).start()

    def _reader(self, conn: socket.socket):
        with conn:
            while True:
                hdr = _read_exact(conn, _HEADER.size)
                if hdr is None:
                    return
                seq, src, tag, nbytes = _HEADER.unpack(hdr)
                body = _read_exact(conn, nbytes) if nbytes else b""
                if body is None and nbytes:
                    return
                with self._cond:
                    self._boxes.setdefault((src, tag), deque()).append((seq, body))
                    self._cond.notify_all()

    def _peer(self, dst: int) -> socket.socket:
        sock = self._peers.get(dst)
        if sock is not None:
            return sock
        family, addr = parse_endpoint(self._endpoints[dst])
        deadline = time.monotonic() + self.timeout
        while True:
            s = socket.socket(family, socket.SOCK_STREAM)
            try:
                s.connect(addr)
                break
            except OSError:
                s.close()
                if time.monotonic() > deadline:
                    raise ExchangeTimeout(
                        f"rank {self.rank} could not connect to rank {dst} at "
                        f"{self._endpoints[dst]}")
                time.sleep(0.02)
        self._peers[dst] = s
        self._peer_locks[dst] = threading.Lock()
        return s

    def send(self, dst: int, tag: int, arr: np.ndarray) -> None:
        arr = np.asarray(arr)
        body = _to_wire(arr)
        key = (dst, tag)
        seq = self._send_seq.get(key, 0)
        self._send_seq[key] = seq + 1
        sock = self._peer(dst)
        frame = _HEADER.pack(seq, self.rank, tag, len(body)) + body
        with self._peer_locks[dst]:
            sock.sendall(frame)

    def recv(self, src: int, tag: int, shape, dtype=np.float64) -> np.ndarray:
        key = (src, tag)
        expect = self._recv_seq.get(key, 0)
        self._recv_seq[key] = expect + 1
        deadline = time.monotonic() + self.timeout
        with self._cond:
            while not self._boxes.get(key):
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ExchangeTimeout(
                        f"rank {self.rank} timed out waiting for rank {src}, tag {tag}")
                self._cond.wait(remaining)
            seq, body = self._boxes[key].popleft()
        if seq != expect:
            raise ExchangeError(
                f"rank {self.rank} expected seq {expect} from rank {src} tag {tag}, "
                f"got {seq}")
        nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if len(body) != nbytes:
            raise ExchangeError(
                f"rank {self.rank} expected {nbytes} payload bytes from rank {src} "
                f"tag {tag}, got {len(body)}")
        return _from_wire(body, tuple(shape), dtype)

    def sync(self, value: int = 0) -> int:
        buf = np.array([int(value)], dtype=np.int64)
        if self.rank == 0:
            best = int(value)
            for src in range(1, self.size):
                got = self.recv(src, TAG_SYNC, (1,), np.int64)
                best = max(best, int(got[0]))
            out = np.array([best], dtype=np.int64)
            for dst in range(1, self.size):
                self.send(dst, TAG_SYNC, out)
            return best
        self.send(0, TAG_SYNC, buf)
        return int(self.recv(0, TAG_SYNC, (1,), np.int64)[0])

    def close(self) -> None:
        self._closing = True
        try:
            self._listener.close()
        except OSError:
            pass
        for s in self._peers.values():
            try:
                s.close()
            except OSError:
                pass
        self._peers.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- collectives -------------------------------------------------------------

def ring_allgather(transport, prev: int, next_: int, my_slot: int, nslots: int,
                   payload: np.ndarray, tag: int = TAG_RING) -> list[np.ndarray]:
    """Allgather equal-shape arrays around a ring, results ordered by slot."""
    out: list[np.ndarray] = [None] * nslots  # type: ignore[list-item]
    out[my_slot] = payload
    cur = payload
    for step in range(1, nslots):
        transport.send(next_, tag, cur)
        cur = transport.recv(prev, tag, payload.shape)
        out[(my_slot - step) % nslots] = cur
    return out


# -- the halo update ---------------------------------------------------------

class HaloExchanger:
    """Two-layer ghost update for one worker's extended block."""

    def __init__(self, topo: PartitionTopology, rank: int, transport):
        self.topo = topo
        self.rank = rank
        self.transport = transport
        blk = topo.block(rank)
        self.block = blk
        d = topo.n_az_distinct
        prev_blk = topo.block(blk.ring_prev)
        next_blk = topo.block(blk.ring_next)
        # owned planes that fill each ring neighbor's ghosts, as local
        # extended indices; the modulo skips the closing duplicate station
        gp = [prev_blk.az_hi % d, (prev_blk.az_hi + 1) % d]
        gn = [(next_blk.az_lo - 2) % d, (next_blk.az_lo - 1) % d]
        self._send_prev = [g - blk.az_lo + GHOST for g in gp]
        self._send_next = [g - blk.az_lo + GHOST for g in gn]
        nk_own = blk.nk
        for idx in self._send_prev + self._send_next:
            if not (GHOST <= idx < GHOST + nk_own):
                raise ExchangeError(
                    f"rank {rank}: ring ghost source plane {idx} outside owned range; "
                    f"azimuthal blocks too small")

    # -- axial pass ----------------------------------------------------------

    def post(self, q: np.ndarray) -> None:
        """Send axial halo planes (owned azimuthal range)."""
        blk = self.block
        nk = q.shape[3]
        klo, khi = GHOST, nk - GHOST
        if blk.west is not None:
            self.transport.send(blk.west, TAG_AX_HI,
                                q[:, GHOST:GHOST + 2, :, klo:khi])
        if blk.east is not None:
            ni = q.shape[1]
            self.transport.send(blk.east, TAG_AX_LO,
                                q[:, ni - GHOST - 2:ni - GHOST, :, klo:khi])

    def complete(self, q: np.ndarray) -> None:
        """Receive axial planes, then run the azimuthal pass."""
        blk = self.block
        ni, nj, nk = q.shape[1], q.shape[2], q.shape[3]
        klo, khi = GHOST, nk - GHOST
        shape = (q.shape[0], GHOST, nj, khi - klo)
        if blk.west is not None:
            q[:, 0:GHOST, :, klo:khi] = self.transport.recv(blk.west, TAG_AX_LO, shape)
        if blk.east is not None:
            q[:, ni - GHOST:ni, :, klo:khi] = self.transport.recv(
                blk.east, TAG_AX_HI, shape)
        self._azimuthal_pass(q)

    def exchange(self, q: np.ndarray) -> None:
        self.post(q)
        self.complete(q)

    def _azimuthal_pass(self, q: np.ndarray) -> None:
        blk = self.block
        nk = q.shape[3]
        p0, p1 = self._send_prev
        n0, n1 = self._send_next
        if self.topo.npz == 1:
            q[:, :, :, nk - GHOST] = q[:, :, :, p0]
            q[:, :, :, nk - GHOST + 1] = q[:, :, :, p1]
            q[:, :, :, 0] = q[:, :, :, n0]
            q[:, :, :, 1] = q[:, :, :, n1]
            return
        slab_prev = np.stack([q[:, :, :, p0], q[:, :, :, p1]], axis=3)
        slab_next = np.stack([q[:, :, :, n0], q[:, :, :, n1]], axis=3)
        self.transport.send(blk.ring_prev, TAG_AZ_HI, slab_prev)
        self.transport.send(blk.ring_next, TAG_AZ_LO, slab_next)
        shape = slab_prev.shape
        lo = self.transport.recv(blk.ring_prev, TAG_AZ_LO, shape)
        hi = self.transport.recv(blk.ring_next, TAG_AZ_HI, shape)
        q[:, :, :, 0:GHOST] = lo
        q[:, :, :, nk - GHOST:nk] = hi
