"""Message-passing kernel: ranks, point-to-point messages and collectives.

Every worker gets a `ClusterCtx` from `init()`. Two backends share one interface:

- "threads" (in-process): every rank is a thread of the current process, and messages move
  through an `InProcessHub`. Used by the test suite and by single-machine runs.
- "sockets": every rank is a process listening on `host:port`. Ranks connect pairwise over
  TCP and frame each message as `[u64 LE payload length][varint tag][payload]`.

Collectives (`barrier`, `broadcast`, `gather`, `all_to_all`, `tree_reduce`, `allreduce`) must
be called by exactly one thread per worker, in the same order on every worker. `send` and
`recv` may be called from any thread. There is no fault tolerance: a lost peer surfaces as
`TransportError` on every worker waiting for it.
"""

import multiprocessing as mp
import os
import pickle
import queue
import socket
import struct
import threading
import time
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import wait as wait_futures
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, Iterable, List, Set, Tuple, Union

from .display import _log
from .errors import ConfigError, TransportError
from .options import get_option
from .wire import WireBuffer

# User tags live below this bound; collectives use the tags above it
MAX_USER_TAG = 1 << 16

_TAG_HELLO = MAX_USER_TAG + 1
_TAG_BARRIER = MAX_USER_TAG + 2
_TAG_RELEASE = MAX_USER_TAG + 3
_TAG_BCAST = MAX_USER_TAG + 4
_TAG_GATHER = MAX_USER_TAG + 5
_TAG_ALLTOALL = MAX_USER_TAG + 6
_TAG_REDUCE = MAX_USER_TAG + 7

_FRAME_LEN = struct.Struct("<Q")

_THREAD_STATE = threading.local()


def current_thread_index() -> int:
    """Index of the compute thread running the caller, 0 on the controller thread."""
    return getattr(_THREAD_STATE, "index", 0)


@dataclass
class Envelope:
    """One message: a tag naming the logical channel and an opaque payload."""

    tag: int
    payload: bytes


@dataclass
class TransportStats:
    """Traffic counters of one worker. Self-addressed messages are not counted."""

    bytes_out: int = 0
    bytes_in: int = 0
    messages_out: int = 0
    messages_in: int = 0
    tree_rounds: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _sent(self, n: int) -> None:
        with self._lock:
            self.bytes_out += n
            self.messages_out += 1

    def _received(self, n: int) -> None:
        with self._lock:
            self.bytes_in += n
            self.messages_in += 1


# -----------------------
# Mailbox
# -----------------------
class _Mailbox:
    """Per-worker inbox of payloads keyed by (source rank, tag), FIFO within a key."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._queues: Dict[Tuple[int, int], Deque[bytes]] = defaultdict(deque)
        self._failed: Dict[int, str] = {}
        self._aborted: Union[str, None] = None

    def deliver(self, src: int, tag: int, payload: bytes) -> None:
        with self._cond:
            self._queues[(src, tag)].append(payload)
            self._cond.notify_all()

    def fail(self, src: int, reason: str) -> None:
        with self._cond:
            self._failed.setdefault(src, reason)
            self._cond.notify_all()

    def abort(self, reason: str) -> None:
        with self._cond:
            if self._aborted is None:
                self._aborted = reason
            self._cond.notify_all()

    def _raise_if_broken(self, sources: Iterable[int]) -> None:
        if self._aborted is not None:
            raise TransportError(f"cluster aborted: {self._aborted}")
        for src in sources:
            if src in self._failed:
                raise TransportError(f"peer {src} disconnected: {self._failed[src]}")

    def take(self, src: int, tag: int, timeout: Union[float, None] = None) -> bytes:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                pending = self._queues.get((src, tag))
                if pending:
                    return pending.popleft()
                self._raise_if_broken([src])
                self._wait(deadline, f"message from rank {src} with tag {tag}")

    def take_any(
        self, sources: Set[int], tag: int, timeout: Union[float, None] = None
    ) -> Tuple[int, bytes]:
        """Returns whichever source has a message ready first, lowest rank on ties."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                for src in sorted(sources):
                    pending = self._queues.get((src, tag))
                    if pending:
                        return src, pending.popleft()
                self._raise_if_broken(sources)
                self._wait(deadline, f"message with tag {tag} from ranks {sorted(sources)}")

    def _wait(self, deadline: Union[float, None], what: str) -> None:
        if deadline is None:
            self._cond.wait()
        else:
            left = deadline - time.monotonic()
            if left <= 0 or not self._cond.wait(left):
                raise TransportError(f"timed out waiting for {what}")


# -----------------------
# Backends
# -----------------------
class InProcessHub:
    """Shared switchboard for ranks that are threads of one process.

    Args:
        size: Number of ranks that will join.
    """

    def __init__(self, size: int) -> None:
        if size < 1:
            raise ConfigError(f"cluster size must be at least 1, got {size}")
        self.size = size
        self.mailboxes = [_Mailbox() for _ in range(size)]
        self._joined: Set[int] = set()
        self._lock = threading.Lock()

    def join(self, rank: int) -> None:
        with self._lock:
            if rank in self._joined:
                raise ConfigError(f"duplicate rank {rank}: already joined this cluster")
            self._joined.add(rank)

    def abort(self, reason: str) -> None:
        """Wakes every rank blocked in a receive with a TransportError."""
        for mailbox in self.mailboxes:
            mailbox.abort(reason)


class _InProcessBackend:
    def __init__(self, hub: InProcessHub, rank: int) -> None:
        hub.join(rank)
        self.hub = hub
        self.rank = rank
        self.mailbox = hub.mailboxes[rank]

    def send_bytes(self, dest: int, tag: int, payload: bytes) -> None:
        self.hub.mailboxes[dest].deliver(self.rank, tag, bytes(payload))

    def close(self) -> None:
        pass


def _frame(tag: int, payload: bytes) -> bytes:
    buf = WireBuffer()
    buf.put_varint(tag)
    return _FRAME_LEN.pack(len(payload)) + bytes(buf.data) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    data = bytearray(n)
    view = memoryview(data)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            raise EOFError("connection closed")
        got += k
    return bytes(data)


def _read_frame(sock: socket.socket) -> Tuple[int, bytes]:
    (length,) = _FRAME_LEN.unpack(_recv_exact(sock, 8))
    tag = 0
    shift = 0
    while True:
        byte = _recv_exact(sock, 1)[0]
        tag |= (byte & 0x7F) << shift
        if byte < 0x80:
            break
        shift += 7
        if shift > 63:
            raise EOFError("malformed frame tag")
    return tag, _recv_exact(sock, length)


def parse_peers(peers: Union[str, Iterable[str]]) -> List[Tuple[str, int]]:
    """Parses `host:port` entries, given as a list or one comma-separated string.

    Raises:
        ConfigError: On a malformed entry or a duplicate address.
    """
    entries = peers.split(",") if isinstance(peers, str) else list(peers)
    parsed = []
    for entry in entries:
        entry = entry.strip()
        host, sep, port = entry.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ConfigError(f"peer {entry!r} is not of the form host:port")
        parsed.append((host, int(port)))
    if len(set(parsed)) != len(parsed):
        raise ConfigError(f"duplicate peer address in {entries}")
    return parsed


def free_ports(n: int, host: str = "127.0.0.1") -> List[int]:
    """Asks the OS for `n` currently free TCP ports on `host`."""
    socks = []
    try:
        for _ in range(n):
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.bind((host, 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


class _SocketBackend:
    """One TCP connection per peer; rank i dials every lower rank and accepts every higher one."""

    def __init__(
        self, rank: int, peers: List[Tuple[str, int]], connect_timeout: float
    ) -> None:
        self.rank = rank
        self.size = len(peers)
        self.peers = peers
        self.mailbox = _Mailbox()
        self._socks: Dict[int, socket.socket] = {}
        self._send_locks = {j: threading.Lock() for j in range(self.size)}
        self._closing = False
        self._readers: List[threading.Thread] = []
        deadline = time.monotonic() + connect_timeout

        listener = None
        if rank < self.size - 1:
            listener = socket.create_server(("", peers[rank][1]), reuse_port=False)
        try:
            for j in range(rank):
                self._dial(j, deadline)
            if listener is not None:
                self._accept_all(listener, deadline)
        except BaseException:
            self._shutdown_sockets()
            raise
        finally:
            if listener is not None:
                listener.close()

        for j, sock in self._socks.items():
            reader = threading.Thread(
                target=self._read_loop, args=(j, sock), name=f"blaze-recv-{j}", daemon=True
            )
            reader.start()
            self._readers.append(reader)

    def _dial(self, j: int, deadline: float) -> None:
        host, port = self.peers[j]
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=1.0)
                break
            except OSError as e:
                if time.monotonic() > deadline:
                    raise TransportError(
                        f"startup failed: could not reach peer {j} at {host}:{port} ({e})"
                    ) from e
                time.sleep(0.05)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(None)
        hello = WireBuffer()
        hello.put_varint(self.rank)
        hello.put_varint(self.size)
        sock.sendall(_frame(_TAG_HELLO, hello.getvalue()))
        self._socks[j] = sock

    def _accept_all(self, listener: socket.socket, deadline: float) -> None:
        expected = set(range(self.rank + 1, self.size))
        while expected:
            left = deadline - time.monotonic()
            if left <= 0:
                missing = ", ".join(
                    f"{j} at {self.peers[j][0]}:{self.peers[j][1]}" for j in sorted(expected)
                )
                raise TransportError(f"startup failed: peers never connected: {missing}")
            listener.settimeout(left)
            try:
                sock, _ = listener.accept()
            except socket.timeout:
                continue
            sock.settimeout(max(deadline - time.monotonic(), 0.1))
            try:
                tag, payload = _read_frame(sock)
            except (EOFError, OSError):
                sock.close()
                continue
            hello = WireBuffer(payload)
            peer_rank, peer_size = hello.get_varint(), hello.get_varint()
            if tag != _TAG_HELLO or peer_size != self.size:
                sock.close()
                raise ConfigError(
                    f"peer announced rank {peer_rank} of a {peer_size}-worker cluster, expected {self.size}"
                )
            if peer_rank in self._socks or peer_rank not in expected:
                sock.close()
                raise ConfigError(f"duplicate rank {peer_rank} connected to rank {self.rank}")
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(None)
            self._socks[peer_rank] = sock
            expected.discard(peer_rank)

    def _read_loop(self, src: int, sock: socket.socket) -> None:
        try:
            while True:
                tag, payload = _read_frame(sock)
                self.mailbox.deliver(src, tag, payload)
        except (EOFError, OSError) as e:
            self.mailbox.fail(src, "closed" if self._closing else str(e) or "connection lost")

    def send_bytes(self, dest: int, tag: int, payload: bytes) -> None:
        if dest == self.rank:
            self.mailbox.deliver(dest, tag, bytes(payload))
            return
        frame = _frame(tag, bytes(payload))
        with self._send_locks[dest]:
            try:
                self._socks[dest].sendall(frame)
            except OSError as e:
                raise TransportError(f"peer {dest} disconnected: {e}") from e

    def _shutdown_sockets(self) -> None:
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()

    def close(self) -> None:
        self._closing = True
        self._shutdown_sockets()


# -----------------------
# Context
# -----------------------
@dataclass
class ClusterConfig:
    """Everything `init` needs to join a cluster.

    Attributes:
        backend: "threads" (alias "in_process") or "sockets". Defaults to option `blaze.backend`.
        size: Number of workers. Taken from `peers` when omitted.
        rank: This worker's rank.
        peers: `host:port` per rank, for the sockets backend.
        threads_per_worker: Compute threads. Defaults to option `blaze.threads_per_worker`.
        connect_timeout: Seconds to wait for peers. Defaults to option `blaze.connect_timeout`.
        hub: Shared `InProcessHub`, for the threads backend with more than one rank.
    """

    backend: Union[str, None] = None
    size: Union[int, None] = None
    rank: int = 0
    peers: Union[List[str], str, None] = None
    threads_per_worker: Union[int, None] = None
    connect_timeout: Union[float, None] = None
    hub: Union[InProcessHub, None] = None


class ClusterCtx:
    """A worker's handle on the cluster: its rank, the worker count, messaging and collectives.

    Create one with `init()`. The context owns the worker's compute thread pool.
    """

    def __init__(
        self, rank: int, size: int, threads_per_worker: int, backend: str, transport: Any
    ) -> None:
        self.rank = rank
        self.size = size
        self.threads_per_worker = threads_per_worker
        self.backend = backend
        self.stats = TransportStats()
        self._transport = transport
        self._pool = (
            ThreadPoolExecutor(
                max_workers=threads_per_worker, thread_name_prefix=f"blaze-{rank}"
            )
            if threads_per_worker > 1
            else None
        )

    def __repr__(self) -> str:
        return (
            f"ClusterCtx(rank={self.rank}, size={self.size}, "
            f"threads_per_worker={self.threads_per_worker}, backend={self.backend!r})"
        )

    def __enter__(self) -> "ClusterCtx":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def close(self) -> None:
        """Shuts down the thread pool and the connections to peers."""
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None
        self._transport.close()

    # -----------------------
    # Point to point
    # -----------------------
    def _check_rank(self, rank: int) -> None:
        if not 0 <= rank < self.size:
            raise ConfigError(f"rank {rank} outside cluster of size {self.size}")

    def _send(self, dest: int, tag: int, payload: bytes) -> None:
        if dest != self.rank:
            self.stats._sent(len(payload))
        self._transport.send_bytes(dest, tag, payload)

    def _recv(self, src: int, tag: int) -> bytes:
        payload = self._transport.mailbox.take(src, tag)
        if src != self.rank:
            self.stats._received(len(payload))
        return payload

    def _recv_any(self, sources: Set[int], tag: int) -> Tuple[int, bytes]:
        src, payload = self._transport.mailbox.take_any(sources, tag)
        if src != self.rank:
            self.stats._received(len(payload))
        return src, payload

    def send(self, dest: int, envelope: Envelope) -> None:
        """Sends an envelope to `dest`. Safe to call from any thread.

        Raises:
            ConfigError: If `dest` is not a rank or the tag is reserved.
            TransportError: If the peer is gone.
        """
        self._check_rank(dest)
        if not 0 <= envelope.tag < MAX_USER_TAG:
            raise ConfigError(f"tag {envelope.tag} outside user range [0, {MAX_USER_TAG})")
        self._send(dest, envelope.tag, envelope.payload)

    def recv(self, src: int, tag: int) -> Envelope:
        """Returns the oldest undelivered envelope from `src` with `tag`, blocking until one arrives.

        Raises:
            TransportError: If `src` disconnected with nothing left to deliver.
        """
        self._check_rank(src)
        return Envelope(tag, self._recv(src, tag))

    # -----------------------
    # Collectives
    # -----------------------
    def barrier(self) -> None:
        """Returns only after every worker has entered the barrier."""
        if self.size == 1:
            return
        if self.rank == 0:
            for j in range(1, self.size):
                self._recv(j, _TAG_BARRIER)
            for j in range(1, self.size):
                self._send(j, _TAG_RELEASE, b"")
        else:
            self._send(0, _TAG_BARRIER, b"")
            self._recv(0, _TAG_RELEASE)

    def broadcast(self, payload: Union[bytes, None], root: int = 0) -> bytes:
        """Returns root's payload on every worker. Non-root workers may pass None."""
        if self.rank == root:
            data = bytes(payload or b"")
            for j in range(self.size):
                if j != root:
                    self._send(j, _TAG_BCAST, data)
            return data
        return self._recv(root, _TAG_BCAST)

    def gather(self, payload: bytes, root: int = 0) -> Union[List[bytes], None]:
        """Collects every worker's payload at `root`, in rank order. Other workers get None."""
        if self.rank != root:
            self._send(root, _TAG_GATHER, payload)
            return None
        return [
            bytes(payload) if j == root else self._recv(j, _TAG_GATHER)
            for j in range(self.size)
        ]

    def allgather(self, payload: bytes) -> List[bytes]:
        """Every worker's payload on every worker, in rank order."""
        gathered = self.gather(payload)
        buf = WireBuffer()
        if self.rank == 0:
            for part in gathered:
                buf.put_bytes(part)
        data = WireBuffer(self.broadcast(buf.getvalue()))
        return [data.get_bytes() for _ in range(self.size)]

    def all_to_all(
        self,
        outgoing: List[bytes],
        on_recv: Union[Callable[[int, bytes], None], None] = None,
    ) -> List[bytes]:
        """Sends `outgoing[j]` to rank j and returns what every rank addressed to this one.

        Args:
            outgoing: Exactly `size` payloads; the entry for this rank is delivered locally.
            on_recv: Optional callback run on each incoming payload as soon as it arrives, so
                decoding overlaps with the remaining receipts.

        Returns:
            Entry j is the payload rank j sent here.
        """
        if len(outgoing) != self.size:
            raise ValueError(
                f"all_to_all needs {self.size} outgoing payloads, got {len(outgoing)}"
            )
        incoming: List[bytes] = [b""] * self.size
        incoming[self.rank] = bytes(outgoing[self.rank])
        if on_recv is not None:
            on_recv(self.rank, incoming[self.rank])
        for step in range(1, self.size):
            dest = (self.rank + step) % self.size
            self._send(dest, _TAG_ALLTOALL, outgoing[dest])
        pending = set(range(self.size)) - {self.rank}
        while pending:
            src, payload = self._recv_any(pending, _TAG_ALLTOALL)
            pending.discard(src)
            incoming[src] = payload
            if on_recv is not None:
                on_recv(src, payload)
        return incoming

    def tree_reduce(
        self, local: bytes, merge: Callable[[bytes, bytes], bytes]
    ) -> Union[bytes, None]:
        """Merges every worker's payload into rank 0 over a binomial tree.

        Rank 0 runs ceil(log2(size)) rounds; `stats.tree_rounds` records how many this rank ran.

        Args:
            local: This worker's payload.
            merge: Associative, commutative merge of two encoded payloads.

        Returns:
            The merged payload at rank 0, None elsewhere.
        """
        acc = bytes(local)
        step = 1
        rounds = 0
        while step < self.size:
            rounds += 1
            if self.rank % (2 * step) == 0:
                partner = self.rank + step
                if partner < self.size:
                    acc = merge(acc, self._recv(partner, _TAG_REDUCE))
            else:
                self._send(self.rank - step, _TAG_REDUCE, acc)
                break
            step *= 2
        self.stats.tree_rounds = rounds
        return acc if self.rank == 0 else None

    def allreduce(self, local: bytes, merge: Callable[[bytes, bytes], bytes]) -> bytes:
        """tree_reduce followed by a broadcast of the result."""
        return self.broadcast(self.tree_reduce(local, merge))

    # -----------------------
    # Threads
    # -----------------------
    def parallel(self, fn: Callable[[int], Any]) -> List[Any]:
        """Runs `fn(thread_index)` once per compute thread and returns the results in thread order.

        If several threads raise, the exception of the lowest thread index propagates.
        """
        if self._pool is None:
            return [_run_indexed(fn, 0)]
        futures = [
            self._pool.submit(_run_indexed, fn, t) for t in range(self.threads_per_worker)
        ]
        wait_futures(futures)
        return [future.result() for future in futures]


def _run_indexed(fn: Callable[[int], Any], index: int) -> Any:
    previous = getattr(_THREAD_STATE, "index", 0)
    _THREAD_STATE.index = index
    try:
        return fn(index)
    finally:
        _THREAD_STATE.index = previous


def _normalize_backend(backend: Union[str, None]) -> str:
    backend = (backend or get_option("backend")).lower()
    if backend == "in_process":
        backend = "threads"
    if backend not in ("threads", "sockets"):
        raise ConfigError(f"unknown backend {backend!r}; use threads or sockets")
    return backend


def init(config: Union[ClusterConfig, None] = None, **kwargs: Any) -> ClusterCtx:
    """Joins a cluster and returns this worker's context.

    Example:
        ```python
        ctx = init(ClusterConfig(backend="sockets", rank=1, peers="10.0.0.1:7000,10.0.0.2:7000"))
        ctx.barrier()
        ```

    Args:
        config: A `ClusterConfig`. Keyword arguments override its fields.

    Returns:
        A connected `ClusterCtx`; a barrier right after `init` succeeds.

    Raises:
        ConfigError: If the rank is outside the cluster, or a rank joins twice.
        TransportError: If a peer cannot be reached within the connect timeout.
    """
    config = config or ClusterConfig()
    for key, value in kwargs.items():
        setattr(config, key, value)
    backend = _normalize_backend(config.backend)
    threads = (
        config.threads_per_worker
        if config.threads_per_worker is not None
        else get_option("threads_per_worker")
    )
    if threads < 1:
        raise ConfigError(f"threads_per_worker must be at least 1, got {threads}")

    if backend == "sockets":
        if config.peers is None:
            raise ConfigError("the sockets backend needs a peer list")
        peers = parse_peers(config.peers)
        size = len(peers)
        if config.size is not None and config.size != size:
            raise ConfigError(f"size {config.size} disagrees with {size} peers")
    else:
        size = config.size or (config.hub.size if config.hub else 1)
    if not 0 <= config.rank < size:
        raise ConfigError(f"rank {config.rank} outside cluster of size {size}")

    if backend == "sockets":
        timeout = (
            config.connect_timeout
            if config.connect_timeout is not None
            else get_option("connect_timeout")
        )
        transport: Any = _SocketBackend(config.rank, peers, timeout)
    else:
        hub = config.hub
        if hub is None:
            if size != 1:
                raise ConfigError("a threads cluster of more than one rank needs a shared hub")
            hub = InProcessHub(1)
        elif hub.size != size:
            raise ConfigError(f"size {size} disagrees with hub of size {hub.size}")
        transport = _InProcessBackend(hub, config.rank)

    _log(f"joined {backend} cluster of {size} workers, {threads} threads each", config.rank)
    return ClusterCtx(config.rank, size, threads, backend, transport)


# -----------------------
# Launching
# -----------------------
def _root_cause(errors: List[BaseException]) -> BaseException:
    """Prefers the original failure over the TransportErrors it caused on other ranks."""
    for error in errors:
        if not isinstance(error, TransportError):
            return error
    return errors[0]


def _launch_threads(
    size: int, fn: Callable, args: Tuple, threads_per_worker: Union[int, None]
) -> List[Any]:
    hub = InProcessHub(size)
    results: List[Any] = [None] * size
    failed = [False] * size

    def run(rank: int) -> None:
        try:
            ctx = init(
                ClusterConfig(
                    backend="threads", size=size, rank=rank, hub=hub,
                    threads_per_worker=threads_per_worker,
                )
            )
        except BaseException as e:
            results[rank], failed[rank] = e, True
            hub.abort(f"rank {rank} failed to start: {e!r}")
            return
        try:
            results[rank] = fn(ctx, *args)
        except BaseException as e:
            results[rank], failed[rank] = e, True
            hub.abort(f"rank {rank} failed: {e!r}")
        finally:
            ctx.close()

    workers = [
        threading.Thread(target=run, args=(rank,), name=f"blaze-rank-{rank}")
        for rank in range(size)
    ]
    for worker in workers:
        worker.start()
    for worker in workers:
        worker.join()
    return [(failed[r], results[r]) for r in range(size)]


def _socket_worker(
    fn: Callable,
    args: Tuple,
    peers: List[str],
    rank: int,
    threads_per_worker: Union[int, None],
    results: Any,
) -> None:
    try:
        with init(
            ClusterConfig(
                backend="sockets", rank=rank, peers=peers,
                threads_per_worker=threads_per_worker,
            )
        ) as ctx:
            outcome = (rank, False, fn(ctx, *args))
    except BaseException as e:
        outcome = (rank, True, e)
    try:
        pickle.dumps(outcome)
    except Exception as e:
        outcome = (rank, True, TransportError(f"rank {rank} result not picklable: {e!r}"))
    results.put(outcome)


def _launch_sockets(
    size: int, fn: Callable, args: Tuple, threads_per_worker: Union[int, None]
) -> List[Any]:
    peers = [f"127.0.0.1:{port}" for port in free_ports(size)]
    method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
    mp_ctx = mp.get_context(method)
    results = mp_ctx.Queue()
    processes = [
        mp_ctx.Process(
            target=_socket_worker,
            args=(fn, args, peers, rank, threads_per_worker, results),
            name=f"blaze-rank-{rank}",
        )
        for rank in range(size)
    ]
    for process in processes:
        process.start()

    outcomes: Dict[int, Tuple[bool, Any]] = {}
    dead_since: Dict[int, float] = {}
    while len(outcomes) < size:
        try:
            rank, failed, value = results.get(timeout=0.2)
            outcomes[rank] = (failed, value)
            continue
        except queue.Empty:
            pass
        now = time.monotonic()
        for rank, process in enumerate(processes):
            if rank in outcomes or process.exitcode is None:
                continue
            # Give the result pipe a moment to drain before declaring the rank lost
            if now - dead_since.setdefault(rank, now) > 2.0:
                outcomes[rank] = (
                    True,
                    TransportError(
                        f"worker {rank} exited with code {process.exitcode} before reporting"
                    ),
                )
    for process in processes:
        process.join(timeout=5)
        if process.is_alive():
            process.kill()
    return [outcomes[rank] for rank in range(size)]


def launch(
    size: int,
    fn: Callable[..., Any],
    *args: Any,
    backend: Union[str, None] = None,
    threads_per_worker: Union[int, None] = None,
    return_exceptions: bool = False,
) -> List[Any]:
    """Runs `fn(ctx, *args)` on every rank of a fresh cluster and returns the results in rank order.

    The threads backend runs ranks as threads of this process. The sockets backend forks one
    process per rank, connected over loopback TCP; results must then be picklable.

    Example:
        ```python
        launch(4, lambda ctx: ctx.rank * 2)  # [0, 2, 4, 6]
        ```

    Args:
        size: Number of workers.
        fn: Function run on every worker with its `ClusterCtx`.
        *args: Extra positional arguments for `fn`.
        backend: "threads" or "sockets". Defaults to option `blaze.backend`.
        threads_per_worker: Compute threads per worker.
        return_exceptions: Return exceptions in place of results instead of raising.

    Returns:
        One result per rank.

    Raises:
        Exception: Unless `return_exceptions`, the first failure that is not a mere consequence
            of another rank failing.
    """
    backend = _normalize_backend(backend)
    runner = _launch_sockets if backend == "sockets" else _launch_threads
    outcomes = runner(size, fn, args, threads_per_worker)
    if return_exceptions:
        return [value for _, value in outcomes]
    errors = [value for failed, value in outcomes if failed]
    if errors:
        raise _root_cause(errors)
    return [value for _, value in outcomes]


def cpu_count() -> int:
    """Cores usable by this process."""
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1
