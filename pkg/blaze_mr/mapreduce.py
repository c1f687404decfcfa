"""The MapReduce engine.

A job takes an input container, a mapper, a reducer and a target:

    ```python
    counts = DistHashMap(ctx)
    mapreduce(lines, lambda i, line, emit: [emit(w, 1) for w in line.split(" ") if w], "sum", counts)
    ```

Every emitted pair is reduced right away into a fixed-size cache owned by the emitting
thread. When two keys collide in the cache, the resident pair is evicted into a node-local
table shared by the worker's threads. After the map phase the caches are flushed into the
node-local table, its pairs are grouped by owner rank, encoded and exchanged, and every
worker decodes and reduces the batches it receives into its part of the target as they
arrive. Only locally reduced, distinct keys ever cross the network.

Targets that are plain local sequences (lists or numpy arrays) with at most
`blaze.dense_max_keys` entries take the dense path instead: each thread reduces into its own
array indexed directly by key, the arrays are merged pairwise within the worker, then across
workers by tree reduction, and the result is merged into the target on every worker.

Reducers must be associative and commutative, since the engine reorders merges freely.
"""

import functools
import math
import threading
from collections.abc import Mapping
from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, Iterable, List, Tuple, Union

import numpy as np

from .DistHashMap import DistHashMap
from .DistRange import DistRange
from .DistVector import DistVector
from .display import _log
from .errors import ContractError, DecodeError, JobError
from .options import get_option
from .transport import ClusterCtx
from .utils import (
    _agree_codec,
    _allsum_ints,
    _describe_callable,
    _propagate_failure,
    _raise_collectively,
    _thread_chunks,
)
from .wire import UVARINT, Codec, WireBuffer, decode_pairs, encode_pairs

Input = Union[DistRange, DistVector, DistHashMap]
Target = Union[DistVector, DistHashMap, list, np.ndarray]

_EMPTY = object()
_UNSET = object()


# -----------------------
# Reducers
# -----------------------
def _add(a: Any, b: Any) -> Any:
    return a + b


def _mul(a: Any, b: Any) -> Any:
    return a * b


def _min(a: Any, b: Any) -> Any:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.minimum(a, b)
    return b if b < a else a


def _max(a: Any, b: Any) -> Any:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.maximum(a, b)
    return b if b > a else a


class Reducer:
    """An associative, commutative merge of two values into one.

    `merge(existing, new)` returns the merged value. It may update `existing` in place and
    return it, because values held by the engine are never shared with the caller.

    Args:
        merge: The merge function.
        name: Optional name, shown in progress lines.
        identity: Value that leaves every other value unchanged when merged, if known.
    """

    def __init__(
        self,
        merge: Callable[[Any, Any], Any],
        name: Union[str, None] = None,
        identity: Any = None,
    ) -> None:
        self.merge = merge
        self.name = name or _describe_callable(merge)
        self.identity = identity

    def __call__(self, existing: Any, new: Any) -> Any:
        return self.merge(existing, new)

    def __repr__(self) -> str:
        return f"Reducer({self.name})"

    @classmethod
    def builtin(cls, name: str) -> "Reducer":
        """One of "sum", "prod", "min" and "max".

        Raises:
            ValueError: For any other name.
        """
        try:
            merge, identity = BUILTIN_REDUCERS[name]
        except KeyError:
            raise ValueError(
                f"Unknown reducer {name!r}. Built-in reducers: {sorted(BUILTIN_REDUCERS)}"
            ) from None
        return cls(merge, name, identity)

    def reduce(self, values: Iterable[Any]) -> Any:
        """Folds values, starting from the identity when there is one."""
        if self.identity is None:
            return functools.reduce(self.merge, values)
        return functools.reduce(self.merge, values, self.identity)


BUILTIN_REDUCERS: Dict[str, Tuple[Callable, Any]] = {
    "sum": (_add, 0),
    "prod": (_mul, 1),
    "min": (_min, math.inf),
    "max": (_max, -math.inf),
}


def resolve(reducer: Union[str, Callable, Reducer]) -> Reducer:
    """Accepts a built-in reducer name, a merge function or a Reducer."""
    if isinstance(reducer, Reducer):
        return reducer
    if isinstance(reducer, str):
        return Reducer.builtin(reducer)
    if callable(reducer):
        return Reducer(reducer)
    raise TypeError(f"Expected a reducer name, function or Reducer, got {type(reducer)}")


# -----------------------
# Counters
# -----------------------
@dataclass
class JobCounters:
    """What one worker did during one MapReduce job.

    Attributes:
        pairs_emitted: Calls to emit.
        cache_evictions: Pairs pushed out of thread caches into the node-local table.
        pairs_shuffled: Locally reduced pairs handed to the exchange, including those this
            worker keeps.
        wire_bytes_out: Payload bytes sent to other workers.
        wire_bytes_in: Payload bytes received from other workers.
        reduce_calls: Merges performed.
        thread_rounds: Pairwise rounds of the dense merge within the worker.
        path: "shuffle", "local" or "dense".
    """

    pairs_emitted: int = 0
    cache_evictions: int = 0
    pairs_shuffled: int = 0
    wire_bytes_out: int = 0
    wire_bytes_in: int = 0
    reduce_calls: int = 0
    thread_rounds: int = 0
    path: str = "shuffle"

    def as_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def allsum(self, ctx: ClusterCtx) -> "JobCounters":
        """Counters summed over every worker. Collective."""
        names = [f.name for f in fields(self) if f.name not in ("path", "thread_rounds")]
        totals = _allsum_ints(ctx, [getattr(self, name) for name in names])
        summed = JobCounters(**dict(zip(names, totals)))
        summed.thread_rounds = self.thread_rounds
        summed.path = self.path
        return summed

    def __add__(self, other: "JobCounters") -> "JobCounters":
        total = JobCounters(path=self.path)
        for f in fields(self):
            if f.name != "path":
                setattr(total, f.name, getattr(self, f.name) + getattr(other, f.name))
        return total


# -----------------------
# Eager reduction tables
# -----------------------
class NodeTable:
    """Worker-wide table of reduced pairs, split into independently locked shards."""

    def __init__(self, shards: int, merge: Callable[[Any, Any], Any]) -> None:
        self.mask = shards - 1
        self.merge = merge
        self.shards: List[Dict[Any, Any]] = [{} for _ in range(shards)]
        self.locks = [threading.Lock() for _ in range(shards)]
        self.merges = [0] * shards

    def add(self, key: Any, value: Any) -> None:
        i = hash(key) & self.mask
        with self.locks[i]:
            shard = self.shards[i]
            if key in shard:
                shard[key] = self.merge(shard[key], value)
                self.merges[i] += 1
            else:
                shard[key] = value

    def items(self) -> Iterable[Tuple[Any, Any]]:
        for shard in self.shards:
            yield from shard.items()

    def first(self) -> Union[Tuple[Any, Any], None]:
        for shard in self.shards:
            for pair in shard.items():
                return pair
        return None

    def __len__(self) -> int:
        return sum(len(shard) for shard in self.shards)


class ThreadCache:
    """A thread's open-addressing cache of reduced pairs.

    A key probes up to `probes` consecutive slots from its home slot. If it finds neither
    itself nor a free slot, the pair in the home slot is evicted into `spill` and the new key
    takes its place.

    Args:
        slots: Capacity, a power of two.
        probes: Slots probed before evicting.
        merge: Reducer merge function.
        spill: Receives evicted pairs, usually `NodeTable.add`.
    """

    __slots__ = (
        "keys", "values", "used", "mask", "probes", "merge", "spill",
        "emitted", "evictions", "merges",
    )

    def __init__(
        self,
        slots: int,
        probes: int,
        merge: Callable[[Any, Any], Any],
        spill: Callable[[Any, Any], None],
    ) -> None:
        self.keys: List[Any] = [_EMPTY] * slots
        self.values: List[Any] = [None] * slots
        self.used: List[int] = []
        self.mask = slots - 1
        self.probes = min(probes, slots)
        self.merge = merge
        self.spill = spill
        self.emitted = 0
        self.evictions = 0
        self.merges = 0

    def add(self, key: Any, value: Any) -> None:
        self.emitted += 1
        keys = self.keys
        mask = self.mask
        home = hash(key) & mask
        for p in range(self.probes):
            i = (home + p) & mask
            resident = keys[i]
            if resident is _EMPTY:
                keys[i] = key
                self.values[i] = value
                self.used.append(i)
                return
            if resident == key:
                self.values[i] = self.merge(self.values[i], value)
                self.merges += 1
                return
        self.spill(keys[home], self.values[home])
        self.evictions += 1
        keys[home] = key
        self.values[home] = value

    def get(self, key: Any, default: Any = None) -> Any:
        home = hash(key) & self.mask
        for p in range(self.probes):
            i = (home + p) & self.mask
            if self.keys[i] is not _EMPTY and self.keys[i] == key:
                return self.values[i]
        return default

    def __len__(self) -> int:
        return len(self.used)

    def flush(self) -> None:
        """Moves every resident pair into `spill` and empties the cache."""
        for i in self.used:
            self.spill(self.keys[i], self.values[i])
            self.keys[i] = _EMPTY
            self.values[i] = None
        self.used = []


class DenseSlots:
    """A thread's array of reduced values for keys 0 .. size - 1."""

    __slots__ = ("values", "size", "merge", "emitted", "merges")

    def __init__(self, size: int, merge: Callable[[Any, Any], Any]) -> None:
        self.values: List[Any] = [_UNSET] * size
        self.size = size
        self.merge = merge
        self.emitted = 0
        self.merges = 0

    def add(self, key: Any, value: Any) -> None:
        if not isinstance(key, (int, np.integer)) or not 0 <= key < self.size:
            raise JobError(f"emitted key {key!r} outside dense target range [0, {self.size})")
        self.emitted += 1
        current = self.values[key]
        if current is _UNSET:
            self.values[key] = value
        else:
            self.values[key] = self.merge(current, value)
            self.merges += 1


class Emitter:
    """The emit handler given to mappers when the `blaze.debug` option is on.

    Raises ContractError once its map phase has closed.
    """

    __slots__ = ("_add", "closed")

    def __init__(self, add: Callable[[Any, Any], None]) -> None:
        self._add = add
        self.closed = False

    def __call__(self, key: Any, value: Any) -> None:
        if self.closed:
            raise ContractError(
                "emit called after the map phase closed; mappers must not keep the emit handler"
            )
        self._add(key, value)


# -----------------------
# Map phase
# -----------------------
def _thread_driver(input: Input, mapper: Callable, batched: bool) -> Callable[[int, Callable], None]:
    """Returns run(thread, emit), which feeds that thread's share of `input` to the mapper."""
    if isinstance(input, DistRange):

        def run_range(thread: int, emit: Callable) -> None:
            for chunk in input.thread_chunks(thread):
                if batched:
                    mapper(chunk, emit)
                else:
                    for value in chunk:
                        mapper(value, emit)

        return run_range

    if isinstance(input, DistVector):
        start = input.local_start
        local = input.local

        def run_vector(thread: int, emit: Callable) -> None:
            for lo, hi in input.thread_chunks(thread):
                if batched:
                    mapper(start + lo, local[lo:hi], emit)
                else:
                    for i in range(lo, hi):
                        mapper(start + i, local[i], emit)

        return run_vector

    if isinstance(input, DistHashMap):
        if batched:
            raise ValueError("batched mappers need a DistRange or DistVector input")
        pairs = list(input.local.items())
        chunk = get_option("range_chunk")

        def run_map(thread: int, emit: Callable) -> None:
            for lo, hi in _thread_chunks(len(pairs), input.ctx.threads_per_worker, thread, chunk):
                for key, value in pairs[lo:hi]:
                    mapper(key, value, emit)

        return run_map

    raise TypeError(f"MapReduce input must be a DistRange, DistVector or DistHashMap, got {type(input)}")


def _run_map_phase(
    ctx: ClusterCtx,
    run: Callable[[int, Callable], None],
    adders: List[Callable[[Any, Any], None]],
) -> None:
    """Runs the mapper on every thread, then closes the emit handlers."""
    debug = get_option("debug")
    emitters = [Emitter(add) if debug else add for add in adders]
    error = None
    try:
        ctx.parallel(lambda thread: run(thread, emitters[thread]))
    except Exception as e:
        error = e
    finally:
        for emitter in emitters:
            if isinstance(emitter, Emitter):
                emitter.closed = True
    _propagate_failure(ctx, error)


def _is_local_sequence(target: Any) -> bool:
    return isinstance(target, (list, np.ndarray))


# -----------------------
# The job
# -----------------------
class MapReduceJob:
    """One MapReduce job on one worker. `mapreduce()` is the usual way to run one."""

    def __init__(
        self,
        input: Input,
        mapper: Callable,
        reducer: Union[str, Callable, Reducer],
        target: Target,
        key_codec: Union[Codec, None] = None,
        value_codec: Union[Codec, None] = None,
        batched: bool = False,
    ) -> None:
        self.ctx: ClusterCtx = input.ctx
        self.input = input
        self.mapper = mapper
        self.reducer = resolve(reducer)
        self.target = target
        self.key_codec = key_codec
        self.value_codec = value_codec
        self.batched = batched
        self.counters = JobCounters()
        self.node_table: Union[NodeTable, None] = None
        self.caches: List[ThreadCache] = []

    def run(self, dense: Union[bool, None] = None) -> JobCounters:
        ctx = self.ctx
        out_before, in_before = ctx.stats.bytes_out, ctx.stats.bytes_in
        if dense is None:
            dense = _is_local_sequence(self.target) and len(self.target) <= get_option(
                "dense_max_keys"
            )
        if dense:
            if not _is_local_sequence(self.target):
                raise TypeError("the dense path needs a list or numpy array target")
            self.counters.path = "dense"
            self.run_dense()
        else:
            self.map_phase()
            self.flush_and_shuffle()
        self.counters.wire_bytes_out = ctx.stats.bytes_out - out_before
        self.counters.wire_bytes_in = ctx.stats.bytes_in - in_before
        _log(
            f"mapreduce[{self.counters.path}] reducer={self.reducer.name}: "
            f"{self.counters.pairs_emitted} emitted, {self.counters.pairs_shuffled} shuffled, "
            f"{self.counters.cache_evictions} evictions",
            ctx.rank,
        )
        return self.counters

    # -----------------------
    # Generic path
    # -----------------------
    def map_phase(self) -> None:
        """Runs the mapper with every emit reduced into its thread's cache."""
        ctx = self.ctx
        merge = self.reducer.merge
        self.node_table = NodeTable(get_option("node_table_shards"), merge)
        slots, probes = get_option("thread_cache_slots"), get_option("cache_probes")
        self.caches = [
            ThreadCache(slots, probes, merge, self.node_table.add)
            for _ in range(ctx.threads_per_worker)
        ]
        run = _thread_driver(self.input, self.mapper, self.batched)
        _run_map_phase(ctx, run, [cache.add for cache in self.caches])

    def flush_and_shuffle(self) -> None:
        """Moves reduced pairs from the caches to their owners and into the target.

        Thread caches are flushed into the node-local table, whose pairs are grouped by owner
        rank, encoded, and exchanged. Incoming batches are decoded and reduced into the target
        as each one arrives. Collective.
        """
        ctx = self.ctx
        table = self.node_table
        ctx.parallel(lambda thread: self.caches[thread].flush())
        counters = self.counters
        counters.pairs_emitted = sum(c.emitted for c in self.caches)
        counters.cache_evictions = sum(c.evictions for c in self.caches)
        counters.reduce_calls = sum(c.merges for c in self.caches) + sum(table.merges)
        counters.pairs_shuffled = len(table)

        if _is_local_sequence(self.target):
            counters.path = "local"
            self._allreduce_into_sequence()
            return

        sample = table.first()
        if isinstance(self.target, DistHashMap):
            key_codec = self.key_codec or self.target.key_codec
            value_codec = self.value_codec or self.target.value_codec
        elif isinstance(self.target, DistVector):
            key_codec = self.key_codec or UVARINT
            value_codec = self.value_codec or self.target.codec
        else:
            raise TypeError(
                f"MapReduce target must be a DistHashMap, DistVector, list or numpy array, got {type(self.target)}"
            )
        key_codec = _agree_codec(ctx, key_codec, sample[0] if sample else None, "key")
        value_codec = _agree_codec(ctx, value_codec, sample[1] if sample else None, "value")
        if isinstance(self.target, DistHashMap):
            self.target.key_codec, self.target.value_codec = key_codec, value_codec

        batches, problem = self._partition(key_codec)
        _raise_collectively(ctx, problem, JobError)
        reduce_into = self._target_reducer()

        for key, value in batches[ctx.rank]:
            reduce_into(key, value)
        outgoing = [
            b"" if dest == ctx.rank else encode_pairs(batch, key_codec, value_codec)[0]
            for dest, batch in enumerate(batches)
        ]

        def on_recv(src: int, payload: bytes) -> None:
            if src == ctx.rank:
                return
            try:
                decode_pairs(payload, key_codec, value_codec, reduce_into)
            except DecodeError as e:
                raise JobError(
                    f"corrupt shuffle batch from rank {src} at byte offset {e.offset}: {e}"
                ) from e

        if ctx.size > 1:
            ctx.all_to_all(outgoing, on_recv)

    def _partition(self, key_codec: Codec) -> Tuple[List[List[Tuple[Any, Any]]], Union[str, None]]:
        """Groups the node-local table by owner rank."""
        ctx = self.ctx
        batches: List[List[Tuple[Any, Any]]] = [[] for _ in range(ctx.size)]
        if isinstance(self.target, DistVector):
            n = self.target.global_size()
            for key, value in self.node_table.items():
                if not isinstance(key, (int, np.integer)) or not 0 <= key < n:
                    return batches, f"emitted key {key!r} outside target vector of size {n}"
                batches[self.target.owner_of(int(key))].append((key, value))
        elif ctx.size == 1:
            batches[0] = list(self.node_table.items())
        else:
            for key, value in self.node_table.items():
                batches[key_codec.hash(key) % ctx.size].append((key, value))
        return batches, None

    def _target_reducer(self) -> Callable[[Any, Any], None]:
        merge = self.reducer.merge
        counters = self.counters
        target = self.target
        if isinstance(target, DistHashMap):
            local = target.local

            def into_map(key: Any, value: Any) -> None:
                if key in local:
                    local[key] = merge(local[key], value)
                    counters.reduce_calls += 1
                else:
                    local[key] = value

            return into_map

        start = target.local_start
        shard = target.local

        def into_vector(key: Any, value: Any) -> None:
            i = int(key) - start
            shard[i] = merge(shard[i], value)
            counters.reduce_calls += 1

        return into_vector

    def _allreduce_into_sequence(self) -> None:
        """Reduces the node-local tables of all workers and merges the result into every replica."""
        ctx = self.ctx
        target = self.target
        n = len(target)
        problem = None
        for key, _ in self.node_table.items():
            if not isinstance(key, (int, np.integer)) or not 0 <= key < n:
                problem = f"emitted key {key!r} outside target of length {n}"
                break
        _raise_collectively(ctx, problem, JobError)

        sample = self.node_table.first()
        key_codec = self.key_codec or UVARINT
        value_codec = _agree_codec(
            ctx, self.value_codec, sample[1] if sample else None, "value"
        )
        merge = self.reducer.merge
        reduced = dict(self.node_table.items())
        if ctx.size > 1:

            def merge_payloads(a: bytes, b: bytes) -> bytes:
                table: Dict[Any, Any] = {}
                decode_pairs(a, key_codec, value_codec, table.__setitem__)

                def add(key: Any, value: Any) -> None:
                    table[key] = merge(table[key], value) if key in table else value

                decode_pairs(b, key_codec, value_codec, add)
                return encode_pairs(table.items(), key_codec, value_codec)[0]

            payload = ctx.allreduce(
                encode_pairs(reduced.items(), key_codec, value_codec)[0], merge_payloads
            )
            reduced = {}
            decode_pairs(payload, key_codec, value_codec, reduced.__setitem__)
        for key, value in reduced.items():
            target[key] = merge(target[key], value)
            self.counters.reduce_calls += 1

    # -----------------------
    # Dense path
    # -----------------------
    def run_dense(self) -> None:
        """Per-thread arrays indexed by key, merged pairwise within the worker, then across workers."""
        ctx = self.ctx
        merge = self.reducer.merge
        size = len(self.target)
        slots = [DenseSlots(size, merge) for _ in range(ctx.threads_per_worker)]
        run = _thread_driver(self.input, self.mapper, self.batched)
        _run_map_phase(ctx, run, [s.add for s in slots])

        counters = self.counters
        counters.pairs_emitted = sum(s.emitted for s in slots)
        counters.reduce_calls = sum(s.merges for s in slots)
        arrays = [s.values for s in slots]
        while len(arrays) > 1:
            pairs = len(arrays) // 2
            current = arrays

            def merge_pair(thread: int) -> Union[List[Any], None]:
                if thread >= pairs:
                    return None
                return _merge_dense(current[2 * thread], current[2 * thread + 1], merge)

            merged = ctx.parallel(merge_pair)
            arrays = merged[:pairs] + ([current[-1]] if len(current) % 2 else [])
            counters.thread_rounds += 1
        local = arrays[0]
        counters.pairs_shuffled = sum(v is not _UNSET for v in local)

        if ctx.size > 1:
            sample = next((v for v in local if v is not _UNSET), None)
            value_codec = _agree_codec(ctx, self.value_codec, sample, "value")

            def merge_payloads(a: bytes, b: bytes) -> bytes:
                return _encode_dense(
                    _merge_dense(
                        _decode_dense(a, value_codec), _decode_dense(b, value_codec), merge
                    ),
                    value_codec,
                )

            local = _decode_dense(
                ctx.allreduce(_encode_dense(local, value_codec), merge_payloads), value_codec
            )

        target = self.target
        for key, value in enumerate(local):
            if value is not _UNSET:
                target[key] = merge(target[key], value)
                counters.reduce_calls += 1


def _merge_dense(a: List[Any], b: List[Any], merge: Callable[[Any, Any], Any]) -> List[Any]:
    out = list(a)
    for key, value in enumerate(b):
        if value is _UNSET:
            continue
        current = out[key]
        out[key] = value if current is _UNSET else merge(current, value)
    return out


def _encode_dense(values: List[Any], codec: Codec) -> bytes:
    buf = WireBuffer()
    buf.put_varint(len(values))
    for value in values:
        if value is _UNSET:
            buf.put_varint(0)
        else:
            buf.put_varint(1)
            codec.encode(buf, value)
    return buf.getvalue()


def _decode_dense(payload: bytes, codec: Codec) -> List[Any]:
    buf = WireBuffer(payload)
    try:
        return [
            codec.decode(buf) if buf.get_varint() else _UNSET
            for _ in range(buf.get_varint())
        ]
    except DecodeError as e:
        raise JobError(f"corrupt dense partial at byte offset {e.offset}: {e}") from e


# -----------------------
# Public functions
# -----------------------
def mapreduce(
    input: Input,
    mapper: Callable,
    reducer: Union[str, Callable, Reducer],
    target: Target,
    key_codec: Union[Codec, None] = None,
    value_codec: Union[Codec, None] = None,
    batched: bool = False,
) -> JobCounters:
    """Maps every element of `input`, reduces the emitted pairs by key, and merges them into `target`.

    The target is not cleared first: existing values are merged with the new ones. Collective.

    Example:
        ```python
        hits = [0]
        mapreduce(DistRange(ctx, 0, 10**6), pi_mapper, "sum", hits)
        ```

    Args:
        input: A DistRange, DistVector or DistHashMap.
        mapper: `mapper(value, emit)` for a DistRange, `mapper(key, value, emit)` for a
            DistVector (key is the global index) or a DistHashMap. With `batched`, a DistRange
            mapper gets `(range_chunk, emit)` and a DistVector mapper
            `(global_start, values_slice, emit)`.
        reducer: "sum", "prod", "min", "max", a merge function or a Reducer.
        target: A DistHashMap, a DistVector (keys are global indices), or a list or numpy
            array (keys are indices), which ends up identical on every worker.
        key_codec: Codec of keys on the wire. Inferred when omitted.
        value_codec: Codec of values on the wire. Inferred when omitted.
        batched: Hand the mapper whole chunks instead of single elements.

    Returns:
        This worker's JobCounters.

    Raises:
        JobError: If an emitted key falls outside a sequence or vector target, or a shuffle
            batch cannot be decoded.
        Exception: Whatever the mapper raised, on the worker where it raised.
    """
    return MapReduceJob(input, mapper, reducer, target, key_codec, value_codec, batched).run()


def mapreduce_dense(
    input: Input,
    mapper: Callable,
    reducer: Union[str, Callable, Reducer],
    target: Union[list, np.ndarray],
    value_codec: Union[Codec, None] = None,
    batched: bool = False,
) -> JobCounters:
    """`mapreduce` forced onto the dense path, whatever the target length. Collective.

    Every emitted key must be an integer in [0, len(target)).
    """
    return MapReduceJob(input, mapper, reducer, target, None, value_codec, batched).run(
        dense=True
    )


def mapreduce_serial(
    data: Union[range, List, Dict],
    mapper: Callable,
    reducer: Union[str, Callable, Reducer],
    target: Union[Dict, List],
) -> Union[Dict, List]:
    """Single-threaded reference MapReduce over plain Python data.

    A range is mapped like a DistRange, a dict like a DistHashMap, any other sequence like a
    DistVector. Returns the target, updated in place.
    """
    merge = resolve(reducer).merge
    reduced: Dict[Any, Any] = {}

    def emit(key: Any, value: Any) -> None:
        reduced[key] = merge(reduced[key], value) if key in reduced else value

    if isinstance(data, range):
        for value in data:
            mapper(value, emit)
    elif isinstance(data, Mapping):
        for key, value in data.items():
            mapper(key, value, emit)
    else:
        for i, value in enumerate(data):
            mapper(i, value, emit)

    for key, value in reduced.items():
        if isinstance(target, Mapping) and key not in target:
            target[key] = value
        else:
            target[key] = merge(target[key], value)
    return target
