"""
A hash-partitioned key/value store.

Key k lives only on rank `owner(k) = key_codec.hash(k) % size`. The hash is FNV-1a over the
encoded key, so every worker, in every process and on every run, agrees on the owner.
Locally a DistHashMap behaves like a dict holding this worker's keys.
"""

from typing import Any, Callable, Dict, Iterator, Union

from .options import get_option
from .transport import ClusterCtx
from .utils import _allsum_ints, _thread_chunks
from .wire import Codec, infer_codec


class DistHashMap:
    """Key/value pairs spread over the workers by key hash.

    Args:
        ctx: The worker's cluster context.
        key_codec: Codec of the keys. Inferred from the first key seen when omitted.
        value_codec: Codec of the values. Inferred from the data when omitted.
        local: Initial local pairs. Every key must be owned by this worker.
    """

    def __init__(
        self,
        ctx: ClusterCtx,
        key_codec: Union[Codec, None] = None,
        value_codec: Union[Codec, None] = None,
        local: Union[Dict, None] = None,
    ) -> None:
        self.ctx = ctx
        self.key_codec = key_codec
        self.value_codec = value_codec
        self.local: Dict[Any, Any] = {}
        for key, value in (local or {}).items():
            self[key] = value

    def __repr__(self) -> str:
        return f"DistHashMap(local={len(self.local)}, rank={self.ctx.rank}/{self.ctx.size})"

    def owner(self, key: Any) -> int:
        """Rank that stores `key`."""
        if self.ctx.size == 1:
            return 0
        if self.key_codec is None:
            self.key_codec = infer_codec(key)
        return self.key_codec.hash(key) % self.ctx.size

    # -----------------------
    # Local mapping protocol
    # -----------------------
    def __len__(self) -> int:
        """Number of pairs on this worker. See `global_size()` for the whole map."""
        return len(self.local)

    def __contains__(self, key: Any) -> bool:
        return key in self.local

    def __getitem__(self, key: Any) -> Any:
        return self.local[key]

    def __setitem__(self, key: Any, value: Any) -> None:
        """Stores a pair on this worker.

        Raises:
            KeyError: If another rank owns `key`.
        """
        owner = self.owner(key)
        if owner != self.ctx.rank:
            raise KeyError(f"key {key!r} belongs to rank {owner}, not {self.ctx.rank}")
        self.local[key] = value

    def __iter__(self) -> Iterator:
        return iter(self.local)

    def get(self, key: Any, default: Any = None) -> Any:
        return self.local.get(key, default)

    def items(self):
        return self.local.items()

    def keys(self):
        return self.local.keys()

    def values(self):
        return self.local.values()

    def to_dict(self) -> Dict[Any, Any]:
        """A copy of this worker's pairs."""
        return dict(self.local)

    def global_size(self) -> int:
        """Number of pairs across all workers. Collective."""
        return _allsum_ints(self.ctx, [len(self.local)])[0]

    def foreach(self, fn: Callable[[Any, Any], Any]) -> None:
        """Calls `fn(key, value)` once per local pair, on all compute threads.

        A return value other than None replaces the value. Keys must not be added or removed
        meanwhile.

        Example:
            ```python
            counts.foreach(lambda word, n: n + 1)
            ```
        """
        pairs: list = list(self.local.items())
        updates: list = [[] for _ in range(self.ctx.threads_per_worker)]

        def run(thread: int) -> None:
            for lo, hi in _thread_chunks(
                len(pairs), self.ctx.threads_per_worker, thread, get_option("range_chunk")
            ):
                for key, value in pairs[lo:hi]:
                    result = fn(key, value)
                    if result is not None:
                        updates[thread].append((key, result))

        self.ctx.parallel(run)
        for thread_updates in updates:
            self.local.update(thread_updates)
