"""Word count: how often each distinct token occurs in a distributed vector of lines.

Lines are split on single spaces and empty tokens are dropped. There is no lowercasing and
no punctuation stripping, so "The" and "the," are different words.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Union

from ..DistHashMap import DistHashMap
from ..DistVector import DistVector
from ..containers import collect
from ..mapreduce import JobCounters, mapreduce
from ..utils import _allsum_ints
from ..wire import STR, UVARINT


def tokenize(line: str) -> List[str]:
    """Splits a line on single spaces, dropping empty tokens."""
    return [token for token in line.split(" ") if token]


def _emit_words(index: int, line: str, emit: Callable[[Any, Any], None]) -> None:
    for token in line.split(" "):
        if token:
            emit(token, 1)


@dataclass
class WordCountResult:
    """Counts of every distinct token, spread over the workers by token hash.

    Attributes:
        counts: Token to number of occurrences, each token on its owner rank.
        counters: This worker's counters of the MapReduce job.
    """

    counts: DistHashMap
    counters: JobCounters = field(default_factory=JobCounters)

    def total(self) -> int:
        """Sum of all counts, which equals the number of tokens. Collective."""
        return _allsum_ints(self.counts.ctx, [sum(self.counts.values())])[0]

    def distinct(self) -> int:
        """Number of distinct tokens. Collective."""
        return self.counts.global_size()

    def to_dict(self) -> Union[Dict[str, int], None]:
        """All counts on rank 0, None elsewhere. Collective."""
        return collect(self.counts)


def wordcount(lines: DistVector, target: Union[DistHashMap, None] = None) -> WordCountResult:
    """Counts token occurrences in a DistVector of lines. Collective.

    Example:
        ```python
        lines = load_file(ctx, "genesis.txt")
        result = wordcount(lines)
        result.to_dict()  # {"In": 3, "the": 17, ...} on rank 0
        ```

    Args:
        lines: The text, one line per element.
        target: Optional map to add the counts to. A fresh map is used when omitted.

    Returns:
        A WordCountResult.
    """
    counts = target if target is not None else DistHashMap(lines.ctx, STR, UVARINT)
    counters = mapreduce(lines, _emit_words, "sum", counts, key_codec=STR, value_codec=UVARINT)
    return WordCountResult(counts, counters)


def wordcount_serial(lines: Iterable[str]) -> Dict[str, int]:
    """Reference count over plain lines on one thread."""
    counts: Counter = Counter()
    for line in lines:
        counts.update(tokenize(line))
    return dict(counts)
