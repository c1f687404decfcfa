"""Exceptions raised by Blaze MapReduce.

Every error derives from `BlazeError` and from the closest builtin exception, so callers
can catch either `BlazeError` or, say, `ValueError`.
"""

from typing import Union


class BlazeError(Exception):
    """Base class for all Blaze MapReduce errors."""


class ConfigError(BlazeError, ValueError):
    """Invalid cluster or option configuration, such as a rank outside the peer list."""


class TransportError(BlazeError, ConnectionError):
    """A peer could not be reached, disconnected, or the cluster was aborted."""


class DecodeError(BlazeError, ValueError):
    """A wire payload ended early or held a malformed value.

    Attributes:
        offset: Byte offset in the payload where decoding failed.
    """

    def __init__(self, message: str, offset: Union[int, None] = None) -> None:
        super().__init__(
            message if offset is None else f"{message} (at byte offset {offset})"
        )
        self.offset = offset


class JobError(BlazeError, RuntimeError):
    """A MapReduce job could not complete, for example a key outside a dense target."""


class ContractError(JobError):
    """An API contract was broken, such as emitting after the map phase closed."""


class InputError(BlazeError, ValueError):
    """Input data is missing or malformed: unreadable files, invalid page ids, etc."""


class NumericalError(BlazeError, ArithmeticError):
    """A numerical routine failed, such as a Cholesky factorization."""
