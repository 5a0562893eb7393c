# coding: utf-8
"""Small helpers shared by the numerical modules.
"""

import collections
import threading
import typing
import zlib

import numpy

__all__ = ["Diagnostics", "substream", "seed_sequence"]


def seed_sequence(seed: int, name: str, index: int = 0) -> numpy.random.SeedSequence:
    """Get the seed sequence of the named random sub-stream ``name:index``.

    The spawn key is derived from a CRC-32 of the stream name, so that the
    same ``(seed, name, index)`` triple always yields the same stream,
    independently of the order in which streams are requested.

    Example:
        >>> a = substream(42, "chain", 1).standard_normal()
        >>> b = substream(42, "chain", 1).standard_normal()
        >>> a == b
        True
        >>> a == substream(42, "chain", 2).standard_normal()
        False

    """
    if seed < 0:
        raise ValueError("`seed` must be non-negative, not {!r}".format(seed))
    key = (zlib.crc32(name.encode("utf-8")), index)
    return numpy.random.SeedSequence(seed, spawn_key=key)


def substream(seed: int, name: str, index: int = 0) -> numpy.random.Generator:
    """Get a random generator for the named sub-stream ``name:index``."""
    return numpy.random.Generator(numpy.random.PCG64(seed_sequence(seed, name, index)))


class Diagnostics(typing.Mapping[str, int]):
    """A thread-safe collection of named event counters.

    Numerical routines that recover from a failure (a floored density, a
    likelihood mapped to minus infinity) record it here instead of raising.

    Example:
        >>> diagnostics = Diagnostics()
        >>> diagnostics.increment("floored_density", 3)
        >>> diagnostics["floored_density"]
        3
        >>> diagnostics["out_of_grid"]
        0

    """

    def __init__(self) -> None:
        self._counts: typing.Counter[str] = collections.Counter()
        self._lock = threading.Lock()

    def __getitem__(self, key: str) -> int:
        return self._counts[key]

    def __iter__(self) -> typing.Iterator[str]:
        return iter(sorted(self._counts))

    def __len__(self) -> int:
        return len(self._counts)

    def __repr__(self) -> str:
        return "{}({!r})".format(type(self).__name__, dict(self._counts))

    def increment(self, key: str, count: int = 1) -> None:
        """Add ``count`` events to the counter named ``key``."""
        if count:
            with self._lock:
                self._counts[key] += count

    def merge(self, other: typing.Mapping[str, int]) -> None:
        """Add all the counters of ``other`` to this collection."""
        with self._lock:
            self._counts.update(other)
