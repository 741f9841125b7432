"""Named, seeded random streams derived from one master seed."""

from __future__ import annotations

import math
import zlib
from typing import Dict, Sequence, TypeVar

import numpy as np

from .scheduler import SimTime

T = TypeVar("T")

# Well-known stream names; MAC streams are suffixed with the subnet name.
CALL_ARRIVALS = "call-arrivals"
CALL_DURATIONS = "call-durations"
CALL_PAIRING = "call-pairing"
BACKOFF = "backoff"
CLOUD_LATENCY = "cloud-latency"

_BLOCK = 4096


class RngStream:
    """
    A PCG64 generator keyed by (seed, stream_id).

    Uniform doubles are drawn in fixed-size blocks; the n-th draw of a stream
    is therefore the same on every platform numpy supports.
    """

    def __init__(self, seed: int, stream_id: str) -> None:
        self.seed = seed
        self.stream_id = stream_id
        key = zlib.crc32(stream_id.encode("utf-8"))
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
        self._generator = np.random.Generator(np.random.PCG64(sequence))
        self._buffer: list[float] = []
        self._index = 0
        self.draws = 0

    def uniform(self) -> float:
        """Return a double in [0, 1)."""
        if self._index >= len(self._buffer):
            self._buffer = self._generator.random(_BLOCK).tolist()
            self._index = 0
        value = self._buffer[self._index]
        self._index += 1
        self.draws += 1
        return value

    def randint(self, high: int) -> int:
        """Uniform integer in [0, high] inclusive."""
        return min(int(self.uniform() * (high + 1)), high)

    def symmetric(self, bound: float) -> float:
        """Uniform in [-bound, +bound)."""
        return (2.0 * self.uniform() - 1.0) * bound

    def choice(self, items: Sequence[T]) -> T:
        if not items:
            raise ValueError("cannot choose from an empty sequence")
        return items[self.randint(len(items) - 1)]


def exp_sample(mean: SimTime, stream: RngStream) -> SimTime:
    """Exponential duration with the given mean, in whole microseconds (>= 1)."""
    if mean <= 0:
        raise ValueError(f"exponential mean must be positive, got {mean}")
    value = -mean * math.log1p(-stream.uniform())
    return max(1, int(round(value)))


class RngFactory:
    """Hands out one stream per name so draws on one never disturb another."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._streams: Dict[str, RngStream] = {}

    def stream(self, stream_id: str) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]
