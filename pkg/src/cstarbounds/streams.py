"""Monotone bound streams: the running-best sequence published by a semi-algorithm."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator


class StreamOrderError(ValueError):
    """An emission would break the stream's direction."""


@dataclass(frozen=True)
class Emission:
    stage: Any
    bound: float
    certificate: str
    gap: float = 0.0
    raw: float | None = None  # the producer's own value at this stage
    witness: Any = field(default=None, compare=False, repr=False)


class BoundStream:
    """Lower streams never decrease, upper streams never increase.

    ``emit`` rejects out-of-order values; ``offer`` publishes the running best,
    so producers whose raw values fluctuate can feed it directly.
    """

    def __init__(self, direction: str, name: str = ""):
        if direction not in ("lower", "upper"):
            raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")
        self.direction = direction
        self.name = name
        self.emissions: list[Emission] = []

    def _better(self, a: float, b: float) -> bool:
        return a > b if self.direction == "lower" else a < b

    @property
    def best(self) -> Emission | None:
        return self.emissions[-1] if self.emissions else None

    @property
    def value(self) -> float:
        if not self.emissions:
            return -math.inf if self.direction == "lower" else math.inf
        return self.emissions[-1].bound

    def emit(self, e: Emission) -> Emission:
        if self.emissions and self._better(self.value, e.bound):
            raise StreamOrderError(
                f"{self.direction} stream {self.name!r}: {e.bound!r} after {self.value!r} at stage {e.stage!r}"
            )
        self.emissions.append(e)
        return e

    def offer(self, stage, value: float, certificate: str, gap: float = 0.0, witness=None) -> Emission:
        prev = self.best
        if prev is None or not self._better(prev.bound, value):
            return self.emit(Emission(stage, float(value), certificate, gap, float(value), witness))
        return self.emit(Emission(stage, prev.bound, prev.certificate, prev.gap, float(value), prev.witness))

    def values(self) -> list[float]:
        return [e.bound for e in self.emissions]

    def is_monotone(self) -> bool:
        v = self.values()
        return all(not self._better(prev, nxt) for prev, nxt in zip(v[:-1], v[1:]))

    def __iter__(self) -> Iterator[Emission]:
        return iter(self.emissions)

    def __len__(self) -> int:
        return len(self.emissions)

    def __repr__(self) -> str:
        return f"BoundStream({self.direction!r}, {self.name!r}, {len(self)} emissions, value={self.value})"
