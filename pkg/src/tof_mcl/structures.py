"""Running statistics of the localization errors across trials."""

from __future__ import annotations

import collections
import math
from typing import Iterable, Self


class ErrorAggregate:
    """
    Mean and population standard deviation of named scalar errors.

    Each key keeps its count, mean and sum of squared deviations, so that two
    aggregates can be merged without storing the single values.

    Args:
        iterable: (key, value) pairs, each counted once.
        kwargs: more values, each counted once.
    """
    __slots__ = ('counts', 'means', 'squares')

    def __init__(self,
                 iterable: Iterable[tuple[str, float]] = (),
                 /,
                 **kwargs: float) -> None:
        self.counts = collections.defaultdict[str, int](int)
        self.means = collections.defaultdict[str, float](float)
        self.squares = collections.defaultdict[str, float](float)
        for key, value in iterable:
            self[key] = value
        for key, value in kwargs.items():
            self[key] = value

    def __add__(self, other: Self | dict[str, float]) -> Self:
        out = self.__copy__()
        out += other
        return out

    def __iadd__(self, other: Self | dict[str, float]) -> Self:
        if isinstance(other, dict):
            other = self.__class__(**other)
        for key, count in other.counts.items():
            own_count = self.counts[key]
            if not own_count:
                self.counts[key] = count
                self.means[key] = other.means[key]
                self.squares[key] = other.squares[key]
                continue
            total = own_count + count
            delta = other.means[key] - self.means[key]
            self.means[key] += delta * count / total
            self.squares[key] += (other.squares[key]
                                  + delta ** 2 * own_count * count / total)
            self.counts[key] = total
        return self

    def __setitem__(self, key: str, value: float) -> None:
        self.counts[key] = 1
        self.means[key] = float(value)
        self.squares[key] = 0.
        return

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, self.__class__):
            return False
        return (self.counts == other.counts
                and self.means == other.means
                and self.squares == other.squares)

    def __copy__(self) -> Self:
        copied = self.__class__()
        copied.counts = self.counts.copy()
        copied.means = self.means.copy()
        copied.squares = self.squares.copy()
        return copied

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({dict(self.reduce())})'

    def reduce(self) -> dict[str, float]:
        return dict(self.means)

    def std(self) -> dict[str, float]:
        return {key: math.sqrt(max(self.squares[key], 0.) / count)
                for key, count in self.counts.items()}
