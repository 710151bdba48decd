"""Axis-aligned boxes with rational corners."""

from __future__ import annotations

from typing import Iterable, Sequence

from gmpy2 import mpq

from .rational import q, to_str


class Box:
    """Product of closed rational intervals [lo_i, hi_i]."""

    __slots__ = ("intervals",)

    def __init__(self, intervals: Iterable[Sequence]):
        ivs = tuple((q(lo), q(hi)) for lo, hi in intervals)
        for lo, hi in ivs:
            if lo > hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
        self.intervals = ivs

    @classmethod
    def point(cls, coords: Sequence) -> "Box":
        return cls([(c, c) for c in coords])

    @property
    def dim(self) -> int:
        return len(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def __iter__(self):
        return iter(self.intervals)

    def widths(self) -> list:
        return [hi - lo for lo, hi in self.intervals]

    def midpoint(self) -> list:
        return [(lo + hi) / 2 for lo, hi in self.intervals]

    def lows(self) -> list:
        return [lo for lo, _ in self.intervals]

    def highs(self) -> list:
        return [hi for _, hi in self.intervals]

    def widest_axis(self) -> int:
        """Axis of maximal width; lowest index on ties."""
        best, best_w = 0, None
        for i, (lo, hi) in enumerate(self.intervals):
            w = hi - lo
            if best_w is None or w > best_w:
                best, best_w = i, w
        return best

    def split(self, axis: int, at=None) -> tuple["Box", "Box"]:
        lo, hi = self.intervals[axis]
        m = (lo + hi) / 2 if at is None else q(at)
        left = list(self.intervals)
        right = list(self.intervals)
        left[axis] = (lo, m)
        right[axis] = (m, hi)
        return Box._from(left), Box._from(right)

    @classmethod
    def _from(cls, ivs) -> "Box":
        b = object.__new__(cls)
        b.intervals = tuple(ivs)
        return b

    def inflate(self, pad) -> "Box":
        pad = q(pad)
        if pad < 0:
            raise ValueError("negative inflation")
        return Box._from((lo - pad, hi + pad) for lo, hi in self.intervals)

    def inflate_each(self, pads: Sequence) -> "Box":
        return Box._from((lo - q(p), hi + q(p)) for (lo, hi), p in zip(self.intervals, pads))

    def product(self, other: "Box") -> "Box":
        return Box._from(self.intervals + other.intervals)

    def sub(self, axes: Sequence[int]) -> "Box":
        return Box._from(self.intervals[i] for i in axes)

    def replace(self, axis: int, interval) -> "Box":
        ivs = list(self.intervals)
        ivs[axis] = (q(interval[0]), q(interval[1]))
        return Box._from(ivs)

    def contains_point(self, point: Sequence) -> bool:
        return all(lo <= q(x) <= hi for (lo, hi), x in zip(self.intervals, point))

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for (a, b), (c, d) in zip(self.intervals, other.intervals))

    def strictly_contains_box(self, other: "Box") -> bool:
        return all(a < c and d < b for (a, b), (c, d) in zip(self.intervals, other.intervals))

    def hull(self, other: "Box") -> "Box":
        return Box._from((min(a, c), max(b, d)) for (a, b), (c, d) in zip(self.intervals, other.intervals))

    def radius_bound(self) -> mpq:
        """Squared distance from the origin to the farthest corner."""
        return sum((max(abs(lo), abs(hi)) ** 2 for lo, hi in self.intervals), mpq(0))

    def diameter_inf(self) -> mpq:
        return max((hi - lo for lo, hi in self.intervals), default=mpq(0))

    def is_point(self) -> bool:
        return all(lo == hi for lo, hi in self.intervals)

    def __eq__(self, other):
        return isinstance(other, Box) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def to_json(self) -> list:
        return [[to_str(lo), to_str(hi)] for lo, hi in self.intervals]

    @classmethod
    def from_json(cls, data) -> "Box":
        return cls([(q(lo), q(hi)) for lo, hi in data])

    def __repr__(self):
        return "Box(" + ", ".join(f"[{lo}, {hi}]" for lo, hi in self.intervals) + ")"
