"""Labeled time intervals, in frame and second units.

Frame-space sets obey the per-type validity rule: onsets strictly
increasing, and each onset at least the previous offset (sharing a single
endpoint frame is allowed; stacking point intervals is not).  Different
event types are mutually unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import ValidityError


@dataclass(frozen=True, order=True)
class Event:
    """A labeled interval in seconds, offset exclusive."""

    onset: float
    offset: float
    label: str


@dataclass(frozen=True, order=True)
class EventInterval:
    """A labeled interval in frames, offset inclusive."""

    onset: int
    offset: int
    event_type: int


def check_interval_list(intervals: Sequence[tuple[int, int]]) -> None:
    """Raise ValidityError unless the per-type rule holds for a sorted list."""
    prev_onset = None
    prev_offset = None
    for i, j in intervals:
        if j < i or i < 0:
            raise ValidityError(f"malformed interval [{i}, {j}]")
        if prev_onset is not None:
            if i <= prev_onset:
                raise ValidityError(f"onsets not strictly increasing: {prev_onset} then {i}")
            if i < prev_offset:
                raise ValidityError(
                    f"interval starting at {i} overlaps previous offset {prev_offset}"
                )
        prev_onset, prev_offset = i, j


class EventSet:
    """Per-type ordered interval lists in frame units."""

    def __init__(self, intervals: Iterable[EventInterval] = ()):
        self._by_type: dict[int, list[tuple[int, int]]] = {}
        for ev in intervals:
            self.add(ev.onset, ev.offset, ev.event_type)

    def add(self, onset: int, offset: int, event_type: int) -> None:
        self._by_type.setdefault(int(event_type), []).append((int(onset), int(offset)))
        self._by_type[event_type].sort()

    def types(self) -> list[int]:
        return sorted(self._by_type)

    def intervals(self, event_type: int) -> list[tuple[int, int]]:
        return list(self._by_type.get(event_type, []))

    def validate(self, n_frames: int | None = None) -> None:
        for event_type in self.types():
            ivs = self._by_type[event_type]
            check_interval_list(ivs)
            if n_frames is not None and ivs and ivs[-1][1] >= n_frames:
                raise ValidityError(f"interval {ivs[-1]} exceeds {n_frames} frames")

    def is_valid(self, n_frames: int | None = None) -> bool:
        try:
            self.validate(n_frames)
        except ValidityError:
            return False
        return True

    def to_events(self, resolution: float, labels: Sequence[str]) -> list[Event]:
        """Frame interval [a..b] becomes [a*res, (b+1)*res) seconds."""
        out = []
        for event_type in self.types():
            for a, b in self._by_type[event_type]:
                out.append(
                    Event(round(a * resolution, 6), round((b + 1) * resolution, 6), labels[event_type])
                )
        return sorted(out)

    def __iter__(self) -> Iterator[EventInterval]:
        for event_type in self.types():
            for a, b in self._by_type[event_type]:
                yield EventInterval(a, b, event_type)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_type.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventSet):
            return NotImplemented
        mine = {t: tuple(v) for t, v in self._by_type.items() if v}
        theirs = {t: tuple(v) for t, v in other._by_type.items() if v}
        return mine == theirs

    def __repr__(self) -> str:
        inner = ", ".join(f"{t}: {self._by_type[t]}" for t in self.types())
        return f"EventSet({{{inner}}})"
