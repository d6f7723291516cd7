"""Segment-based and event-based detection metrics.

Segment metrics compare activity on a fixed time grid.  Event metrics match
whole predicted events to references under an onset/offset collar, with true
positives counted by a maximum-cardinality bipartite matching, so a
pathological greedy assignment can never under-count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ContractError
from .events import Event

_EPS = 1e-9


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0

    def add(self, other: "ClassCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


@dataclass
class MetricsReport:
    """Per-class and micro-averaged precision/recall/F1 with raw counts."""

    per_class: dict[str, ClassCounts] = field(default_factory=dict)

    @property
    def micro(self) -> ClassCounts:
        total = ClassCounts()
        for counts in self.per_class.values():
            total.add(counts)
        return total

    def counts(self, label: str) -> ClassCounts:
        return self.per_class.setdefault(label, ClassCounts())

    def merge(self, other: "MetricsReport") -> None:
        for label, counts in other.per_class.items():
            self.counts(label).add(counts)

    def as_dict(self) -> dict:
        out = {label: self.per_class[label].as_dict() for label in sorted(self.per_class)}
        out["micro"] = self.micro.as_dict()
        return out


def _labels_of(ref: Sequence[Event], pred: Sequence[Event], labels) -> list[str]:
    if labels is not None:
        return list(labels)
    return sorted({e.label for e in ref} | {e.label for e in pred})


def segment_metrics(
    ref: Sequence[Event],
    pred: Sequence[Event],
    segment_len: float,
    total_dur: float,
    labels: Sequence[str] | None = None,
) -> MetricsReport:
    """Activity comparison on a fixed grid of ceil(dur / segment_len) cells.

    A segment is active for a class when any event of that class overlaps it
    with positive duration.
    """
    if segment_len <= 0:
        raise ContractError("segment length must be positive")
    n_segments = max(0, math.ceil(total_dur / segment_len - _EPS))
    report = MetricsReport()
    for label in _labels_of(ref, pred, labels):
        ref_active = _activity(ref, label, segment_len, n_segments)
        pred_active = _activity(pred, label, segment_len, n_segments)
        counts = report.counts(label)
        for r, p in zip(ref_active, pred_active):
            if r and p:
                counts.tp += 1
            elif p:
                counts.fp += 1
            elif r:
                counts.fn += 1
    return report


def _activity(events: Sequence[Event], label: str, segment_len: float, n_segments: int):
    active = [False] * n_segments
    for ev in events:
        if ev.label != label:
            continue
        first = max(0, math.floor(ev.onset / segment_len + _EPS))
        last = min(n_segments - 1, math.ceil(ev.offset / segment_len - _EPS) - 1)
        for k in range(first, last + 1):
            lo = k * segment_len
            hi = lo + segment_len
            if min(ev.offset, hi) - max(ev.onset, lo) > _EPS * segment_len:
                active[k] = True
    return active


def event_metrics(
    ref: Sequence[Event],
    pred: Sequence[Event],
    collar: float,
    labels: Sequence[str] | None = None,
) -> MetricsReport:
    """Whole-event matching under a symmetric onset/offset collar.

    Prediction and reference are compatible when labels agree and both
    |onset difference| and |offset difference| are within the collar; TP per
    class is the size of a maximum-cardinality matching.
    """
    if collar < 0:
        raise ContractError("collar must be >= 0")
    report = MetricsReport()
    for label in _labels_of(ref, pred, labels):
        refs = [e for e in ref if e.label == label]
        preds = [e for e in pred if e.label == label]
        adjacency = [
            [
                j
                for j, r in enumerate(refs)
                if abs(p.onset - r.onset) <= collar + _EPS
                and abs(p.offset - r.offset) <= collar + _EPS
            ]
            for p in preds
        ]
        matched, _ = max_matching(adjacency, len(refs))
        counts = report.counts(label)
        counts.tp = matched
        counts.fp = len(preds) - matched
        counts.fn = len(refs) - matched
    return report


def max_matching(adjacency: Sequence[Sequence[int]], n_right: int) -> tuple[int, list[int]]:
    """Exact maximum-cardinality bipartite matching via augmenting paths.

    ``adjacency[u]`` lists right vertices compatible with left vertex u.
    Returns (matching size, right-to-left assignment with -1 for unmatched);
    the assignment is deterministic under the given vertex ordering.
    """
    owner = [-1] * n_right

    def augment(u: int, seen: list[bool]) -> bool:
        for v in adjacency[u]:
            if seen[v]:
                continue
            seen[v] = True
            if owner[v] == -1 or augment(owner[v], seen):
                owner[v] = u
                return True
        return False

    size = 0
    for u in range(len(adjacency)):
        if augment(u, [False] * n_right):
            size += 1
    return size, owner
