"""Metric tests: worked fixtures plus an exhaustive matching oracle."""

import numpy as np
import pytest

from tessef.events import Event
from tessef.metrics import event_metrics, max_matching, segment_metrics


def brute_force_matching(adjacency, n_right):
    best = 0

    def rec(u, used):
        nonlocal best
        if u == len(adjacency):
            best = max(best, len(used))
            return
        rec(u + 1, used)
        for v in adjacency[u]:
            if v not in used:
                rec(u + 1, used | {v})

    rec(0, frozenset())
    return best


class TestMaxMatching:
    def test_empty(self):
        assert max_matching([], 0) == (0, [])

    def test_complete_2x2(self):
        size, owner = max_matching([[0, 1], [0, 1]], 2)
        assert size == 2
        assert sorted(owner) == [0, 1]

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_exhaustive(self, seed):
        rng = np.random.default_rng(seed)
        n_left, n_right = int(rng.integers(0, 7)), int(rng.integers(0, 7))
        adjacency = [
            [v for v in range(n_right) if rng.random() < 0.4] for _ in range(n_left)
        ]
        size, owner = max_matching(adjacency, n_right)
        assert size == brute_force_matching(adjacency, n_right)
        matched = [v for v in range(n_right) if owner[v] != -1]
        assert len(matched) == size


class TestSegmentMetrics:
    def test_perfect_match(self):
        ev = [Event(0.1, 0.4, "filler")]
        rep = segment_metrics(ev, ev, 0.05, 1.0)
        micro = rep.micro
        assert (micro.precision, micro.recall, micro.f1) == (1.0, 1.0, 1.0)

    def test_empty_prediction(self):
        rep = segment_metrics([Event(0.0, 0.2, "filler")], [], 0.05, 1.0)
        micro = rep.micro
        assert micro.precision == 0.0 and micro.recall == 0.0 and micro.f1 == 0.0

    def test_four_segment_fixture(self):
        ref = [Event(0.0, 0.10, "filler")]
        pred = [Event(0.05, 0.15, "filler")]
        counts = segment_metrics(ref, pred, 0.05, 0.2).per_class["filler"]
        assert (counts.tp, counts.fp, counts.fn) == (1, 1, 1)
        assert counts.precision == counts.recall == counts.f1 == 0.5

    def test_split_invariance(self):
        ref = [Event(0.0, 0.3, "x")]
        whole = [Event(0.05, 0.25, "x")]
        split = [Event(0.05, 0.15, "x"), Event(0.15, 0.25, "x")]
        a = segment_metrics(ref, whole, 0.05, 0.4).as_dict()
        b = segment_metrics(ref, split, 0.05, 0.4).as_dict()
        assert a == b


class TestEventMetrics:
    def test_within_collar(self):
        ref = [Event(1.0, 1.5, "filler")]
        pred = [Event(1.15, 1.40, "filler")]
        rep = event_metrics(ref, pred, 0.2)
        assert rep.per_class["filler"].tp == 1
        assert rep.micro.f1 == 1.0

    def test_outside_collar(self):
        ref = [Event(1.0, 1.5, "filler")]
        pred = [Event(1.3, 1.8, "filler")]
        rep = event_metrics(ref, pred, 0.2)
        assert rep.per_class["filler"].tp == 0
        assert rep.micro.f1 == 0.0

    def test_maximum_beats_greedy(self):
        ref = [Event(0.0, 1.0, "f"), Event(0.3, 1.3, "f")]
        pred = [Event(0.15, 1.15, "f"), Event(0.05, 1.05, "f")]
        rep = event_metrics(ref, pred, 0.2)
        counts = rep.per_class["f"]
        assert (counts.tp, counts.fp, counts.fn) == (2, 0, 0)

    def test_order_invariance(self):
        rng = np.random.default_rng(9)
        ref = [Event(round(t, 3), round(t + 0.4, 3), "f") for t in rng.uniform(0, 8, 6)]
        pred = [Event(e.onset + 0.1, e.offset - 0.05, "f") for e in ref[:4]]
        base = event_metrics(ref, pred, 0.2).micro.tp
        assert event_metrics(ref[::-1], pred[::-1], 0.2).micro.tp == base

    def test_collar_shrink_monotone(self):
        rng = np.random.default_rng(10)
        ref = [Event(round(t, 3), round(t + 0.3, 3), "f") for t in rng.uniform(0, 9, 8)]
        pred = [
            Event(round(e.onset + rng.uniform(-0.3, 0.3), 3), round(e.offset + rng.uniform(-0.3, 0.3), 3), "f")
            for e in ref
        ]
        tps = [event_metrics(ref, pred, c).micro.tp for c in (0.5, 0.3, 0.2, 0.1, 0.0)]
        assert all(a >= b for a, b in zip(tps, tps[1:]))

    def test_label_mismatch_never_matches(self):
        rep = event_metrics([Event(0.0, 1.0, "a")], [Event(0.0, 1.0, "b")], 0.2)
        assert rep.micro.tp == 0
        assert rep.micro.fp == 1 and rep.micro.fn == 1

    def test_report_json_shape(self):
        rep = event_metrics([Event(0.0, 1.0, "a")], [Event(0.0, 1.0, "a")], 0.2)
        d = rep.as_dict()
        assert set(d) == {"a", "micro"}
        assert set(d["micro"]) == {"precision", "recall", "f1", "tp", "fp", "fn"}
