"""Framewise baseline pipeline: per-frame sigmoid classifier, median
filtering and run extraction into events."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as tt
from .errors import ContractError
from .events import Event, EventSet
from .nn import Linear, Module
from .tensor import Tensor

Array = np.ndarray

THRESHOLD_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class FrameProbabilities:
    """Per-frame class probabilities, (T, N) in [0, 1]."""

    probs: Array

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.size and (self.probs.min() < 0.0 or self.probs.max() > 1.0):
            raise ContractError("probabilities must lie in [0, 1]")


class FramewiseHead(Module):
    """Linear layer + sigmoid per class over encoder features."""

    def __init__(self, rng: np.random.Generator, model_dim: int, n_types: int):
        self.linear = Linear(rng, model_dim, n_types)

    def logits(self, h: Tensor) -> Tensor:
        return self.linear(h)

    def probabilities(self, h: Tensor) -> FrameProbabilities:
        return FrameProbabilities(tt.sigmoid(self.logits(h)).data)


def bce_loss(logits: Tensor, targets: Array) -> Tensor:
    """Mean binary cross-entropy from logits; stable for large |z|.

    softplus is composed as logsumexp over a stacked zero column.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ContractError(f"logits {logits.shape} vs targets {targets.shape}")
    n_frames, n_types = logits.shape
    stacked = tt.concat(
        [logits.reshape(n_frames, n_types, 1), tt.zeros((n_frames, n_types, 1))], axis=2
    )
    softplus = tt.logsumexp(stacked, axis=2)
    return (softplus - logits * Tensor(targets)).mean()


def rasterize_targets(target: EventSet, n_frames: int, n_types: int) -> Array:
    """Frame-level 0/1 activity map of an event set, (T, N)."""
    out = np.zeros((n_frames, n_types))
    for ev in target:
        out[ev.onset : ev.offset + 1, ev.event_type] = 1.0
    return out


def median_filter(probs: FrameProbabilities | Array, window: int) -> FrameProbabilities:
    """Sliding median per class with edge replication padding; window odd."""
    if window % 2 == 0 or window < 1:
        raise ContractError("median filter window must be odd and >= 1")
    data = probs.probs if isinstance(probs, FrameProbabilities) else np.asarray(probs, float)
    if window == 1 or data.shape[0] == 0:
        return FrameProbabilities(data.copy())
    half = window // 2
    padded = np.pad(data, ((half, half), (0, 0)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, window, axis=0)
    return FrameProbabilities(np.median(windows, axis=-1))


def threshold_runs(
    probs: FrameProbabilities | Array, tau: float, min_len: int = 1
) -> EventSet:
    """Frames with prob >= tau form maximal runs; short runs are dropped."""
    if not 0.0 < tau < 1.0:
        raise ContractError("threshold must lie in (0, 1)")
    data = probs.probs if isinstance(probs, FrameProbabilities) else np.asarray(probs, float)
    out = EventSet()
    for event_type in range(data.shape[1]):
        active = data[:, event_type] >= tau
        edges = np.flatnonzero(np.diff(np.concatenate([[0], active.view(np.int8), [0]])))
        for a, b in zip(edges[::2], edges[1::2]):
            if b - a >= min_len:
                out.add(int(a), int(b) - 1, event_type)
    return out


def threshold_to_events(
    probs: FrameProbabilities | Array,
    tau: float,
    resolution: float,
    labels: Sequence[str],
    min_len: int = 1,
) -> list[Event]:
    """Thresholded runs in seconds: run [a..b] becomes [a*res, (b+1)*res)."""
    return threshold_runs(probs, tau, min_len).to_events(resolution, labels)
