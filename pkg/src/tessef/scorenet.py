"""Pairwise interval scoring: frame features -> a (T, T, N) score tensor
indexed (end, start, type).

A shared three-layer GELU FFN maps each frame to start/end embeddings; a
linear projection of concat(start[i], end[j]) builds a 2-d map, refined by
three same-padded 3x3 convolutions.  Entries with start > end, or with span
at or beyond the length cap, are overwritten with -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .nn import Linear, Module
from .tensor import Tensor


@dataclass
class ScoreNetConfig:
    model_dim: int = 32
    d_pair: int = 16
    pair_channels: int = 8
    n_types: int = 3
    max_event_len: int = 20  # frames; spans j - i >= max_event_len are masked
    hidden: int = 32


@dataclass
class FrameEmbeddings:
    start: Tensor  # (T, d_pair)
    end: Tensor  # (T, d_pair)


def span_mask(n_frames: int, max_event_len: int | None) -> np.ndarray:
    """Boolean (T, T, 1) mask of representable (end, start) pairs."""
    end = np.arange(n_frames)[:, None]
    start = np.arange(n_frames)[None, :]
    keep = start <= end
    if max_event_len is not None:
        keep &= (end - start) < max_event_len
    return keep[:, :, None]


def _conv_param(rng: np.random.Generator, kh: int, kw: int, cin: int, cout: int) -> Tensor:
    scale = 1.0 / np.sqrt(kh * kw * cin)
    return Tensor(rng.normal(0.0, scale, (kh, kw, cin, cout)), requires_grad=True)


class ScoreNet(Module):
    def __init__(self, rng: np.random.Generator, cfg: ScoreNetConfig):
        self.cfg = cfg
        self.fc1 = Linear(rng, cfg.model_dim, cfg.hidden)
        self.fc2 = Linear(rng, cfg.hidden, cfg.hidden)
        self.fc3 = Linear(rng, cfg.hidden, 2 * cfg.d_pair)
        self.pair = Linear(rng, 2 * cfg.d_pair, cfg.pair_channels)
        self.conv1_w = _conv_param(rng, 3, 3, cfg.pair_channels, cfg.pair_channels)
        self.conv1_b = Tensor(np.zeros(cfg.pair_channels), requires_grad=True)
        self.conv2_w = _conv_param(rng, 3, 3, cfg.pair_channels, cfg.pair_channels)
        self.conv2_b = Tensor(np.zeros(cfg.pair_channels), requires_grad=True)
        self.conv3_w = _conv_param(rng, 3, 3, cfg.pair_channels, cfg.n_types)
        self.conv3_b = Tensor(np.zeros(cfg.n_types), requires_grad=True)

    def frame_heads(self, h: Tensor) -> FrameEmbeddings:
        """Shared FFN producing start/end embeddings, (T, d_pair) each."""
        z = self.fc3(tt.gelu(self.fc2(tt.gelu(self.fc1(h)))))
        d = self.cfg.d_pair
        return FrameEmbeddings(start=z[:, :d], end=z[:, d:])

    def pairwise_map(self, emb: FrameEmbeddings) -> Tensor:
        """map[j, i, :] = W @ concat(start[i], end[j]) + bias, shape (T,T,c0)."""
        d = self.cfg.d_pair
        c0 = self.cfg.pair_channels
        n_frames = emb.start.shape[0]
        start_proj = emb.start @ self.pair.w[:d]
        end_proj = emb.end @ self.pair.w[d:] + self.pair.b
        return end_proj.reshape(n_frames, 1, c0) + start_proj.reshape(1, n_frames, c0)

    def score_cnn(self, pmap: Tensor) -> Tensor:
        """Three 3x3 convolutions, then -inf outside the representable band."""
        z = tt.gelu(tt.conv2d(pmap, self.conv1_w, self.conv1_b))
        z = tt.gelu(tt.conv2d(z, self.conv2_w, self.conv2_b))
        z = tt.conv2d(z, self.conv3_w, self.conv3_b)
        keep = span_mask(pmap.shape[0], self.cfg.max_event_len)
        return tt.mask_fill(z, keep)

    def scores(self, h: Tensor) -> Tensor:
        return self.score_cnn(self.pairwise_map(self.frame_heads(h)))
