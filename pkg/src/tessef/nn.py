"""Minimal trainable-module plumbing over the tensor core."""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Tensor


class Module:
    """Base class; parameters are discovered by attribute walk, in
    insertion order, so parameter naming is deterministic."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    out.append((name, value))
            elif isinstance(value, Module):
                out.extend((f"{name}.{sub}", p) for sub, p in value.named_parameters())
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(
                            (f"{name}.{i}.{sub}", p) for sub, p in item.named_parameters()
                        )
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grads(self) -> None:
        tt.zero_grads(self.parameters())

    def load_state(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, param in self.named_parameters():
            key = prefix + name
            if key not in state:
                raise KeyError(f"missing parameter {key!r} in state")
            if state[key].shape != param.shape:
                raise ValueError(f"shape mismatch for {key!r}")
            param.data = np.array(state[key], dtype=np.float64)

    def state(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + name: p.data.copy() for name, p in self.named_parameters()}


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return tt.layernorm(x, self.gain, self.bias, self.eps)
