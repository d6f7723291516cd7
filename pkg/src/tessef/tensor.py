"""Dense float64 tensors with tape-based reverse-mode differentiation.

The primitive set is deliberately small: matmul, broadcast add/mul, ReLU,
GELU (tanh form), sigmoid, layer norm, logsumexp, reshape/transpose,
slicing/concatenation, sum/mean, causal FFT convolution, 2-d convolution,
mask fill, gather-sum and mean-pool downsampling.  Everything else in the
package is composed from these or registered as a fused op via
``custom_op``.

Every op appends one entry to the active ``ComputationRecord``; ``backward``
replays entries in exact reverse order of recording, which is a valid
reverse topological order because recording order is execution order.
Gradients accumulate additively into ``Tensor.grad``; zeroing between
optimizer steps is the caller's responsibility.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

Array = np.ndarray

_INV_SQRT2PI = 0.3989422804014327
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Tensor:
    """A dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_tracked")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._tracked = self.requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        backward(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return mul(self, _as_tensor(-1.0))

    def __sub__(self, other) -> "Tensor":
        return add(self, -_as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return add(_as_tensor(other), -self)

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise DimensionError("division is only supported by python scalars")
        return mul(self, _as_tensor(1.0 / float(other)))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, key) -> "Tensor":
        return slice_tensor(self, key)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None) -> "Tensor":
        return transpose(self, axes)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis, keepdims)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


# -- tape -------------------------------------------------------------------


class ComputationRecord:
    """Ordered log of recorded primitives, replayed in reverse by backward."""

    __slots__ = ("_entries",)

    def __init__(self):
        # entry: (output, inputs, vjp) with vjp(out_grad) -> per-input grads
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def clear(self) -> None:
        self._entries.clear()

    def truncate(self, length: int) -> None:
        del self._entries[length:]


_TAPE = ComputationRecord()
_GRAD_ENABLED = True


def active_tape() -> ComputationRecord:
    return _TAPE


def clear_tape() -> None:
    _TAPE.clear()


@contextmanager
def no_grad():
    """Disable recording; forward passes inside run tape-free."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _record(out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    if _GRAD_ENABLED and any(t._tracked for t in inputs):
        out._tracked = True
        _TAPE._entries.append((out, inputs, vjp))
    return out


def custom_op(out_data: Array, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Register a fused primitive: ``vjp(out_grad)`` returns per-input grads.

    Entries of the returned tuple may be None for non-differentiable inputs.
    """
    out = Tensor(out_data)
    return _record(out, tuple(inputs), vjp)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` of every requires_grad tensor reachable from loss.

    Repeated calls accumulate; callers clear grads between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    adjoint: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, vjp in reversed(_TAPE._entries):
        out_grad = adjoint.get(id(out))
        if out_grad is None:
            continue
        grads = vjp(out_grad)
        for tens, g in zip(inputs, grads):
            if g is None or not tens._tracked:
                continue
            key = id(tens)
            if key in adjoint:
                adjoint[key] = adjoint[key] + g
            else:
                adjoint[key] = g
                holders[key] = tens
    for key, tens in holders.items():
        if tens.requires_grad:
            g = np.array(adjoint[key], dtype=np.float64, copy=True)
            tens.grad = g if tens.grad is None else tens.grad + g


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# -- primitives -------------------------------------------------------------


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back down to the operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(Tensor(out), (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(Tensor(out), (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _record(Tensor(out), (a, b), vjp)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def vjp(g):
        return (g * (x.data > 0.0),)

    return _record(Tensor(out), (x,), vjp)


def gelu(x: Tensor) -> Tensor:
    """GELU in the tanh approximation."""
    inner = _GELU_C * (x.data + _GELU_A * x.data**3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data**2)
        dx = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * dinner
        return (g * dx,)

    return _record(Tensor(out), (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_stable(x.data)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record(Tensor(out), (x,), vjp)


def _sigmoid_stable(x: Array) -> Array:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over the last axis, then affine."""
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layernorm needs a non-empty last axis")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"gain/bias must have shape ({d},)")
    if eps <= 0:
        raise ContractError("layernorm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gain.data + bias.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgain, dbias

    return _record(Tensor(out), (x, gain, bias), vjp)


def logsumexp(x: Tensor, axis: int) -> Tensor:
    """Stable log-sum-exp along one axis; -inf entries carry zero weight."""
    out, w = _logsumexp_forward(x.data, axis)

    def vjp(g):
        return (np.expand_dims(g, axis) * w,)

    return _record(Tensor(out), (x,), vjp)


def _logsumexp_forward(x: Array, axis: int) -> tuple[Array, Array]:
    m = np.max(x, axis=axis, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - safe_m)
    s = e.sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isfinite(m), safe_m + np.log(s), m)
        w = np.where(np.isfinite(out), e / s, 0.0)
    return np.squeeze(out, axis=axis), w


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return _record(Tensor(out), (x,), vjp)


def transpose(x: Tensor, axes=None) -> Tensor:
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return _record(Tensor(out), (x,), vjp)


def slice_tensor(x: Tensor, key) -> Tensor:
    out = x.data[key]

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        return (gx,)

    return _record(Tensor(np.array(out, copy=True)), (x,), vjp)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return _record(Tensor(out), tuple(parts), vjp)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(Tensor(out), (x,), vjp)


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        count = x.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / count,)

    return _record(Tensor(out), (x,), vjp)


def mask_fill(x: Tensor, keep: Array, fill_value: float = -np.inf) -> Tensor:
    """Keep entries where ``keep`` is True, overwrite the rest with a constant.

    Gradients flow only through kept entries.
    """
    keep = np.broadcast_to(np.asarray(keep, dtype=bool), x.shape)
    out = np.where(keep, x.data, fill_value)

    def vjp(g):
        return (np.where(keep, g, 0.0),)

    return _record(Tensor(out), (x,), vjp)


def gather_sum(x: Tensor, indices: tuple[Array, ...]) -> Tensor:
    """Sum of the entries selected by a fancy index tuple."""
    out = np.float64(x.data[indices].sum()) if len(indices[0]) else np.float64(0.0)

    def vjp(g):
        gx = np.zeros_like(x.data)
        if len(indices[0]):
            np.add.at(gx, indices, g)
        return (gx,)

    return _record(Tensor(out), (x,), vjp)


# -- convolutions -----------------------------------------------------------


def _fft_full_conv(a: Array, b: Array) -> Array:
    """Full linear convolution along axis 0 via zero-padded real FFT."""
    la, lb = a.shape[0], b.shape[0]
    n_lin = la + lb - 1
    nfft = 1 << max(1, (n_lin - 1)).bit_length()
    fa = np.fft.rfft(a, n=nfft, axis=0)
    fb = np.fft.rfft(b, n=nfft, axis=0)
    return np.fft.irfft(fa * fb, n=nfft, axis=0)[:n_lin]


def causal_conv(kernel: Tensor, x: Tensor) -> Tensor:
    """Causal convolution y_k = sum_{l<=k} kernel_l x_{k-l}, truncated to len(x).

    Both operands share axis 0 (time) and any trailing channel axes; the
    circular FFT product is zero-padded internally so the result is linear.
    """
    if kernel.shape != x.shape:
        raise DimensionError(f"kernel/input shapes differ: {kernel.shape} vs {x.shape}")
    L = x.shape[0]
    out = _fft_full_conv(kernel.data, x.data)[:L]

    def vjp(g):
        rev_x = x.data[::-1]
        rev_k = kernel.data[::-1]
        gk = _fft_full_conv(g, rev_x)[L - 1 : 2 * L - 1]
        gx = _fft_full_conv(g, rev_k)[L - 1 : 2 * L - 1]
        return gk, gx

    return _record(Tensor(out), (kernel, x), vjp)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 2-d convolution: x (H,W,Cin), w (kh,kw,Cin,Cout), b (Cout,)."""
    kh, kw, cin, cout = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("conv2d requires odd kernel extents for same padding")
    if x.ndim != 3 or x.shape[2] != cin:
        raise DimensionError(f"conv2d input {x.shape} incompatible with kernel {w.shape}")
    if b.shape != (cout,):
        raise DimensionError(f"conv2d bias must have shape ({cout},)")
    windows = _conv_windows(x.data, kh, kw)
    out = np.einsum("hwijc,ijco->hwo", windows, w.data, optimize=True) + b.data

    def vjp(g):
        db = g.sum(axis=(0, 1))
        dw = np.einsum("hwijc,hwo->ijco", windows, g, optimize=True)
        w_flip = w.data[::-1, ::-1].transpose(0, 1, 3, 2)
        g_windows = _conv_windows(g, kh, kw)
        dx = np.einsum("hwijo,ijoc->hwc", g_windows, w_flip, optimize=True)
        return dx, dw, db

    return _record(Tensor(out), (x, w, b), vjp)


def _conv_windows(x: Array, kh: int, kw: int) -> Array:
    """(H,W,C) -> (H,W,kh,kw,C) sliding windows over a zero-padded input."""
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(0, 1))
    return win.transpose(0, 1, 3, 4, 2)


def downsample(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping mean pooling along axis 0; a partial last window is
    averaged over its actual length."""
    if factor < 1:
        raise ContractError("downsample factor must be >= 1")
    if factor == 1:
        return slice_tensor(x, slice(None))
    L = x.shape[0]
    n_out = -(-L // factor)
    starts = np.arange(n_out) * factor
    ends = np.minimum(starts + factor, L)
    counts = (ends - starts).astype(np.float64)
    shape = (n_out,) + x.shape[1:]
    out = np.add.reduceat(x.data, starts, axis=0) / counts.reshape((-1,) + (1,) * (x.ndim - 1))

    def vjp(g):
        scaled = g / counts.reshape((-1,) + (1,) * (x.ndim - 1))
        return (np.repeat(scaled, ends - starts, axis=0),)

    out = out.reshape(shape)
    return _record(Tensor(out), (x,), vjp)


# -- verification helpers ---------------------------------------------------


def assert_all_finite(x: Tensor | Array, what: str = "tensor") -> None:
    data = x.data if isinstance(x, Tensor) else x
    if not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values in {what}")


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between recorded adjoints and central differences.

    Error per component is |g_ad - g_fd| / max(1, |g_fd|) with a central
    difference of step ``h``.  ``f`` must be deterministic; non-finite
    evaluations raise.
    """
    if h <= 0:
        raise ContractError("grad_check step must be positive")
    start = len(_TAPE)
    try:
        for p in params:
            p.grad = None
        loss = f()
        assert_all_finite(loss, "grad_check loss")
        backward(loss)
        analytic = [
            np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params
        ]
    finally:
        _TAPE.truncate(start)
    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            ga_flat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = f().item()
                flat[i] = orig - h
                f_minus = f().item()
                flat[i] = orig
                if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                    raise FloatingPointError("non-finite evaluation in grad_check")
                g_fd = (f_plus - f_minus) / (2.0 * h)
                err = abs(ga_flat[i] - g_fd) / max(1.0, abs(g_fd))
                worst = max(worst, err)
    return worst
