"""Continuous state-space systems, bilinear discretization and the
kernel/recurrence dual view.

A ``ContinuousSSM`` stores a diagonal-plus-low-rank state matrix
``A = diag(lam) - p q^T``.  In the default paired form the stored modes are
one half of a conjugate-symmetric spectrum: the realized system carries the
real and imaginary parts as separate real states and reads out twice the
real part, so the discretized system, its kernel and its scan are all real
valued.  Setting ``paired=False`` takes the stored (real) system literally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import _fft_full_conv

Array = np.ndarray


@dataclass
class ContinuousSSM:
    """Diagonal-plus-low-rank continuous system with a learned step size."""

    lam: Array  # complex (m,) diagonal of A
    p: Array  # complex (m,) low-rank left factor
    q: Array  # complex (m,) low-rank right factor
    b: Array  # complex (m,) input map
    c: Array  # complex (m,) output map
    log_dt: float
    d: float = 0.0
    paired: bool = True

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.complex128)
        self.p = np.asarray(self.p, dtype=np.complex128)
        self.q = np.asarray(self.q, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        self.c = np.asarray(self.c, dtype=np.complex128)
        if not self.paired and np.any(
            [np.abs(v.imag).max(initial=0.0) > 0 for v in (self.lam, self.p, self.q, self.b, self.c)]
        ):
            raise ContractError("unpaired systems must have real parameters")

    @property
    def state_dim(self) -> int:
        return self.lam.shape[0]

    @property
    def dt(self) -> float:
        return float(np.exp(self.log_dt))

    def a_matrix(self) -> Array:
        """The dense state matrix diag(lam) - p q^T."""
        return np.diag(self.lam) - np.outer(self.p, self.q)


@dataclass
class DiscreteSSM:
    """Real discrete-time system; the feedthrough is fixed to zero."""

    a_bar: Array  # (n, n)
    b_bar: Array  # (n,)
    c_bar: Array  # (n,)
    d_bar: float = field(default=0.0, init=False)

    def __post_init__(self):
        self.a_bar = np.asarray(self.a_bar, dtype=np.float64)
        self.b_bar = np.asarray(self.b_bar, dtype=np.float64)
        self.c_bar = np.asarray(self.c_bar, dtype=np.float64)


def init_dplr(state_dim: int, seed: int) -> ContinuousSSM:
    """Stable DPLR initialization, deterministic per seed.

    The diagonal follows the normal approximation lam_n = -1/2 + i*pi*n with
    a rank-one correction of magnitude sqrt(n + 1/2); the input/output maps
    are unit-variance complex gaussians and the log step size is uniform in
    [log 0.001, log 0.1].
    """
    if state_dim < 1:
        raise ContractError("state_dim must be >= 1")
    rng = np.random.default_rng(seed)
    n = np.arange(state_dim)
    lam = -0.5 + 1j * np.pi * n
    p = np.sqrt(n + 0.5).astype(np.complex128)
    b = (rng.standard_normal(state_dim) + 1j * rng.standard_normal(state_dim)) / np.sqrt(2.0)
    c = (rng.standard_normal(state_dim) + 1j * rng.standard_normal(state_dim)) / np.sqrt(2.0)
    log_dt = float(rng.uniform(np.log(0.001), np.log(0.1)))
    return ContinuousSSM(lam=lam, p=p, q=p.copy(), b=b, c=c, log_dt=log_dt)


def bilinear_matrices(a: Array, b: Array, dt: float) -> tuple[Array, Array]:
    """Tustin transform of (A, B): returns (A_bar, B_bar), possibly complex."""
    m = a.shape[0]
    eye = np.eye(m, dtype=a.dtype)
    resolvent = np.linalg.inv(eye - (dt / 2.0) * a)
    a_bar = resolvent @ (eye + (dt / 2.0) * a)
    b_bar = dt * (resolvent @ b)
    return a_bar, b_bar


def discretize_bilinear(ssm: ContinuousSSM) -> DiscreteSSM:
    """Bilinear (Tustin) discretization; preserves stability exactly.

    Paired systems are realized as a real system of twice the mode count
    carrying real and imaginary state parts, with the output map scaled to
    produce twice the real part.
    """
    a = ssm.a_matrix()
    a_bar_c, b_bar_c = bilinear_matrices(a, ssm.b, ssm.dt)
    if not ssm.paired:
        return DiscreteSSM(a_bar_c.real, b_bar_c.real, ssm.c.real)
    a_bar = np.block(
        [[a_bar_c.real, -a_bar_c.imag], [a_bar_c.imag, a_bar_c.real]]
    )
    b_bar = np.concatenate([b_bar_c.real, b_bar_c.imag])
    c_bar = np.concatenate([2.0 * ssm.c.real, -2.0 * ssm.c.imag])
    return DiscreteSSM(a_bar, b_bar, c_bar)


def compute_kernel(d: DiscreteSSM, L: int) -> Array:
    """Kernel k_l = c_bar . a_bar^l . b_bar for l = 0..L-1 by iterated state
    propagation (O(L * n^2))."""
    if L < 1:
        raise ContractError("kernel length must be >= 1")
    out = np.empty(L)
    x = d.b_bar.copy()
    for l in range(L):
        out[l] = d.c_bar @ x
        if l + 1 < L:
            x = d.a_bar @ x
    return out


def recurrent_scan(d: DiscreteSSM, u: Array) -> Array:
    """Run the system as an RNN from a zero initial state: h_k = A h_{k-1} +
    B u_k, y_k = C h_k."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty(u.shape[0])
    h = np.zeros_like(d.b_bar)
    for k, u_k in enumerate(u):
        h = d.a_bar @ h + d.b_bar * u_k
        out[k] = d.c_bar @ h
    return out


def fft_convolve(kernel: Array, x: Array) -> Array:
    """Causal convolution of equal-length 1-d sequences via zero-padded FFT."""
    kernel = np.asarray(kernel, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if kernel.shape != x.shape or kernel.ndim != 1:
        raise ContractError(f"need equal-length 1-d inputs, got {kernel.shape} and {x.shape}")
    return _fft_full_conv(kernel, x)[: x.shape[0]]
