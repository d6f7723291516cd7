"""The S4-style context encoder: per-channel state-space kernels applied by
causal FFT convolution inside pre-layernorm residual blocks.

Each block owns one scalar SSM per channel in the paired DPLR
parameterization of :mod:`tessef.ssm`.  Kernel computation is a single fused
differentiable primitive: forward discretizes and power-iterates the complex
half-system, and the adjoint propagates holomorphic reverse-mode through the
resolvent and the state recursion (validated against finite differences).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ContractError
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor

Array = np.ndarray


@dataclass
class EncoderConfig:
    feature_dim: int = 40
    model_dim: int = 32
    state_dim: int = 16  # modes per channel; the realized state is twice this
    ffn_hidden: int = 64
    n_blocks: int = 2
    max_seq_len: int = 512

    def __post_init__(self):
        for field in ("feature_dim", "model_dim", "state_dim", "ffn_hidden", "n_blocks"):
            if getattr(self, field) < 1:
                raise ContractError(f"{field} must be >= 1")


class SsmBank(Module):
    """Per-channel DPLR parameters stored as real tensors of shape (C, m)."""

    def __init__(self, rng: np.random.Generator, channels: int, modes: int):
        n = np.arange(modes, dtype=np.float64)
        lam_re = np.tile(-0.5, (channels, modes))
        lam_im = np.tile(np.pi * n, (channels, 1))
        pq = np.tile(np.sqrt(n + 0.5), (channels, 1))
        scale = 1.0 / np.sqrt(2.0)
        self.lam_re = Tensor(lam_re, requires_grad=True)
        self.lam_im = Tensor(lam_im, requires_grad=True)
        self.p_re = Tensor(pq.copy(), requires_grad=True)
        self.p_im = Tensor(np.zeros((channels, modes)), requires_grad=True)
        self.q_re = Tensor(pq.copy(), requires_grad=True)
        self.q_im = Tensor(np.zeros((channels, modes)), requires_grad=True)
        self.b_re = Tensor(rng.standard_normal((channels, modes)) * scale, requires_grad=True)
        self.b_im = Tensor(rng.standard_normal((channels, modes)) * scale, requires_grad=True)
        self.c_re = Tensor(rng.standard_normal((channels, modes)) * scale, requires_grad=True)
        self.c_im = Tensor(rng.standard_normal((channels, modes)) * scale, requires_grad=True)
        self.log_dt = Tensor(
            rng.uniform(np.log(0.001), np.log(0.1), channels), requires_grad=True
        )

    def kernel(self, length: int) -> Tensor:
        return dplr_kernel(self, length)


def dplr_kernel(bank: SsmBank, length: int) -> Tensor:
    """Fused op: (C, m) DPLR parameters -> real kernel tensor of shape (L, C).

    Forward: A = diag(lam) - p q^T per channel, bilinear discretization,
    then k_l = 2 Re(c . A_bar^l b_bar).  The adjoint replays the chain in
    reverse with plain-transpose (holomorphic) rules and maps back to the
    real/imaginary parameter parts.
    """
    if length < 1:
        raise ContractError("kernel length must be >= 1")
    inputs = (
        bank.lam_re, bank.lam_im, bank.p_re, bank.p_im, bank.q_re, bank.q_im,
        bank.b_re, bank.b_im, bank.c_re, bank.c_im, bank.log_dt,
    )
    lam = bank.lam_re.data + 1j * bank.lam_im.data
    p = bank.p_re.data + 1j * bank.p_im.data
    q = bank.q_re.data + 1j * bank.q_im.data
    b = bank.b_re.data + 1j * bank.b_im.data
    c = bank.c_re.data + 1j * bank.c_im.data
    dt = np.exp(bank.log_dt.data)

    channels, modes = lam.shape
    idx = np.arange(modes)
    a = -p[:, :, None] * q[:, None, :]
    a[:, idx, idx] += lam
    half_dt = 0.5 * dt[:, None, None]
    eye = np.eye(modes)
    m_mat = eye - half_dt * a
    n_mat = eye + half_dt * a
    resolvent = np.linalg.inv(m_mat)
    a_bar = resolvent @ n_mat
    r_b = np.einsum("cij,cj->ci", resolvent, b)
    b_bar = dt[:, None] * r_b

    states = np.empty((length, channels, modes), dtype=np.complex128)
    x = b_bar
    for l in range(length):
        states[l] = x
        if l + 1 < length:
            x = np.einsum("cij,cj->ci", a_bar, x)
    kernel = 2.0 * np.real(np.einsum("lcm,cm->lc", states, c))

    def vjp(g):
        c_hat = np.einsum("lc,lcm->cm", g, states)
        a_bar_hat = np.zeros((channels, modes, modes), dtype=np.complex128)
        x_hat = g[length - 1][:, None] * c
        for l in range(length - 2, -1, -1):
            a_bar_hat += np.einsum("ci,cj->cij", x_hat, states[l])
            x_hat = g[l][:, None] * c + np.einsum("cji,cj->ci", a_bar, x_hat)
        b_bar_hat = x_hat

        r_t = np.transpose(resolvent, (0, 2, 1))
        r_hat = a_bar_hat @ np.transpose(n_mat, (0, 2, 1))
        n_hat = r_t @ a_bar_hat
        r_hat += dt[:, None, None] * np.einsum("ci,cj->cij", b_bar_hat, b)
        b_hat = dt[:, None] * np.einsum("cji,cj->ci", resolvent, b_bar_hat)
        dt_hat = np.einsum("ci,ci->c", r_b, b_bar_hat)

        m_hat = -(r_t @ r_hat @ r_t)
        a_hat = half_dt * (n_hat - m_hat)
        dt_hat += 0.5 * np.einsum("cij,cij->c", a, n_hat - m_hat)

        lam_hat = a_hat[:, idx, idx]
        p_hat = -np.einsum("cij,cj->ci", a_hat, q)
        q_hat = -np.einsum("cij,ci->cj", a_hat, p)

        def real_pair(z_hat):
            return 2.0 * z_hat.real, -2.0 * z_hat.imag

        g_lam = real_pair(lam_hat)
        g_p = real_pair(p_hat)
        g_q = real_pair(q_hat)
        g_b = real_pair(b_hat)
        g_c = real_pair(c_hat)
        g_log_dt = dt * 2.0 * dt_hat.real
        return (*g_lam, *g_p, *g_q, *g_b, *g_c, g_log_dt)

    return tt.custom_op(kernel, inputs, vjp)


class S4Block(Module):
    """Pre-layernorm residual block: x + mix(conv(ln(x))), then an FFN."""

    def __init__(self, rng: np.random.Generator, cfg: EncoderConfig):
        dim = cfg.model_dim
        self.ln1 = LayerNorm(dim)
        self.ssm = SsmBank(rng, dim, cfg.state_dim)
        self.mix = Linear(rng, dim, dim)
        self.ln2 = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, cfg.ffn_hidden)
        self.fc2 = Linear(rng, cfg.ffn_hidden, dim)

    def forward(self, xs: list[Tensor]) -> list[Tensor]:
        kernels: dict[int, Tensor] = {}
        out = []
        for x in xs:
            length = x.shape[0]
            if length not in kernels:
                kernels[length] = self.ssm.kernel(length)
            z = self.ln1(x)
            u = tt.causal_conv(kernels[length], z)
            y1 = x + tt.gelu(self.mix(u))
            y = y1 + self.fc2(tt.gelu(self.fc1(self.ln2(y1))))
            out.append(y)
        return out

    def forward_one(self, x: Tensor) -> Tensor:
        return self.forward([x])[0]


class Encoder(Module):
    """Mean-pool to the label rate, project, then stack S4 blocks."""

    def __init__(self, rng: np.random.Generator, cfg: EncoderConfig):
        self.cfg = cfg
        self.proj = Linear(rng, cfg.feature_dim, cfg.model_dim)
        self.blocks = [S4Block(rng, cfg) for _ in range(cfg.n_blocks)]

    def forward(self, xs: list[Tensor], pool_factor: int = 1) -> list[Tensor]:
        hs = []
        for x in xs:
            pooled = tt.downsample(x, pool_factor)
            if pooled.shape[0] > self.cfg.max_seq_len:
                raise ContractError(
                    f"sequence length {pooled.shape[0]} exceeds cap {self.cfg.max_seq_len}"
                )
            hs.append(self.proj(pooled))
        for block in self.blocks:
            hs = block.forward(hs)
        return hs

    def forward_one(self, x: Tensor, pool_factor: int = 1) -> Tensor:
        return self.forward([x], pool_factor)[0]
