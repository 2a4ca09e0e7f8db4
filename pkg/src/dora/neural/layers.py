"""Attention building blocks for the set encoder/decoder."""

from __future__ import annotations

import math

import torch
from torch import nn
import torch.nn.functional as F


def fourier_embed(p: torch.Tensor, frequencies: int) -> torch.Tensor:
    """``[p, sin(2^k pi p), cos(2^k pi p)]`` for k < frequencies; width 3 + 6*frequencies.

    Sines for all k come first, then cosines, each block ordered (k, axis).
    """
    if frequencies == 0:
        return p
    scales = (2.0 ** torch.arange(frequencies, dtype=p.dtype, device=p.device)) * math.pi
    x = p[..., None, :] * scales[:, None]  # (..., K, 3)
    x = x.flatten(-2)
    return torch.cat([p, torch.sin(x), torch.cos(x)], dim=-1)


def fourier_dim(frequencies: int) -> int:
    return 3 + 6 * frequencies


def init_linear(layer: nn.Linear) -> nn.Linear:
    """Uniform in +-1/sqrt(fan_in) for weights, zero bias."""
    bound = 1.0 / math.sqrt(layer.in_features)
    nn.init.uniform_(layer.weight, -bound, bound)
    if layer.bias is not None:
        nn.init.zeros_(layer.bias)
    return layer


def cross_attention(
    queries: torch.Tensor,
    keys_values: torch.Tensor,
    attn: "Attention",
    kv_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Multi-head scaled dot-product attention of ``queries`` over ``keys_values``.

    Shapes are (B, Nq, d) and (B, Nk, d); ``kv_mask`` (B, Nk) marks valid
    keys. Rows with no valid key produce zeros.
    """
    return attn(queries, keys_values, kv_mask)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ValueError(f"width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.q = init_linear(nn.Linear(dim, dim))
        self.k = init_linear(nn.Linear(dim, dim))
        self.v = init_linear(nn.Linear(dim, dim))
        self.out = init_linear(nn.Linear(dim, dim))

    def _split(self, x):
        b, n, d = x.shape
        return x.view(b, n, self.heads, d // self.heads).transpose(1, 2)

    def forward(self, x_q, x_kv, kv_mask=None):
        b, nq, d = x_q.shape
        if x_kv.shape[-1] != d:
            raise ValueError(f"feature width mismatch: queries {d}, keys {x_kv.shape[-1]}")
        q, k, v = self._split(self.q(x_q)), self._split(self.k(x_kv)), self._split(self.v(x_kv))
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // self.heads)
        if kv_mask is not None:
            scores = scores.masked_fill(~kv_mask[:, None, None, :], float("-inf"))
            empty = ~kv_mask.any(dim=1)
            if empty.any():
                # keep softmax finite; these rows are zeroed below
                scores = scores.masked_fill(empty[:, None, None, None], 0.0)
        w = torch.softmax(scores, dim=-1)
        out = (w @ v).transpose(1, 2).reshape(b, nq, d)
        out = self.out(out)
        if kv_mask is not None and empty.any():
            out = out * (~empty)[:, None, None].to(out.dtype)
        return out


class FeedForward(nn.Module):
    def __init__(self, dim: int, ratio: int = 4):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.fc1 = init_linear(nn.Linear(dim, dim * ratio))
        self.fc2 = init_linear(nn.Linear(dim * ratio, dim))

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(self.norm(x))))


class CrossAttentionPath(nn.Module):
    """Normalized queries and context fed to one attention; no residual."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)

    def forward(self, q, kv, kv_mask=None):
        return cross_attention(self.norm_q(q), self.norm_kv(kv), self.attn, kv_mask)


class SelfAttentionBlock(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.ff = FeedForward(dim)

    def forward(self, x):
        h = self.norm(x)
        x = x + self.attn(h, h)
        return x + self.ff(x)
