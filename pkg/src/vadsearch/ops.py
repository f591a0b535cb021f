"""The 18 searchable operations as shape-preserving torch modules.

All ops take and return (batch, channels, time, feature) tensors with the
same shape. Convolutional blocks use batch normalization; attention and FFN
blocks use layer normalization over channels, both pre-activation.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .arch import OpKind


class ChannelLayerNorm(nn.Module):
    """LayerNorm across the channel axis of a (B, C, T, F) tensor."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x):
        return self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class MBConv(nn.Module):
    """Pre-activation bottleneck residual block (expand, depthwise, project)."""

    def __init__(self, channels: int, kernel: int, expansion: int):
        super().__init__()
        hidden = channels * expansion
        self.pre = nn.Sequential(nn.BatchNorm2d(channels), nn.GELU())
        self.expand = nn.Conv2d(channels, hidden, 1)
        self.mid = nn.Sequential(nn.BatchNorm2d(hidden), nn.GELU())
        self.depthwise = nn.Conv2d(hidden, hidden, kernel,
                                   padding=kernel // 2, groups=hidden)
        self.post = nn.Sequential(nn.BatchNorm2d(hidden), nn.GELU())
        self.project = nn.Conv2d(hidden, channels, 1)

    def forward(self, x):
        h = self.pre(x)
        h = self.expand(h)
        h = self.mid(h)
        h = self.depthwise(h)
        h = self.post(h)
        return x + self.project(h)


class AxisAttention(nn.Module):
    """Multi-head self-attention along the time axis, the feature axis, or both.

    Single-axis variants fold the other axis into the batch dimension.
    """

    def __init__(self, channels: int, heads: int, axis: str):
        super().__init__()
        if channels % heads != 0:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        if axis not in ("time", "feature", "both"):
            raise ValueError(f"unknown attention axis {axis!r}")
        self.heads = heads
        self.axis = axis
        self.head_dim = channels // heads
        self.norm = ChannelLayerNorm(channels)
        self.q = nn.Conv2d(channels, channels, 1)
        self.k = nn.Conv2d(channels, channels, 1)
        self.v = nn.Conv2d(channels, channels, 1)
        self.out = nn.Conv2d(channels, channels, 1)

    def _tokens(self, x):
        # (B, C, T, F) -> (batch', tokens, C)
        b, c, t, f = x.shape
        if self.axis == "time":
            return x.permute(0, 3, 2, 1).reshape(b * f, t, c)
        if self.axis == "feature":
            return x.permute(0, 2, 3, 1).reshape(b * t, f, c)
        return x.permute(0, 2, 3, 1).reshape(b, t * f, c)

    def _untokens(self, tokens, shape):
        b, c, t, f = shape
        if self.axis == "time":
            return tokens.reshape(b, f, t, c).permute(0, 3, 2, 1)
        if self.axis == "feature":
            return tokens.reshape(b, t, f, c).permute(0, 3, 1, 2)
        return tokens.reshape(b, t, f, c).permute(0, 3, 1, 2)

    def forward(self, x):
        h = self.norm(x)
        q, k, v = self._tokens(self.q(h)), self._tokens(self.k(h)), self._tokens(self.v(h))
        bb, n, c = q.shape
        def split(t):
            return t.reshape(bb, n, self.heads, self.head_dim).transpose(1, 2)
        q, k, v = split(q), split(k), split(v)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(self.head_dim), dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(bb, n, c)
        return x + self.out(self._untokens(mixed, x.shape))


class FFN(nn.Module):
    def __init__(self, channels: int, expansion: float):
        super().__init__()
        hidden = max(1, round(channels * expansion))
        self.norm = ChannelLayerNorm(channels)
        self.up = nn.Conv2d(channels, hidden, 1)
        self.act = nn.GELU()
        self.down = nn.Conv2d(hidden, channels, 1)

    def forward(self, x):
        return x + self.down(self.act(self.up(self.norm(x))))


class SqueezeExcite(nn.Module):
    """Channel gating from globally pooled statistics (no extra residual)."""

    def __init__(self, channels: int, ratio: float = 0.25):
        super().__init__()
        hidden = max(1, int(channels * ratio))
        self.squeeze = nn.Linear(channels, hidden)
        self.act = nn.GELU()
        self.excite = nn.Linear(hidden, channels)

    def forward(self, x):
        pooled = x.mean(dim=(2, 3))
        gate = torch.sigmoid(self.excite(self.act(self.squeeze(pooled))))
        return x * gate[:, :, None, None]


class GLUConv(nn.Module):
    def __init__(self, channels: int, kernel: int):
        super().__init__()
        self.norm = nn.BatchNorm2d(channels)
        self.conv = nn.Conv2d(channels, 2 * channels, kernel, padding=kernel // 2)
        self.channels = channels

    def forward(self, x):
        h = self.conv(self.norm(x))
        a, b = h[:, :self.channels], h[:, self.channels:]
        return x + a * torch.sigmoid(b)


class Zero(nn.Module):
    """All-zeros output; gradients flow through as exact zeros."""

    def forward(self, x):
        return x * 0.0


_BUILDERS = {
    OpKind.MBCONV_3X2: lambda c: MBConv(c, 3, 2),
    OpKind.MBCONV_3X4: lambda c: MBConv(c, 3, 4),
    OpKind.MBCONV_5X2: lambda c: MBConv(c, 5, 2),
    OpKind.MBCONV_5X4: lambda c: MBConv(c, 5, 4),
    OpKind.MHA_T_2: lambda c: AxisAttention(c, 2, "time"),
    OpKind.MHA_T_4: lambda c: AxisAttention(c, 4, "time"),
    OpKind.MHA_F_2: lambda c: AxisAttention(c, 2, "feature"),
    OpKind.MHA_F_4: lambda c: AxisAttention(c, 4, "feature"),
    OpKind.MHA_TF_2: lambda c: AxisAttention(c, 2, "both"),
    OpKind.MHA_TF_4: lambda c: AxisAttention(c, 4, "both"),
    OpKind.FFN_05: lambda c: FFN(c, 0.5),
    OpKind.FFN_1: lambda c: FFN(c, 1.0),
    OpKind.FFN_2: lambda c: FFN(c, 2.0),
    OpKind.SE_025: lambda c: SqueezeExcite(c, 0.25),
    OpKind.GLU_3: lambda c: GLUConv(c, 3),
    OpKind.GLU_5: lambda c: GLUConv(c, 5),
    OpKind.SKIP: lambda c: nn.Identity(),
    OpKind.ZERO: lambda c: Zero(),
}


def build_op(kind: OpKind, channels: int) -> nn.Module:
    return _BUILDERS[kind](channels)


def apply_search_op(kind: OpKind, x: torch.Tensor, module: nn.Module) -> torch.Tensor:
    """Apply a pre-built op module, checking the channel contract."""
    expected = getattr(module, "channels", None)
    if expected is not None and x.shape[1] != expected:
        raise ValueError(f"channel mismatch: input {x.shape[1]}, op expects {expected}")
    return module(x)
