"""Convolutional block attention: channel gating followed by spatial gating.

The channel gate squeezes the feature map with global average AND global max
pooling, pushes both summaries through one shared bottleneck MLP (two
bias-free 1x1 convolutions with a relu between, reduction ``ratio``), adds
the results, and applies a sigmoid.  The spatial gate stacks the per-pixel
channel mean and channel max into a 2-channel map and runs a single bias-free
SxS convolution (zero padding S//2) through a sigmoid.  Both gates multiply
into the feature map elementwise, channel first, then spatial on the
channel-gated result.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Variable
from .layers import ConvLayer

__all__ = ["ChannelAttention", "SpatialAttention", "CBAM", "cbam_apply"]


class ChannelAttention:
    """Produces per-channel gates in (0, 1) with shape (N, C, 1, 1)."""

    def __init__(self, channels: int, ratio: int = 16,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if ratio < 1:
            raise ValueError(f"ratio must be >= 1, got {ratio}")
        if channels % ratio != 0:
            raise ValueError(
                f"channels ({channels}) must be divisible by ratio ({ratio})")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.ratio = ratio
        hidden = channels // ratio
        self.reduce = ConvLayer(channels, hidden, 1, padding=0, bias=False,
                                rng=rng, dtype=dtype)
        self.expand = ConvLayer(hidden, channels, 1, padding=0, bias=False,
                                rng=rng, dtype=dtype)

    def _mlp(self, pooled: Variable) -> Variable:
        return self.expand.forward(ad.relu(self.reduce.forward(pooled)))

    def forward(self, x) -> Variable:
        avg = ad.global_pool(x, "avg")
        mx = ad.global_pool(x, "max")
        return ad.sigmoid(ad.add(self._mlp(avg), self._mlp(mx)))

    def named_parameters(self):
        return ([("reduce." + n, p) for n, p in self.reduce.named_parameters()]
                + [("expand." + n, p) for n, p in self.expand.named_parameters()])

    def named_buffers(self):
        return []


class SpatialAttention:
    """Produces per-position gates in (0, 1) with shape (N, 1, H, W)."""

    def __init__(self, kernel_size: int = 7,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if kernel_size % 2 == 0 or kernel_size < 1:
            raise ValueError(
                f"spatial attention kernel must be odd and >= 1, got {kernel_size}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel_size = kernel_size
        self.conv = ConvLayer(2, 1, kernel_size, padding=kernel_size // 2,
                              bias=False, rng=rng, dtype=dtype)

    def forward(self, x) -> Variable:
        stacked = ad.concat([ad.channel_mean(x), ad.channel_max(x)], axis=1)
        return ad.sigmoid(self.conv.forward(stacked))

    def named_parameters(self):
        return [("conv." + n, p) for n, p in self.conv.named_parameters()]

    def named_buffers(self):
        return []


class CBAM:
    """Channel gate then spatial gate, each its own parameter set."""

    def __init__(self, channels: int, ratio: int = 16, kernel_size: int = 7,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.channel = ChannelAttention(channels, ratio, rng=rng, dtype=dtype)
        self.spatial = SpatialAttention(kernel_size, rng=rng, dtype=dtype)

    def forward(self, x) -> Variable:
        return cbam_apply(x, self.channel, self.spatial)

    def named_parameters(self):
        return ([("channel." + n, p) for n, p in self.channel.named_parameters()]
                + [("spatial." + n, p) for n, p in self.spatial.named_parameters()])

    def named_buffers(self):
        return []


def cbam_apply(x, channel: ChannelAttention, spatial: SpatialAttention) -> Variable:
    """Gate ``x`` by channel attention, then gate the result spatially."""
    x = ad.as_variable(x)
    gated = ad.mul(x, channel.forward(x))
    return ad.mul(gated, spatial.forward(gated))
