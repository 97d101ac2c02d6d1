"""Bottleneck residual classifier with switchable architecture upgrades.

``build_model`` assembles a 50- or 101-layer bottleneck network whose five
enhancement flags can be toggled independently (every combination builds
and trains):

* ``replace_stem``: swap the single 7x7 stride-2 stem conv for three 3x3
  convs (strides 2, 1, 1) at widths 32, 32, 64 (scaled by ``width_mult``).
* ``replace_maxpool``: swap the stem's 3x3 stride-2 max pool for a 3x3
  stride-2 conv + batch norm + relu.
* ``sco``: carry each downsampling block's stride on the 3x3 conv instead
  of the leading 1x1, so no activations are silently skipped.
* ``modify_shortcut``: project shortcuts as avgpool 2x2 stride 2, then
  1x1 conv stride 1, then batch norm (the pool is dropped at stride 1).
* ``cbam``: gate each block's output with channel + spatial attention
  before the residual add (per-block parameters).

The input feature plan is the classic [3, 4, 6, 3] / [3, 4, 23, 3] stage
layout with bottleneck expansion 4; ``width_mult`` scales every channel
count.  Spatial bookkeeping: exactly two stride-2 reductions happen before
stage 1 and one more at each of stages 2 to 4, so 224 px inputs reach the
head at 7 px.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .attention import CBAM
from .layers import BatchNorm2d, ConvLayer, Dropout, Linear

__all__ = ["ModelConfig", "Bottleneck", "Shortcut", "Model", "build_model",
           "param_count"]

STAGE_PLANS = {50: (3, 4, 6, 3), 101: (3, 4, 23, 3)}
BASE_WIDTHS = (64, 128, 256, 512)
EXPANSION = 4


@dataclass
class ModelConfig:
    depth: int = 50
    num_classes: int = 3
    width_mult: float = 1.0
    cbam: bool = True
    cbam_ratio: int = 16
    cbam_kernel: int = 7
    sco: bool = True
    sco_literal: bool = False
    replace_stem: bool = True
    replace_maxpool: bool = True
    modify_shortcut: bool = True
    shortcut_relu: bool = False
    dropout_rate: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.depth not in STAGE_PLANS:
            raise ValueError(f"depth must be one of {sorted(STAGE_PLANS)}, "
                             f"got {self.depth}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.width_mult <= 0:
            raise ValueError(f"width_mult must be > 0, got {self.width_mult}")
        if self.cbam_ratio < 1:
            raise ValueError(f"cbam_ratio must be >= 1, got {self.cbam_ratio}")
        if self.cbam_kernel % 2 == 0 or self.cbam_kernel < 1:
            raise ValueError(f"cbam_kernel must be odd, got {self.cbam_kernel}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def scaled(self, channels: int) -> int:
        return max(1, int(round(channels * self.width_mult)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class _ConvBnRelu:
    """Stem unit: conv -> batch norm -> relu."""

    def __init__(self, in_ch, out_ch, k, stride, rng, dtype):
        self.conv = ConvLayer(in_ch, out_ch, k, stride=stride, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)

    def forward(self, x, training):
        return ad.relu(self.bn.forward(self.conv.forward(x), training))

    def named_parameters(self):
        return ([("conv." + n, p) for n, p in self.conv.named_parameters()]
                + [("bn." + n, p) for n, p in self.bn.named_parameters()])

    def named_buffers(self):
        return [("bn." + n, b) for n, b in self.bn.named_buffers()]

    def named_bns(self):
        return [("bn", self.bn)]


class Shortcut:
    """Projection shortcut, optionally pooled.

    Plain form is 1x1 conv at the block's stride, then batch norm.  The
    modified form averages 2x2 patches at stride 2 first and runs the 1x1
    conv at stride 1, so every input position contributes; at stride 1 the
    pool disappears and the two forms coincide structurally.
    """

    def __init__(self, in_ch: int, out_ch: int, stride: int, pooled: bool,
                 relu_after: bool, rng, dtype):
        self.pooled = pooled and stride == 2
        self.relu_after = relu_after
        conv_stride = 1 if self.pooled else stride
        self.conv = ConvLayer(in_ch, out_ch, 1, stride=conv_stride, padding=0,
                              rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)

    def forward(self, x, training):
        if self.pooled:
            x = ad.pool2d(x, "avg", 2, 2, 0)
        out = self.bn.forward(self.conv.forward(x), training)
        return ad.relu(out) if self.relu_after else out

    def named_parameters(self):
        return ([("conv." + n, p) for n, p in self.conv.named_parameters()]
                + [("bn." + n, p) for n, p in self.bn.named_parameters()])

    def named_buffers(self):
        return [("bn." + n, b) for n, b in self.bn.named_buffers()]

    def named_bns(self):
        return [("bn", self.bn)]


class Bottleneck:
    """1x1 reduce -> 3x3 -> 1x1 expand, with optional attention gate.

    The attention gate (when enabled) sits after the final batch norm and
    before the residual add; the closing relu comes after the add.
    """

    def __init__(self, in_ch: int, width: int, stride: int, cfg: ModelConfig,
                 rng, dtype):
        out_ch = width * EXPANSION
        if cfg.sco and not cfg.sco_literal:
            s1, s2 = 1, stride
        else:
            s1, s2 = stride, 1
        self.stride = stride
        self.out_channels = out_ch
        self.conv1 = ConvLayer(in_ch, width, 1, stride=s1, padding=0,
                               rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(width, dtype=dtype)
        self.conv2 = ConvLayer(width, width, 3, stride=s2, padding=1,
                               rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(width, dtype=dtype)
        self.conv3 = ConvLayer(width, out_ch, 1, stride=1, padding=0,
                               rng=rng, dtype=dtype)
        self.bn3 = BatchNorm2d(out_ch, dtype=dtype)
        self.cbam = (CBAM(out_ch, cfg.cbam_ratio, cfg.cbam_kernel,
                          rng=rng, dtype=dtype)
                     if cfg.cbam else None)
        if stride == 1 and in_ch == out_ch:
            self.shortcut = None
        else:
            self.shortcut = Shortcut(in_ch, out_ch, stride,
                                     pooled=cfg.modify_shortcut,
                                     relu_after=cfg.shortcut_relu,
                                     rng=rng, dtype=dtype)

    def forward(self, x, training):
        y = ad.relu(self.bn1.forward(self.conv1.forward(x), training))
        y = ad.relu(self.bn2.forward(self.conv2.forward(y), training))
        y = self.bn3.forward(self.conv3.forward(y), training)
        if self.cbam is not None:
            y = self.cbam.forward(y)
        s = x if self.shortcut is None else self.shortcut.forward(x, training)
        return ad.relu(ad.add(s, y))

    def _children(self):
        kids = [("conv1", self.conv1), ("bn1", self.bn1),
                ("conv2", self.conv2), ("bn2", self.bn2),
                ("conv3", self.conv3), ("bn3", self.bn3)]
        if self.cbam is not None:
            kids.append(("cbam", self.cbam))
        if self.shortcut is not None:
            kids.append(("shortcut", self.shortcut))
        return kids

    def named_parameters(self):
        out = []
        for name, child in self._children():
            out.extend((f"{name}.{n}", p) for n, p in child.named_parameters())
        return out

    def named_buffers(self):
        out = []
        for name, child in self._children():
            out.extend((f"{name}.{n}", b) for n, b in child.named_buffers())
        return out

    def named_bns(self):
        out = [("bn1", self.bn1), ("bn2", self.bn2), ("bn3", self.bn3)]
        if self.shortcut is not None:
            out.extend((f"shortcut.{n}", bn)
                       for n, bn in self.shortcut.named_bns())
        return out


class Model:
    """The assembled network: stem, four stages, pooled classifier head."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        config.validate()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.config = config
        self.dtype = dtype
        c = config.scaled
        stem_out = c(64)
        if config.replace_stem:
            self.stem = [
                _ConvBnRelu(3, c(32), 3, 2, rng, dtype),
                _ConvBnRelu(c(32), c(32), 3, 1, rng, dtype),
                _ConvBnRelu(c(32), stem_out, 3, 1, rng, dtype),
            ]
        else:
            self.stem = [_ConvBnRelu(3, stem_out, 7, 2, rng, dtype)]
        self.pool_conv = (_ConvBnRelu(stem_out, stem_out, 3, 2, rng, dtype)
                          if config.replace_maxpool else None)

        plan = STAGE_PLANS[config.depth]
        self.stages: list[list[Bottleneck]] = []
        in_ch = stem_out
        for si, blocks in enumerate(plan):
            width = c(BASE_WIDTHS[si])
            stage = []
            for b in range(blocks):
                stride = 2 if (si > 0 and b == 0) else 1
                block = Bottleneck(in_ch, width, stride, config, rng, dtype)
                stage.append(block)
                in_ch = block.out_channels
            self.stages.append(stage)

        self.feature_channels = in_ch
        self.dropout = Dropout(config.dropout_rate,
                               seed=int(rng.integers(0, 2**31 - 1)))
        # small head init keeps initial predictions near uniform, so the
        # first-batch loss sits near ln(num_classes) at any width
        self.fc = Linear(in_ch, config.num_classes, rng=rng, dtype=dtype,
                         weight_std=0.01)

    def stem_forward(self, x, training: bool = False):
        """Everything before stage 1: stem conv(s) plus the downsampling step."""
        for unit in self.stem:
            x = unit.forward(x, training)
        if self.pool_conv is not None:
            return self.pool_conv.forward(x, training)
        return ad.pool2d(x, "max", 3, 2, 1)

    def features(self, x, training: bool = False):
        x = self.stem_forward(x, training)
        for stage in self.stages:
            for block in stage:
                x = block.forward(x, training)
        return x

    def forward(self, x, training: bool = False):
        x = self.features(x, training)
        x = ad.global_pool(x, "avg")
        x = ad.reshape(x, (x.shape[0], self.feature_channels))
        x = self.dropout.forward(x, training)
        return self.fc.forward(x, training)

    def _groups(self):
        groups = [(f"stem.{i}", unit) for i, unit in enumerate(self.stem)]
        if self.pool_conv is not None:
            groups.append(("downsample", self.pool_conv))
        for si, stage in enumerate(self.stages):
            for bi, block in enumerate(stage):
                groups.append((f"stage{si + 1}.{bi}", block))
        groups.append(("fc", self.fc))
        return groups

    def named_parameters(self):
        out = []
        for name, group in self._groups():
            out.extend((f"{name}.{n}", p) for n, p in group.named_parameters())
        return out

    def named_buffers(self):
        out = []
        for name, group in self._groups():
            out.extend((f"{name}.{n}", b) for n, b in group.named_buffers())
        return out

    def named_bns(self):
        out = []
        for gname, group in self._groups():
            if hasattr(group, "named_bns"):
                out.extend((f"{gname}.{n}", bn) for n, bn in group.named_bns())
        return out

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        prefix, _, attr = name.rpartition(".")
        for bn_name, bn in self.named_bns():
            if bn_name == prefix:
                bn.set_buffer(attr, value)
                return
        raise KeyError(name)

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def build_model(config: ModelConfig, rng: np.random.Generator | None = None,
                dtype=np.float32) -> Model:
    return Model(config, rng=rng, dtype=dtype)


def param_count(model: Model) -> tuple[int, dict[str, int]]:
    """Total trainable parameter count plus a per-section breakdown."""
    breakdown: dict[str, int] = {}
    for name, p in model.named_parameters():
        top = name.split(".")[0]
        if top.startswith("stage"):
            section = top
        elif top == "fc":
            section = "head"
        elif top == "downsample":
            section = "downsample"
        else:
            section = "stem"
        breakdown[section] = breakdown.get(section, 0) + int(p.value.size)
    return sum(breakdown.values()), breakdown
