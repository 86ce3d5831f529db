"""CNN path and the encoders fusion module.

x0 = ResB(x)
x1 = ResB(cat(UpR^3(z1), MP(x0)))
x2 = ResB(cat(UpR^2(z2), MP(x1)))
x3 = ResB(cat(UpR(z3),   MP(x2)))
x4 = ResB(cat(ResB(z4),  MP(x3)))

With the transformer path disabled the taps vanish and each stage is a plain
ResB(MP(.)) step, i.e. a residual U-Net encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .nn import BatchNorm2d, Conv2d, Module
from .tensor import ops
from .tensor.tensor import Tensor


class ResBlock(Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        if out_ch < 1:
            raise ValueError("ResBlock needs at least one output channel")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.conv1 = Conv2d(in_ch, out_ch, 3, bias=False)
        self.bn1 = BatchNorm2d(out_ch)
        self.conv2 = Conv2d(out_ch, out_ch, 3, bias=False)
        self.bn2 = BatchNorm2d(out_ch)
        self.skip = Conv2d(in_ch, out_ch, 1, bias=False)
        self.bn_skip = BatchNorm2d(out_ch)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_ch:
            raise ValueError(f"ResBlock expects {self.in_ch} channels, got {x.shape[1]}")
        main = ops.relu(self.bn1(self.conv1(x)))
        main = ops.relu(self.bn2(self.conv2(main)))
        return ops.add(main, ops.relu(self.bn_skip(self.skip(x))))


class UpResBlock(Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.res = ResBlock(in_ch, out_ch)

    def forward(self, z: Tensor) -> Tensor:
        return self.res(ops.upsample_bilinear2x(z))


@dataclass(frozen=True)
class FusionConfig:
    base_width: int = 64

    @property
    def widths(self) -> tuple[int, ...]:
        b = self.base_width
        return (b, 2 * b, 4 * b, 8 * b, 16 * b)

    def up_chains(self) -> tuple[tuple[int, ...], ...]:
        """Output widths of the UpR chains applied to taps z1, z2, z3 (tapering to the stage width)."""
        b = self.base_width
        return ((8 * b, 4 * b, 2 * b), (8 * b, 4 * b), (8 * b,))


class EncoderFeatures(NamedTuple):
    x0: Tensor
    x1: Tensor
    x2: Tensor
    x3: Tensor
    x4: Tensor


class FusionStage(Module):
    """One fusion level: optional tap branch, max-pooled CNN branch, concat, ResB."""

    def __init__(self, prev_ch: int, out_ch: int, tap_ch: int | None, chain: Sequence[int] | None, up: bool):
        super().__init__()
        if tap_ch is not None:
            if up:
                widths = [tap_ch, *chain]
                self.up = [UpResBlock(a, b) for a, b in zip(widths, widths[1:])]
                branch_ch = widths[-1]
            else:
                self.tap = ResBlock(tap_ch, out_ch)
                branch_ch = out_ch
        else:
            branch_ch = 0
        self.res = ResBlock(branch_ch + prev_ch, out_ch)

    def forward(self, prev: Tensor, z: Tensor | None = None) -> Tensor:
        pooled = ops.maxpool2x2(prev)
        if z is None:
            return self.res(pooled)
        if hasattr(self, "up"):
            for block in self.up:
                z = block(z)
        else:
            z = self.tap(z)
        if z.shape[2:] != pooled.shape[2:]:
            raise ValueError(f"transformer branch at {z.shape[2:]} but CNN branch at {pooled.shape[2:]}")
        return self.res(ops.concat_channels([z, pooled]))


class EncodersFusion(Module):
    def __init__(self, in_ch: int, cfg: FusionConfig, tap_ch: int | None):
        super().__init__()
        w = cfg.widths
        chains = cfg.up_chains()
        self.cfg = cfg
        self.uses_taps = tap_ch is not None
        self.stem = ResBlock(in_ch, w[0])
        self.stage1 = FusionStage(w[0], w[1], tap_ch, chains[0], up=True)
        self.stage2 = FusionStage(w[1], w[2], tap_ch, chains[1], up=True)
        self.stage3 = FusionStage(w[2], w[3], tap_ch, chains[2], up=True)
        self.stage4 = FusionStage(w[3], w[4], tap_ch, None, up=False)

    def forward(self, x: Tensor, taps: Sequence[Tensor] | None = None) -> EncoderFeatures:
        _, _, h, w = x.shape
        if h % 16 or w % 16:
            raise ValueError(f"image {h}x{w}: spatial extents must be divisible by 16")
        if self.uses_taps:
            if taps is None or len(taps) != 4:
                raise ValueError("fusion with the transformer path needs four taps")
            z1, z2, z3, z4 = taps
        else:
            z1 = z2 = z3 = z4 = None
        x0 = self.stem(x)
        x1 = self.stage1(x0, z1)
        x2 = self.stage2(x1, z2)
        x3 = self.stage3(x2, z3)
        x4 = self.stage4(x3, z4)
        return EncoderFeatures(x0, x1, x2, x3, x4)
