"""Attention-gated decoders over the shared encoder features."""

from __future__ import annotations

from dataclasses import dataclass

from .fusion import EncoderFeatures, ResBlock
from .nn import BatchNorm2d, Conv2d, Module
from .tensor import ops
from .tensor.tensor import Tensor


@dataclass(frozen=True)
class AttentionGateSpec:
    skip_channels: int
    gate_channels: int
    inter_channels: int | None = None

    @property
    def c_int(self) -> int:
        if self.inter_channels is not None:
            return self.inter_channels
        return max(1, self.skip_channels // 2)


class AttentionGate(Module):
    """M = sigmoid(BN(psi(ReLU(BN(W_x x) + BN(W_g g))))), returns M * x.

    One coefficient per pixel, broadcast over the skip channels.
    """

    def __init__(self, spec: AttentionGateSpec):
        super().__init__()
        c_int = spec.c_int
        if c_int < 1:
            raise ValueError("attention gate needs c_int >= 1")
        self.w_x = Conv2d(spec.skip_channels, c_int, 1, bias=False)
        self.bn_x = BatchNorm2d(c_int)
        self.w_g = Conv2d(spec.gate_channels, c_int, 1, bias=False)
        self.bn_g = BatchNorm2d(c_int)
        self.psi = Conv2d(c_int, 1, 1, bias=True)
        self.bn_psi = BatchNorm2d(1)
        self.last_coefficients = None

    def coefficients(self, x: Tensor, g: Tensor) -> Tensor:
        if x.shape[2:] != g.shape[2:]:
            raise ValueError(f"attention gate: skip {x.shape[2:]} vs gate {g.shape[2:]}")
        a = ops.relu(ops.add(self.bn_x(self.w_x(x)), self.bn_g(self.w_g(g))))
        return ops.sigmoid(self.bn_psi(self.psi(a)))

    def forward(self, x: Tensor, g: Tensor) -> Tensor:
        m = self.coefficients(x, g)
        self.last_coefficients = m.data
        return ops.mul(m, x)


class DecoderStage(Module):
    """u = US(below); s = AG(skip, u) or skip; out = ResB(cat(s, u))."""

    def __init__(self, skip_ch: int, below_ch: int, out_ch: int, attention: bool):
        super().__init__()
        self.gate = AttentionGate(AttentionGateSpec(skip_ch, below_ch)) if attention else None
        self.res = ResBlock(skip_ch + below_ch, out_ch)

    def forward(self, skip: Tensor, below: Tensor) -> Tensor:
        u = ops.upsample_bilinear2x(below)
        if u.shape[2:] != skip.shape[2:]:
            raise ValueError(f"decoder stage: upsampled {u.shape[2:]} vs skip {skip.shape[2:]}")
        s = self.gate(skip, u) if self.gate is not None else skip
        return self.res(ops.concat_channels([s, u]))


class Decoder(Module):
    """Four stages from x4 up to full resolution, then a 1x1 head."""

    def __init__(self, widths: tuple[int, ...], out_classes: int, attention: bool):
        super().__init__()
        b0, b1, b2, b3, b4 = widths
        self.stage1 = DecoderStage(b3, b4, b3, attention)
        self.stage2 = DecoderStage(b2, b3, b2, attention)
        self.stage3 = DecoderStage(b1, b2, b1, attention)
        self.stage4 = DecoderStage(b0, b1, b0, attention)
        self.head = Conv2d(b0, out_classes, 1, bias=True)

    def forward(self, f: EncoderFeatures) -> Tensor:
        d = self.stage1(f.x3, f.x4)
        d = self.stage2(f.x2, d)
        d = self.stage3(f.x1, d)
        d = self.stage4(f.x0, d)
        return self.head(d)

    def gates(self) -> list[AttentionGate]:
        return [s.gate for s in (self.stage1, self.stage2, self.stage3, self.stage4) if s.gate is not None]


class DualDecoder(Module):
    """Lesion decoder plus (optionally) a parameter-disjoint organ decoder."""

    def __init__(self, widths: tuple[int, ...], lesion_classes: int, attention: bool, dual: bool):
        super().__init__()
        if lesion_classes not in (1, 3):
            raise ValueError(f"lesion classes must be 1 (binary) or 3 (multi-class), got {lesion_classes}")
        self.lesion = Decoder(widths, lesion_classes, attention)
        self.organ = Decoder(widths, 1, attention) if dual else None

    def forward(self, f: EncoderFeatures) -> tuple[Tensor, Tensor | None]:
        lesion = self.lesion(f)
        organ = self.organ(f) if self.organ is not None else None
        return lesion, organ
