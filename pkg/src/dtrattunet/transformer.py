"""ViT-style encoder path: patch embedding, pre-norm transformer layers and
multi-level taps reshaped to channels-first spatial grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import TRUNC_NORMAL, LayerNorm, Linear, Module, Parameter
from .tensor import ops
from .tensor.tensor import Tensor


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 12
    heads: int = 12
    embed_dim: int = 768
    mlp_dim: int = 3072
    patch: int = 16
    tap_layers: tuple[int, ...] = (4, 7, 10, 12)
    use_pos_embed: bool = True

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        taps = tuple(self.tap_layers)
        if any(b <= a for a, b in zip(taps, taps[1:])) or not taps or taps[0] < 1:
            raise ValueError(f"tap_layers must be strictly increasing and >= 1, got {taps}")
        if taps[-1] > self.layers:
            raise ValueError(f"tap layer {taps[-1]} exceeds layer count {self.layers}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    def check_image(self, h: int, w: int) -> None:
        if h % self.patch or w % self.patch:
            raise ValueError(f"image {h}x{w} not divisible by patch size {self.patch}")

    @classmethod
    def base(cls) -> "TransformerConfig":
        return cls()

    @classmethod
    def desk(cls) -> "TransformerConfig":
        """Small width for CPU training; depth and taps as in the base preset."""
        return cls(layers=12, heads=4, embed_dim=96, mlp_dim=192)


def layer_param_count(embed_dim: int, mlp_dim: int) -> int:
    """Closed-form parameter count of one transformer layer (head count does not matter)."""
    k, m = embed_dim, mlp_dim
    qkv = 3 * k * k + 3 * k
    proj = k * k + k
    mlp = 2 * k * m + m + k
    norms = 2 * 2 * k
    return qkv + proj + mlp + norms


class PatchEmbed(Module):
    def __init__(self, in_ch: int, cfg: TransformerConfig, num_patches: int | None):
        super().__init__()
        s = cfg.patch
        self.proj = Parameter((s * s * in_ch, cfg.embed_dim), TRUNC_NORMAL)
        self.pos = Parameter((num_patches, cfg.embed_dim), TRUNC_NORMAL) if cfg.use_pos_embed else None
        self.patch = s

    def forward(self, x: Tensor) -> Tensor:
        return patch_embed(x, self.proj, self.pos, self.patch)


def patch_embed(x: Tensor, proj: Tensor, pos: Tensor | None, patch: int) -> Tensor:
    """Cut NCHW images into S x S x C patches (row-major over the grid) and project them."""
    n, c, h, w = x.shape
    if h % patch or w % patch:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch}")
    gh, gw = h // patch, w // patch
    # (n, c, gh, s, gw, s) -> (n, gh, gw, s, s, c): each patch flattened as S x S x C
    p = ops.permute(ops.reshape(x, (n, c, gh, patch, gw, patch)), (0, 2, 4, 3, 5, 1))
    tokens = ops.linear(ops.reshape(p, (n, gh * gw, patch * patch * c)), proj)
    if pos is not None:
        if pos.shape[0] != gh * gw:
            raise ValueError(f"position table has {pos.shape[0]} rows, image gives {gh * gw} patches")
        tokens = ops.add(tokens, pos)
    return tokens


class MultiHeadSelfAttention(Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        k = cfg.embed_dim
        self.q = Linear(k, k)
        self.k = Linear(k, k)
        self.v = Linear(k, k)
        self.out = Linear(k, k)  # U_msa
        self.heads = cfg.heads
        self.last_attention: np.ndarray | None = None
        self.keep_attention = False

    def forward(self, x: Tensor) -> Tensor:
        b, n, k = x.shape
        h = self.heads
        d = k // h

        def split(t: Tensor) -> Tensor:
            return ops.permute(ops.reshape(t, (b, n, h, d)), (0, 2, 1, 3))

        q, kk, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = ops.mul(ops.matmul(q, ops.permute(kk, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
        attn = ops.softmax_lastdim(scores)
        if self.keep_attention:
            self.last_attention = attn.data.copy()
        ctx = ops.reshape(ops.permute(ops.matmul(attn, v), (0, 2, 1, 3)), (b, n, k))
        return self.out(ctx)


class MLP(Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.fc1 = Linear(cfg.embed_dim, cfg.mlp_dim)
        self.fc2 = Linear(cfg.mlp_dim, cfg.embed_dim)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class TransformerLayer(Module):
    """z' = MSA(LN(z)) + z ;  z_out = MLP(LN(z')) + z'."""

    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.ln1 = LayerNorm(cfg.embed_dim)
        self.attn = MultiHeadSelfAttention(cfg)
        self.ln2 = LayerNorm(cfg.embed_dim)
        self.mlp = MLP(cfg)

    def forward(self, z: Tensor) -> Tensor:
        z = ops.add(self.attn(self.ln1(z)), z)
        return ops.add(self.mlp(self.ln2(z)), z)


def tokens_to_grid(tokens: Tensor, gh: int, gw: int) -> Tensor:
    """(B, N, K) -> (B, K, gh, gw), token t at grid cell (t // gw, t % gw)."""
    b, n, k = tokens.shape
    if n != gh * gw:
        raise ValueError(f"{n} tokens cannot fill a {gh}x{gw} grid")
    return ops.permute(ops.reshape(tokens, (b, gh, gw, k)), (0, 3, 1, 2))


def grid_to_tokens(grid: Tensor) -> Tensor:
    b, k, gh, gw = grid.shape
    return ops.reshape(ops.permute(grid, (0, 2, 3, 1)), (b, gh * gw, k))


class TransformerEncoder(Module):
    def __init__(self, in_ch: int, image_size: int, cfg: TransformerConfig):
        super().__init__()
        cfg.check_image(image_size, image_size)
        self.cfg = cfg
        self.grid = image_size // cfg.patch
        self.embed = PatchEmbed(in_ch, cfg, self.grid * self.grid)
        self.layers = [TransformerLayer(cfg) for _ in range(cfg.layers)]

    def forward(self, x: Tensor) -> list[Tensor]:
        return self.encode_multilevel(x)

    def encode_multilevel(self, x: Tensor) -> list[Tensor]:
        """Run all layers, returning the tap-layer outputs as (B, K, H/S, W/S) grids."""
        _, _, h, w = x.shape
        self.cfg.check_image(h, w)
        gh, gw = h // self.cfg.patch, w // self.cfg.patch
        z = self.embed(x)
        taps = set(self.cfg.tap_layers)
        out = []
        for i, layer in enumerate(self.layers, start=1):
            z = layer(z)
            if i in taps:
                out.append(tokens_to_grid(z, gh, gw))
            if i == self.cfg.tap_layers[-1]:
                break
        return out
