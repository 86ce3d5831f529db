"""Binary checkpoint format.

Layout (little-endian)::

    "DTAU" | u32 version=1 | u32 count | count * tensor
    [ "OPTS" | u32 count | count * tensor ]          optional optimizer section

    tensor = u16 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 ndim
             | ndim * u32 dims | f32 payload, row-major

Model configuration, epoch and seed travel as ordinary ``meta.*`` tensors so
the file stays a flat tensor table.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .model import ModelVariantConfig, SegmentationModel
from .transformer import TransformerConfig

MAGIC = b"DTAU"
OPTS_TAG = b"OPTS"
VERSION = 1
DTYPE_F32 = 0


class CheckpointError(ValueError):
    pass


def _write_tensor(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise CheckpointError(f"tensor name too long: {name[:40]}...")
    a = np.ascontiguousarray(arr, dtype="<f4")
    if a.ndim > 255:
        raise CheckpointError(f"{name}: too many dimensions")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<BB", DTYPE_F32, a.ndim))
    buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
    buf.write(a.tobytes())


def _write_table(buf: io.BytesIO, tensors: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        _write_tensor(buf, name, arr)


def encode(tensors: dict[str, np.ndarray], opts: dict[str, np.ndarray] | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_table(buf, tensors)
    if opts is not None:
        buf.write(OPTS_TAG)
        _write_table(buf, opts)
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def table(self) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = self.unpack("<H")
            try:
                name = self.take(nlen).decode("utf-8")
            except UnicodeDecodeError:
                raise CheckpointError("tensor name is not valid UTF-8") from None
            dtype, ndim = self.unpack("<BB")
            if dtype != DTYPE_F32:
                raise CheckpointError(f"{name}: unsupported dtype code {dtype}")
            dims = self.unpack(f"<{ndim}I")
            n = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(self.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
            if name in out:
                raise CheckpointError(f"duplicate tensor {name}")
            out[name] = arr
        return out


def decode(data: bytes) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None]:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = r.table()
    opts = None
    if r.pos < len(data):
        if r.take(4) != OPTS_TAG:
            raise CheckpointError("unexpected trailing bytes after the tensor table")
        opts = r.table()
        if r.pos != len(data):
            raise CheckpointError("unexpected trailing bytes after the optimizer section")
    return tensors, opts


# -- metadata -------------------------------------------------------------------


def config_vector(cfg: ModelVariantConfig) -> np.ndarray:
    t = cfg.transformer
    vals = [
        cfg.ag, cfg.dd, cfg.trec, cfg.base_width, cfg.image_size, cfg.lesion_classes, cfg.in_channels,
        t.layers, t.heads, t.embed_dim, t.mlp_dim, t.patch, t.use_pos_embed, len(t.tap_layers), *t.tap_layers,
    ]
    return np.array([int(v) for v in vals], dtype=np.float32)


def config_from_vector(vec: np.ndarray) -> ModelVariantConfig:
    v = [int(x) for x in np.asarray(vec).ravel()]
    if len(v) < 14 or len(v) != 14 + v[13]:
        raise CheckpointError("malformed meta.config tensor")
    tcfg = TransformerConfig(
        layers=v[7], heads=v[8], embed_dim=v[9], mlp_dim=v[10], patch=v[11],
        use_pos_embed=bool(v[12]), tap_layers=tuple(v[14:]),
    )
    return ModelVariantConfig(
        ag=bool(v[0]), dd=bool(v[1]), trec=bool(v[2]), base_width=v[3], image_size=v[4],
        lesion_classes=v[5], in_channels=v[6], transformer=tcfg,
    )


def seed_to_tensor(seed: int) -> np.ndarray:
    seed &= 2**64 - 1
    return np.array([(seed >> (16 * i)) & 0xFFFF for i in range(4)], dtype=np.float32)


def seed_from_tensor(arr: np.ndarray) -> int:
    return sum(int(x) << (16 * i) for i, x in enumerate(np.asarray(arr).ravel()))


@dataclass
class Checkpoint:
    config: ModelVariantConfig
    state: dict[str, np.ndarray]
    epoch: int = 0
    seed: int = 0
    optimizer: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def build(self) -> SegmentationModel:
        model = SegmentationModel(self.config)
        model.load_state_dict(self.state)
        return model


def save_checkpoint(
    path: str | os.PathLike,
    model: SegmentationModel,
    epoch: int = 0,
    seed: int = 0,
    optimizer_state: dict[str, np.ndarray] | None = None,
) -> None:
    tensors = {
        "meta.config": config_vector(model.cfg),
        "meta.epoch": np.array([epoch], dtype=np.float32),
        "meta.seed": seed_to_tensor(seed),
    }
    tensors.update(model.state_dict())
    data = encode(tensors, optimizer_state)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        tensors, opts = decode(fh.read())
    try:
        cfg = config_from_vector(tensors.pop("meta.config"))
        epoch = int(tensors.pop("meta.epoch")[0])
        seed = seed_from_tensor(tensors.pop("meta.seed"))
    except KeyError as exc:
        raise CheckpointError(f"missing metadata tensor {exc}") from None
    return Checkpoint(cfg, tensors, epoch, seed, opts)
