from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def _stream_key(stream: str) -> int:
    return int.from_bytes(hashlib.sha256(stream.encode("utf-8")).digest()[:8], "little")


@dataclass(frozen=True)
class RngState:
    """A 64-bit seed plus a named sub-stream.

    Each (seed, stream) pair yields an independent, reproducible generator;
    the stream name is hashed into the seed sequence so streams never depend
    on the order in which they are created.
    """

    seed: int
    stream: str = ""

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed & (2**64 - 1), _stream_key(self.stream)]))

    def child(self, name: str) -> "RngState":
        return RngState(self.seed, f"{self.stream}/{name}" if self.stream else name)


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    return RngState(seed, stream).generator()
