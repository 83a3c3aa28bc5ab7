"""Shared test fixtures that are plain functions (importable from any test module)."""

from __future__ import annotations

import io
import random

import numpy as np
from PIL import Image

from cropsig import crypto_core as cc
from cropsig.scheme import BlockGrid

KEY = cc.OuterKeyPair.from_private_bytes(bytes.fromhex("11" * 32))
OTHER_KEY = cc.OuterKeyPair.from_private_bytes(bytes.fromhex("22" * 32))


def make_jpeg(
    width: int,
    height: int,
    seed: int = 0,
    quality: int = 80,
    subsampling: int = 2,
    mode: str = "RGB",
    **save_args,
) -> bytes:
    """Noisy gradient image encoded by Pillow (subsampling 0=4:4:4, 1=4:2:2, 2=4:2:0)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = (xx * 3 + yy * 2) % 256
    channels = 1 if mode == "L" else 3
    arr = base[..., None] + rng.normal(0, 25, (height, width, channels))
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    img = Image.fromarray(arr[..., 0] if mode == "L" else arr, mode)
    out = io.BytesIO()
    if mode == "L":
        img.save(out, "JPEG", quality=quality, **save_args)
    else:
        img.save(out, "JPEG", quality=quality, subsampling=subsampling, **save_args)
    return out.getvalue()


def random_grid(width: int, height: int, rng: random.Random, max_len: int = 24) -> BlockGrid:
    rows = [[rng.randbytes(rng.randint(0, max_len)) for _ in range(width)] for _ in range(height)]
    return BlockGrid.from_rows(rows, rng.randbytes(32))


def flip_bit(data: bytes, bit: int) -> bytes:
    buf = bytearray(data)
    buf[bit // 8] ^= 1 << (bit % 8)
    return bytes(buf)


def decode_pixels(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    img.load()
    return np.asarray(img)
