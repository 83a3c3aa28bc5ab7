"""Linear-size comparison scheme: one ordinary outer signature per block.

Blocks cannot be aggregated, so a cropped signature keeps every covered
block signature. A random 16-byte image id, signed into the header and into
every block message, stops blocks of two signed images from being mixed.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

from cropsig import crypto_core as cc
from cropsig.scheme import (
    DIGEST_LEN,
    BlockGrid,
    CropRect,
    SignatureFormatError,
    VerificationError,
    block_message,
    header_message,
)

HEADER_TAG = b"CROPSIG-V1-BASE-HDR"
BLOCK_TAG = b"CROPSIG-V1-BASE-BLK"
IMAGE_ID_LEN = 16

_S = cc.DEFAULT_SUITE
_HEAD = struct.Struct(f">B{IMAGE_ID_LEN}s{_S.outer_sig_len}sII{DIGEST_LEN}s")
_RECT = struct.Struct(">4I")


def _split(body: bytes) -> tuple[bytes, ...]:
    n = _S.outer_sig_len
    if len(body) % n:
        raise SignatureFormatError("block signature area is not a whole number of signatures")
    return tuple(body[k:k + n] for k in range(0, len(body), n))


def _block_message(image_id: bytes, i: int, j: int, data: bytes) -> bytes:
    return image_id + block_message(i, j, data, tag=BLOCK_TAG)


def _header(width, height, image_id, digest) -> bytes:
    return header_message(width, height, image_id, digest, tag=HEADER_TAG)


@dataclass(frozen=True)
class BaselineFullSignature:
    suite_id: int
    image_id: bytes
    outer_sig: bytes
    width: int
    height: int
    context_digest: bytes
    block_sigs: tuple[bytes, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.block_sigs) != self.width * self.height:
            raise SignatureFormatError("block signature count does not match w*h")

    def block_sig(self, i: int, j: int) -> bytes:
        return self.block_sigs[(i - 1) * self.width + (j - 1)]

    def to_bytes(self) -> bytes:
        head = _HEAD.pack(self.suite_id, self.image_id, self.outer_sig,
                          self.width, self.height, self.context_digest)
        return head + b"".join(self.block_sigs)

    @classmethod
    def from_bytes(cls, data: bytes) -> BaselineFullSignature:
        if len(data) < _HEAD.size:
            raise SignatureFormatError("baseline signature truncated")
        return cls(*_HEAD.unpack_from(data), _split(data[_HEAD.size:]))


@dataclass(frozen=True)
class BaselineCroppedSignature:
    suite_id: int
    image_id: bytes
    outer_sig: bytes
    width: int
    height: int
    context_digest: bytes
    rect: CropRect
    block_sigs: tuple[bytes, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.block_sigs) != self.rect.count:
            raise SignatureFormatError("block signature count does not match the rectangle")

    def to_bytes(self) -> bytes:
        head = _HEAD.pack(self.suite_id, self.image_id, self.outer_sig,
                          self.width, self.height, self.context_digest)
        return head + self.rect.to_bytes() + b"".join(self.block_sigs)

    @classmethod
    def from_bytes(cls, data: bytes) -> BaselineCroppedSignature:
        if len(data) < _HEAD.size + _RECT.size:
            raise SignatureFormatError("baseline cropped signature truncated")
        rect = CropRect(*_RECT.unpack_from(data, _HEAD.size))
        sigs = _split(data[_HEAD.size + _RECT.size:])
        return cls(*_HEAD.unpack_from(data), rect, sigs)


def baseline_sign_full(
    key: cc.OuterKeyPair, grid: BlockGrid, rng: random.Random | None = None
) -> BaselineFullSignature:
    if not grid.is_whole:
        raise ValueError("can only sign a complete grid")
    rng = rng or random.SystemRandom()
    image_id = rng.randbytes(IMAGE_ID_LEN)
    outer = cc.outer_sign(key, _header(grid.width, grid.height, image_id, grid.context_digest))
    sigs = tuple(
        cc.outer_sign(key, _block_message(image_id, i, j, grid.block(i, j)))
        for i, j in grid.cells()
    )
    return BaselineFullSignature(_S.suite_id, image_id, outer, grid.width, grid.height,
                                 grid.context_digest, sigs)


def baseline_crop(full: BaselineFullSignature, rect: CropRect) -> BaselineCroppedSignature:
    rect.check(full.width, full.height)
    sigs = tuple(full.block_sig(i, j) for i, j in rect.cells())
    return BaselineCroppedSignature(full.suite_id, full.image_id, full.outer_sig, full.width,
                                    full.height, full.context_digest, rect, sigs)


def check_baseline(signer_pk: bytes, sig: BaselineCroppedSignature, sub_grid: BlockGrid) -> None:
    if sig.suite_id != _S.suite_id:
        raise VerificationError("malformed", f"unsupported suite 0x{sig.suite_id:02x}")
    if not sig.rect.is_valid_for(sig.width, sig.height):
        raise VerificationError("rect", f"rect {sig.rect} outside {sig.height}x{sig.width} grid")
    if (sub_grid.width, sub_grid.height) != (sig.width, sig.height) or sub_grid.rect != sig.rect:
        raise VerificationError("rect", "supplied blocks do not match the signed rectangle")
    if sub_grid.context_digest != sig.context_digest:
        raise VerificationError("digest-mismatch")
    header = _header(sig.width, sig.height, sig.image_id, sig.context_digest)
    if not cc.outer_verify(signer_pk, sig.outer_sig, header):
        raise VerificationError("outer-signature")
    for (i, j), s in zip(sig.rect.cells(), sig.block_sigs):
        if not cc.outer_verify(signer_pk, s, _block_message(sig.image_id, i, j, sub_grid.block(i, j))):
            raise VerificationError("block-signature", f"block ({i},{j})")


def baseline_verify(signer_pk: bytes, sig: BaselineCroppedSignature, sub_grid: BlockGrid) -> bool:
    try:
        check_baseline(signer_pk, sig, sub_grid)
    except VerificationError:
        return False
    return True


def baseline_verify_full(signer_pk: bytes, full: BaselineFullSignature, grid: BlockGrid) -> bool:
    return baseline_verify(signer_pk, baseline_crop(full, CropRect.whole(full.width, full.height)), grid)
