"""Croppable signatures over an abstract grid of independently encoded blocks.

The signer draws a fresh BLS key ``k`` per image, signs every cell with it,
and endorses the matching G2 public key (plus the grid shape and
interpretation context) with its long-term outer key. Anyone holding the full signature can crop it
to a rectangle by adding up the covered block signatures; the result is a
single G1 point, so the cropped signature has constant size.

Indices are 1-based, ``i`` is the row and ``j`` the column.
"""

from __future__ import annotations

import random
import struct
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

from cropsig import crypto_core as cc

HEADER_TAG = b"CROPSIG-V1-HDR"
BLOCK_TAG = b"CROPSIG-V1-BLK"
H2C_DST = b"CROPSIG-V1-BLS12381G1_XMD:SHA-256_SSWU_RO_"

DIGEST_LEN = 32


class SignatureFormatError(ValueError):
    """Serialized signature bytes do not parse."""


class VerificationError(Exception):
    """Verification failed; ``reason`` is a short machine-readable code.

    Codes: ``malformed``, ``rect``, ``digest-mismatch``, ``outer-signature``,
    ``aggregate``, ``block-signature``.
    """

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class CropRect:
    i1: int
    i2: int
    j1: int
    j2: int

    @classmethod
    def whole(cls, width: int, height: int) -> CropRect:
        return cls(1, height, 1, width)

    @classmethod
    def parse(cls, text: str) -> CropRect:
        """Parse ``"i1,i2,j1,j2"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"rect needs four comma-separated indices, got {text!r}")
        return cls(*(int(p) for p in parts))

    def is_valid_for(self, width: int, height: int) -> bool:
        return 1 <= self.i1 <= self.i2 <= height and 1 <= self.j1 <= self.j2 <= width

    def check(self, width: int, height: int) -> None:
        if not self.is_valid_for(width, height):
            raise ValueError(f"rect {self} outside a {height}x{width} grid")

    @property
    def rows(self) -> int:
        return self.i2 - self.i1 + 1

    @property
    def cols(self) -> int:
        return self.j2 - self.j1 + 1

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def cells(self) -> Iterator[tuple[int, int]]:
        for i in range(self.i1, self.i2 + 1):
            for j in range(self.j1, self.j2 + 1):
                yield i, j

    def to_bytes(self) -> bytes:
        return struct.pack(">4I", self.i1, self.i2, self.j1, self.j2)

    def __str__(self):
        return f"{self.i1},{self.i2},{self.j1},{self.j2}"


@dataclass(frozen=True)
class BlockGrid:
    """A ``height`` x ``width`` matrix of block data, possibly only partly present.

    ``rect`` names the cells actually held (the whole grid unless this is
    the view a verifier gets from a cropped image); cells keep their
    original indices either way.
    """

    width: int
    height: int
    context_digest: bytes
    blocks: Mapping[tuple[int, int], bytes] = field(repr=False)
    rect: CropRect | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be non-empty")
        if len(self.context_digest) != DIGEST_LEN:
            raise ValueError("context digest must be 32 bytes")
        if self.rect is None:
            object.__setattr__(self, "rect", CropRect.whole(self.width, self.height))
        self.rect.check(self.width, self.height)
        missing = [c for c in self.rect.cells() if c not in self.blocks]
        if missing:
            raise ValueError(f"grid lacks block data for cells {missing[:4]}")

    @classmethod
    def from_rows(cls, rows, context_digest: bytes) -> BlockGrid:
        rows = [list(r) for r in rows]
        width = len(rows[0]) if rows else 0
        if any(len(r) != width for r in rows):
            raise ValueError("ragged rows")
        blocks = {(i + 1, j + 1): bytes(x) for i, r in enumerate(rows) for j, x in enumerate(r)}
        return cls(width, len(rows), context_digest, blocks)

    def block(self, i: int, j: int) -> bytes:
        return self.blocks[(i, j)]

    def cells(self) -> Iterator[tuple[int, int]]:
        return self.rect.cells()

    def view(self, rect: CropRect) -> BlockGrid:
        rect.check(self.width, self.height)
        blocks = {c: self.blocks[c] for c in rect.cells()}
        return BlockGrid(self.width, self.height, self.context_digest, blocks, rect)

    @property
    def is_whole(self) -> bool:
        return self.rect == CropRect.whole(self.width, self.height)


# ---------------------------------------------------------------------------
# Message framing
# ---------------------------------------------------------------------------


def header_message(
    width: int,
    height: int,
    key_material: bytes,
    context_digest: bytes,
    suite_id: int = cc.DEFAULT_SUITE.suite_id,
    tag: bytes = HEADER_TAG,
) -> bytes:
    """What the outer key signs: tag, suite, w, h, ephemeral pk, context digest."""
    return (
        struct.pack(">B", len(tag)) + tag
        + struct.pack(">BII", suite_id, width, height)
        + key_material
        + context_digest
    )


def block_message(i: int, j: int, block_bytes: bytes, tag: bytes = BLOCK_TAG) -> bytes:
    return tag + struct.pack(">IIQ", i, j, len(block_bytes)) + block_bytes


def hash_block(i: int, j: int, block_bytes: bytes) -> cc.G1Point:
    return cc.hash_to_g1(H2C_DST, block_message(i, j, block_bytes))


# ---------------------------------------------------------------------------
# Signatures
# ---------------------------------------------------------------------------

_S = cc.DEFAULT_SUITE
_HEAD = struct.Struct(f">B{_S.g2_len}s{_S.outer_sig_len}sII{DIGEST_LEN}s")


@dataclass(frozen=True)
class FullSignature:
    suite_id: int
    ephemeral_pk: bytes
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
        head = _HEAD.pack(
            self.suite_id, self.ephemeral_pk, self.outer_sig,
            self.width, self.height, self.context_digest,
        )
        return head + b"".join(self.block_sigs)

    @classmethod
    def from_bytes(cls, data: bytes) -> FullSignature:
        if len(data) < _HEAD.size:
            raise SignatureFormatError("full signature truncated")
        suite_id, pk, sig, w, h, digest = _HEAD.unpack_from(data)
        n = _S.g1_len
        body = data[_HEAD.size:]
        if w * h * n != len(body):
            raise SignatureFormatError(f"expected {w * h} block signatures of {n} bytes")
        sigs = tuple(body[k:k + n] for k in range(0, len(body), n))
        return cls(suite_id, pk, sig, w, h, digest, sigs)


_RECT = struct.Struct(">4I")


@dataclass(frozen=True)
class CroppedSignature:
    suite_id: int
    ephemeral_pk: bytes
    outer_sig: bytes
    width: int
    height: int
    context_digest: bytes
    rect: CropRect
    aggregate: bytes

    SIZE = _HEAD.size + _RECT.size + _S.g1_len

    def to_bytes(self) -> bytes:
        head = _HEAD.pack(
            self.suite_id, self.ephemeral_pk, self.outer_sig,
            self.width, self.height, self.context_digest,
        )
        return head + self.rect.to_bytes() + self.aggregate

    @classmethod
    def from_bytes(cls, data: bytes) -> CroppedSignature:
        if len(data) != cls.SIZE:
            raise SignatureFormatError(f"cropped signature must be {cls.SIZE} bytes")
        suite_id, pk, sig, w, h, digest = _HEAD.unpack_from(data)
        rect = CropRect(*_RECT.unpack_from(data, _HEAD.size))
        return cls(suite_id, pk, sig, w, h, digest, rect, data[_HEAD.size + _RECT.size:])


def sign_full(key: cc.OuterKeyPair, grid: BlockGrid, rng: random.Random | None = None) -> FullSignature:
    if not grid.is_whole:
        raise ValueError("can only sign a complete grid")
    k = cc.scalar_random(rng)
    pk = cc.encode_g2(cc.g2_scalar_mul(k, _S.g2_generator))
    outer = cc.outer_sign(key, header_message(grid.width, grid.height, pk, grid.context_digest))
    sigs = tuple(
        cc.encode_g1(cc.g1_scalar_mul(k, hash_block(i, j, grid.block(i, j))))
        for i, j in grid.cells()
    )
    return FullSignature(_S.suite_id, pk, outer, grid.width, grid.height, grid.context_digest, sigs)


def crop_signature(full: FullSignature, rect: CropRect) -> CroppedSignature:
    """Aggregate the block signatures inside ``rect``; needs no secret."""
    rect.check(full.width, full.height)
    total = cc.G1Point.identity()
    for i, j in rect.cells():
        total = cc.g1_add(total, cc.decode_g1(full.block_sig(i, j)))
    return CroppedSignature(
        full.suite_id, full.ephemeral_pk, full.outer_sig,
        full.width, full.height, full.context_digest, rect, cc.encode_g1(total),
    )


def _check_envelope(signer_pk, suite_id, pk_bytes, outer_sig, width, height, digest, rect, grid):
    if suite_id != _S.suite_id:
        raise VerificationError("malformed", f"unsupported suite 0x{suite_id:02x}")
    if not rect.is_valid_for(width, height):
        raise VerificationError("rect", f"rect {rect} outside {height}x{width} grid")
    if (grid.width, grid.height) != (width, height) or grid.rect != rect:
        raise VerificationError("rect", "supplied blocks do not match the signed rectangle")
    if grid.context_digest != digest:
        raise VerificationError("digest-mismatch")
    if not cc.outer_verify(signer_pk, outer_sig, header_message(width, height, pk_bytes, digest)):
        raise VerificationError("outer-signature")


def check_cropped(signer_pk: bytes, sig: CroppedSignature, sub_grid: BlockGrid) -> None:
    """Raise VerificationError unless ``sig`` authenticates ``sub_grid``."""
    _check_envelope(
        signer_pk, sig.suite_id, sig.ephemeral_pk, sig.outer_sig,
        sig.width, sig.height, sig.context_digest, sig.rect, sub_grid,
    )
    try:
        pk = cc.decode_g2(sig.ephemeral_pk)
        aggregate = cc.decode_g1(sig.aggregate)
    except ValueError as exc:
        raise VerificationError("malformed", str(exc)) from None
    if pk == cc.G2Point.identity():
        raise VerificationError("malformed", "identity ephemeral key")
    hashed = cc.G1Point.identity()
    for i, j in sig.rect.cells():
        hashed = cc.g1_add(hashed, hash_block(i, j, sub_grid.block(i, j)))
    # one pairing per side: prod_ij e(H_ij, pk) == e(sum_ij H_ij, pk)
    if cc.pairing(aggregate, _S.g2_generator) != cc.pairing(hashed, pk):
        raise VerificationError("aggregate")


def verify_cropped(signer_pk: bytes, sig: CroppedSignature, sub_grid: BlockGrid) -> bool:
    try:
        check_cropped(signer_pk, sig, sub_grid)
    except VerificationError:
        return False
    return True


def check_full(signer_pk: bytes, full: FullSignature, grid: BlockGrid) -> None:
    rect = CropRect.whole(full.width, full.height)
    try:
        cropped = crop_signature(full, rect)
    except ValueError as exc:
        raise VerificationError("malformed", str(exc)) from None
    check_cropped(signer_pk, cropped, grid)


def verify_full(signer_pk: bytes, full: FullSignature, grid: BlockGrid) -> bool:
    try:
        check_full(signer_pk, full, grid)
    except VerificationError:
        return False
    return True


def locate_bad_blocks(full: FullSignature, grid: BlockGrid) -> list[tuple[int, int]]:
    """Check every block signature on its own (two pairings each) and list the failures.

    Assumes the envelope (outer signature, digest) was already checked.
    """
    pk = cc.decode_g2(full.ephemeral_pk)
    bad = []
    for i, j in grid.cells():
        try:
            s = cc.decode_g1(full.block_sig(i, j))
        except ValueError:
            bad.append((i, j))
            continue
        if cc.pairing(s, _S.g2_generator) != cc.pairing(hash_block(i, j, grid.block(i, j)), pk):
            bad.append((i, j))
    return bad
