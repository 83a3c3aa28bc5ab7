"""Signature payload wire format and its chunking into COM segments.

Payload layout (big-endian)::

    "CRSIGJPG" | version u8 | scheme u8 | kind u8 | suite u8 | g u16
    | body_len u32 | body | cert_len u16 | cert

Each COM segment carries ``"CRSG" | chunk index u8 | chunk total u8 | data``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from cropsig.baseline import BaselineCroppedSignature, BaselineFullSignature
from cropsig.scheme import CroppedSignature, FullSignature, SignatureFormatError

MAGIC = b"CRSIGJPG"
VERSION = 0x01
CHUNK_MAGIC = b"CRSG"

SCHEME_CROPPABLE = 0x01
SCHEME_BASELINE = 0x02
KIND_FULL = 0x01
KIND_CROPPED = 0x02

SCHEME_NAMES = {SCHEME_CROPPABLE: "croppable", SCHEME_BASELINE: "baseline"}
KIND_NAMES = {KIND_FULL: "full", KIND_CROPPED: "cropped"}

MAX_SEGMENT_DATA = 65533
CHUNK_HEADER_LEN = len(CHUNK_MAGIC) + 2
MAX_CHUNK_DATA = MAX_SEGMENT_DATA - CHUNK_HEADER_LEN
MAX_CHUNKS = 255

_HEAD = struct.Struct(">8sBBBBHI")
HEADER_LEN = _HEAD.size + 2  # fixed bytes around body and cert

_BODY_TYPES = {
    (SCHEME_CROPPABLE, KIND_FULL): FullSignature,
    (SCHEME_CROPPABLE, KIND_CROPPED): CroppedSignature,
    (SCHEME_BASELINE, KIND_FULL): BaselineFullSignature,
    (SCHEME_BASELINE, KIND_CROPPED): BaselineCroppedSignature,
}


class PayloadFormatError(ValueError):
    pass


class MissingChunkError(PayloadFormatError):
    pass


class MultiplePayloadsError(PayloadFormatError):
    pass


@dataclass(frozen=True)
class SignaturePayload:
    scheme: int
    kind: int
    suite_id: int
    granularity: int
    body: bytes
    certificate: bytes = b""

    def __post_init__(self):
        if (self.scheme, self.kind) not in _BODY_TYPES:
            raise PayloadFormatError(f"unknown scheme/kind 0x{self.scheme:02x}/0x{self.kind:02x}")
        if not 1 <= self.granularity <= 0xFFFF:
            raise PayloadFormatError("granularity out of range")
        if len(self.certificate) > 0xFFFF:
            raise PayloadFormatError("certificate longer than 65535 bytes")

    @classmethod
    def wrap(cls, signature, granularity: int, certificate: bytes = b"") -> SignaturePayload:
        for (scheme, kind), typ in _BODY_TYPES.items():
            if isinstance(signature, typ):
                return cls(scheme, kind, signature.suite_id, granularity, signature.to_bytes(), certificate)
        raise TypeError(f"not a signature: {type(signature).__name__}")

    @property
    def scheme_name(self) -> str:
        return SCHEME_NAMES[self.scheme]

    @property
    def kind_name(self) -> str:
        return KIND_NAMES[self.kind]

    def signature(self):
        """Decode the body into the matching signature object."""
        try:
            sig = _BODY_TYPES[(self.scheme, self.kind)].from_bytes(self.body)
        except SignatureFormatError as exc:
            raise PayloadFormatError(f"bad signature body: {exc}") from None
        if sig.suite_id != self.suite_id:
            raise PayloadFormatError("suite id in body differs from payload header")
        return sig

    def to_bytes(self) -> bytes:
        return (
            _HEAD.pack(MAGIC, VERSION, self.scheme, self.kind, self.suite_id,
                       self.granularity, len(self.body))
            + self.body
            + struct.pack(">H", len(self.certificate))
            + self.certificate
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> SignaturePayload:
        if len(data) < HEADER_LEN:
            raise PayloadFormatError("payload truncated")
        magic, version, scheme, kind, suite, g, body_len = _HEAD.unpack_from(data)
        if magic != MAGIC:
            raise PayloadFormatError("bad payload magic")
        if version != VERSION:
            raise PayloadFormatError(f"unsupported payload version {version}")
        end = _HEAD.size + body_len
        if end + 2 > len(data):
            raise PayloadFormatError("payload body truncated")
        body = data[_HEAD.size:end]
        (cert_len,) = struct.unpack_from(">H", data, end)
        cert = data[end + 2:]
        if len(cert) != cert_len:
            raise PayloadFormatError("certificate length mismatch")
        return cls(scheme, kind, suite, g, body, cert)


def to_chunks(data: bytes) -> list[bytes]:
    """Split serialized payload bytes into COM segment payloads."""
    pieces = [data[k:k + MAX_CHUNK_DATA] for k in range(0, len(data), MAX_CHUNK_DATA)] or [b""]
    if len(pieces) > MAX_CHUNKS:
        raise PayloadFormatError(f"payload needs {len(pieces)} chunks, limit is {MAX_CHUNKS}")
    total = len(pieces)
    return [CHUNK_MAGIC + bytes((k, total)) + piece for k, piece in enumerate(pieces)]


def is_chunk(segment_payload: bytes) -> bool:
    return segment_payload[:len(CHUNK_MAGIC)] == CHUNK_MAGIC and len(segment_payload) >= CHUNK_HEADER_LEN


def from_chunks(chunks: list[bytes]) -> bytes:
    """Reassemble chunk payloads in any order."""
    if not chunks:
        raise MissingChunkError("no payload chunks")
    totals = {c[4 + 1] for c in chunks}
    if len(totals) != 1:
        raise MultiplePayloadsError("chunks disagree on the chunk count")
    (total,) = totals
    parts: dict[int, bytes] = {}
    for c in chunks:
        index = c[4]
        if index in parts:
            raise MultiplePayloadsError(f"chunk {index} appears more than once")
        if index >= total:
            raise PayloadFormatError(f"chunk index {index} >= total {total}")
        parts[index] = c[CHUNK_HEADER_LEN:]
    missing = sorted(set(range(total)) - parts.keys())
    if missing:
        raise MissingChunkError(f"missing payload chunks {missing} of {total}")
    return b"".join(parts[k] for k in range(total))
