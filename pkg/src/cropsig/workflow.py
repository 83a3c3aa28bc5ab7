"""Sign, crop and verify JPEG files end to end."""

from __future__ import annotations

import random
from dataclasses import dataclass

from cropsig import baseline, scheme
from cropsig import crypto_core as cc
from cropsig import payload as pl
from cropsig.jpeg.codec import JpegImage, parse_jpeg
from cropsig.jpeg.container import (
    embed_payload,
    extract_block_grid,
    extract_payload,
    grid_shape,
    lossless_crop,
    payload_chunk_count,
    strip_payload,
)
from cropsig.scheme import CropRect, VerificationError

SCHEMES = {"croppable": pl.SCHEME_CROPPABLE, "baseline": pl.SCHEME_BASELINE}


class WorkflowError(ValueError):
    """The requested operation does not apply to this file."""


@dataclass(frozen=True)
class VerifyReport:
    scheme: str
    kind: str
    granularity: int
    width_px: int
    height_px: int
    grid_width: int
    grid_height: int
    rect: CropRect
    signer: str
    chunks: int
    certificate_len: int

    def lines(self) -> list[str]:
        return [
            "status: verified",
            f"scheme: {self.scheme}",
            f"kind: {self.kind}",
            f"granularity: {self.granularity}",
            f"pixels: {self.width_px}x{self.height_px}",
            f"source grid (w x h cells): {self.grid_width}x{self.grid_height}",
            f"rect (i1,i2,j1,j2): {self.rect}",
            f"signer: {self.signer}",
        ]


def sign_image(
    image: JpegImage,
    key: cc.OuterKeyPair,
    granularity: int = 1,
    scheme_name: str = "croppable",
    certificate: bytes = b"",
    rng: random.Random | None = None,
) -> JpegImage:
    if scheme_name not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme_name!r}")
    if extract_payload(image) is not None:
        raise pl.MultiplePayloadsError("image is already signed")
    grid = extract_block_grid(image, granularity)
    if scheme_name == "croppable":
        sig = scheme.sign_full(key, grid, rng)
    else:
        sig = baseline.baseline_sign_full(key, grid, rng)
    return embed_payload(image, pl.SignaturePayload.wrap(sig, granularity, certificate))


def crop_image(image: JpegImage, rect: CropRect) -> JpegImage:
    """Crop a full-signed image to ``rect`` and swap in the cropped signature."""
    payload = extract_payload(image)
    if payload is None:
        raise WorkflowError("image carries no signature payload")
    if payload.kind != pl.KIND_FULL:
        raise WorkflowError("image is already cropped; only one crop is supported")
    sig = payload.signature()
    g = payload.granularity
    if grid_shape(image, g) != (sig.width, sig.height):
        raise WorkflowError("signature grid does not match the image")
    if payload.scheme == pl.SCHEME_CROPPABLE:
        cropped_sig = scheme.crop_signature(sig, rect)
    else:
        cropped_sig = baseline.baseline_crop(sig, rect)
    cropped = lossless_crop(strip_payload(image), rect, g)
    return embed_payload(cropped, pl.SignaturePayload.wrap(cropped_sig, g, payload.certificate))


def verify_image(image: JpegImage, signer_pk: bytes) -> VerifyReport:
    """Raise VerificationError (or a payload/JPEG error) unless the image verifies."""
    payload = extract_payload(image)
    if payload is None:
        raise VerificationError("no-payload")
    sig = payload.signature()
    g = payload.granularity
    if payload.kind == pl.KIND_FULL:
        rect = CropRect.whole(sig.width, sig.height)
        if grid_shape(image, g) != (sig.width, sig.height):
            raise VerificationError("rect", "image grid differs from the signed grid")
        grid = extract_block_grid(image, g)
    else:
        rect = sig.rect
        if not rect.is_valid_for(sig.width, sig.height):
            raise VerificationError("rect", f"rect {rect} outside the signed grid")
        try:
            grid = extract_block_grid(image, g, (rect.i1, rect.j1), (sig.width, sig.height))
        except ValueError as exc:
            raise VerificationError("rect", str(exc)) from None

    if payload.scheme == pl.SCHEME_CROPPABLE:
        if payload.kind == pl.KIND_FULL:
            scheme.check_full(signer_pk, sig, grid)
        else:
            scheme.check_cropped(signer_pk, sig, grid)
    else:
        if payload.kind == pl.KIND_FULL:
            sig = baseline.baseline_crop(sig, rect)
        baseline.check_baseline(signer_pk, sig, grid)

    return VerifyReport(
        scheme=payload.scheme_name,
        kind=payload.kind_name,
        granularity=g,
        width_px=image.width,
        height_px=image.height,
        grid_width=sig.width,
        grid_height=sig.height,
        rect=rect,
        signer=cc.fingerprint(signer_pk),
        chunks=payload_chunk_count(image),
        certificate_len=len(payload.certificate),
    )


def quarter_rect(width: int, height: int) -> CropRect:
    """Top-left quarter of a cell grid, rounded down to whole cells (at least one)."""
    return CropRect(1, max(1, height // 2), 1, max(1, width // 2))


def sign_jpeg(data: bytes, key: cc.OuterKeyPair, **kwargs) -> bytes:
    return sign_image(parse_jpeg(data), key, **kwargs).to_bytes()


def crop_jpeg(data: bytes, rect: CropRect) -> bytes:
    return crop_image(parse_jpeg(data), rect).to_bytes()


def verify_jpeg(data: bytes, signer_pk: bytes) -> VerifyReport:
    return verify_image(parse_jpeg(data), signer_pk)
