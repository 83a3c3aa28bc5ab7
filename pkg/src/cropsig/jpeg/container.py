"""JPEG as a signable block grid: cell extraction, lossless crop, payload I/O.

A signature cell is ``g x g`` MCUs. Its block data is::

    visible_width u16 | visible_height u16 | coefficients

where the coefficients are those of every MCU in the cell (raster order),
components in frame order, each 8x8 block as 64 zigzag-ordered signed
16-bit big-endian values with absolute DC. The visible extent binds the
frame dimensions at ragged right and bottom edges; everything else that
gives the coefficients their meaning goes into the context digest.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import replace
from math import ceil

import numpy as np

from cropsig import payload as pl
from cropsig.jpeg.codec import APP_MARKERS, COM, SOF_BASELINE, JpegImage, Segment, rebuild
from cropsig.scheme import BlockGrid, CropRect

DIGEST_TAG = b"CROPSIG-V1-JPEG-CONTEXT"


def grid_shape(image: JpegImage, g: int) -> tuple[int, int]:
    """(width, height) of the signature-cell grid."""
    _check_g(g)
    return ceil(image.frame.mcu_cols / g), ceil(image.frame.mcu_rows / g)


def _check_g(g: int) -> None:
    if g < 1:
        raise ValueError(f"granularity must be >= 1, got {g}")


def context_digest(image: JpegImage, g: int) -> bytes:
    """Digest of the crop-invariant decoding context and the granularity."""
    frame = image.frame
    h = hashlib.sha256()
    h.update(DIGEST_TAG)
    mcu_w, mcu_h = frame.mcu_size
    h.update(struct.pack(">BBHHHB", frame.marker, frame.precision, g, mcu_w, mcu_h, len(frame.components)))
    for c in frame.components:
        h.update(struct.pack(">BBBB", c.cid, c.h, c.v, c.tq))
        h.update(struct.pack(">64H", *image.component_qtable(c)))
    return h.digest()


def mcu_matrix(image: JpegImage) -> np.ndarray:
    """Coefficients regrouped as ``(mcu_rows, mcu_cols, values_per_mcu)``, big-endian int16."""
    frame = image.frame
    rows, cols = frame.mcu_rows, frame.mcu_cols
    parts = []
    for c, arr in zip(frame.components, image.coefficients):
        bh, bv = frame.blocks_per_mcu(c)
        a = arr[:rows * bv, :cols * bh].reshape(rows, bv, cols, bh, 64)
        parts.append(a.transpose(0, 2, 1, 3, 4).reshape(rows, cols, bv * bh * 64))
    return np.concatenate(parts, axis=2).astype(">i2")


def _cell_span(index: int, g: int, count: int) -> tuple[int, int]:
    """MCU range [start, stop) covered by 1-based cell ``index``."""
    return (index - 1) * g, min(index * g, count)


def extract_block_grid(
    image: JpegImage,
    g: int,
    origin: tuple[int, int] = (1, 1),
    full_shape: tuple[int, int] | None = None,
) -> BlockGrid:
    """Build the signable grid of ``image`` at granularity ``g``.

    For a cropped image pass the crop's top-left cell as ``origin`` (i1, j1)
    and the source grid's (width, height) as ``full_shape`` so the cells
    keep their original indices.
    """
    w, h = grid_shape(image, g)
    frame = image.frame
    mcus = mcu_matrix(image)
    mcu_w, mcu_h = frame.mcu_size
    i0, j0 = origin
    full_w, full_h = full_shape or (w, h)
    rect = CropRect(i0, i0 + h - 1, j0, j0 + w - 1)
    if not rect.is_valid_for(full_w, full_h):
        raise ValueError(f"image of {h}x{w} cells does not fit at {origin} in a {full_h}x{full_w} grid")
    blocks = {}
    for i in range(1, h + 1):
        r0, r1 = _cell_span(i, g, frame.mcu_rows)
        vis_h = min(r1 * mcu_h, frame.height) - r0 * mcu_h
        for j in range(1, w + 1):
            c0, c1 = _cell_span(j, g, frame.mcu_cols)
            vis_w = min(c1 * mcu_w, frame.width) - c0 * mcu_w
            blocks[(i + i0 - 1, j + j0 - 1)] = struct.pack(">HH", vis_w, vis_h) + mcus[r0:r1, c0:c1].tobytes()
    return BlockGrid(full_w, full_h, context_digest(image, g), blocks, rect)


def lossless_crop(image: JpegImage, rect: CropRect, g: int) -> JpegImage:
    """Keep only the MCUs of the cells in ``rect``; coefficients are untouched."""
    w, h = grid_shape(image, g)
    rect.check(w, h)
    frame = image.frame
    mcu_w, mcu_h = frame.mcu_size
    r0, _ = _cell_span(rect.i1, g, frame.mcu_rows)
    _, r1 = _cell_span(rect.i2, g, frame.mcu_rows)
    c0, _ = _cell_span(rect.j1, g, frame.mcu_cols)
    _, c1 = _cell_span(rect.j2, g, frame.mcu_cols)
    new_w = min(c1 * mcu_w, frame.width) - c0 * mcu_w
    new_h = min(r1 * mcu_h, frame.height) - r0 * mcu_h
    new_frame = replace(frame, width=new_w, height=new_h)
    coeffs = []
    for c, arr in zip(frame.components, image.coefficients):
        bh, bv = frame.blocks_per_mcu(c)
        coeffs.append(arr[r0 * bv:r1 * bv, c0 * bh:c1 * bh])
    return rebuild(image, new_frame, coeffs)


# ---------------------------------------------------------------------------
# Payload embedding
# ---------------------------------------------------------------------------


def _chunk_segments(image: JpegImage):
    return [s for s in image.segments if s.marker == COM and pl.is_chunk(s.payload)]


def payload_chunk_count(image: JpegImage) -> int:
    return len(_chunk_segments(image))


def embed_payload(image: JpegImage, payload: pl.SignaturePayload) -> JpegImage:
    """Insert the payload as COM chunks right after the last APPn before the frame."""
    if _chunk_segments(image):
        raise pl.MultiplePayloadsError("image already carries a signature payload")
    segments = list(image.segments)
    insert_at = 0
    for k, seg in enumerate(segments):
        if seg.marker in SOF_BASELINE:
            break
        if seg.marker in APP_MARKERS:
            insert_at = k + 1
    chunks = [Segment(COM, c) for c in pl.to_chunks(payload.to_bytes())]
    segments[insert_at:insert_at] = chunks
    return image.with_segments(segments)


def extract_payload(image: JpegImage) -> pl.SignaturePayload | None:
    chunks = _chunk_segments(image)
    if not chunks:
        return None
    return pl.SignaturePayload.from_bytes(pl.from_chunks([s.payload for s in chunks]))


def strip_payload(image: JpegImage) -> JpegImage:
    return image.with_segments(s for s in image.segments if not (s.marker == COM and pl.is_chunk(s.payload)))
