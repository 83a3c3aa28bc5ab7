"""Baseline JPEG segment model and entropy codec.

A parsed :class:`JpegImage` keeps every segment verbatim (so an untouched
image serializes back to the identical bytes) alongside the quantized DCT
coefficients of every block, with DC prediction undone.

Coefficient arrays have shape ``(block_rows, block_cols, 64)`` per
component, in zigzag order, as stored in the scan.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field, replace
from math import ceil

import numpy as np

from cropsig.jpeg.huffman import HuffmanTable, build_dht, optimal_table, parse_dht

SOI, EOI, SOS, DHT, DQT, DRI, COM = 0xD8, 0xD9, 0xDA, 0xC4, 0xDB, 0xDD, 0xFE
SOF_BASELINE = (0xC0, 0xC1)
SOF_OTHER = (0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF)
APP_MARKERS = range(0xE0, 0xF0)
_STANDALONE = {0x01, SOI, EOI, *range(0xD0, 0xD8)}


class JpegError(ValueError):
    """Input is not a JPEG this module can handle."""


class JpegParseError(JpegError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedJpegError(JpegError):
    """Well-formed JPEG using a coding process other than baseline Huffman."""


@dataclass(frozen=True)
class Segment:
    marker: int
    payload: bytes = b""
    scan_data: bytes = b""  # entropy-coded data following an SOS header
    fill: int = 0  # extra 0xFF fill bytes preceding the marker

    def to_bytes(self) -> bytes:
        out = b"\xff" * self.fill + bytes((0xFF, self.marker))
        if self.marker in _STANDALONE:
            return out
        return out + struct.pack(">H", len(self.payload) + 2) + self.payload + self.scan_data


@dataclass(frozen=True)
class Component:
    cid: int
    h: int
    v: int
    tq: int


@dataclass(frozen=True)
class Frame:
    marker: int
    precision: int
    height: int
    width: int
    components: tuple[Component, ...]

    @property
    def hmax(self) -> int:
        return max(c.h for c in self.components)

    @property
    def vmax(self) -> int:
        return max(c.v for c in self.components)

    @property
    def interleaved(self) -> bool:
        return len(self.components) > 1

    @property
    def mcu_size(self) -> tuple[int, int]:
        """MCU (width, height) in pixels."""
        if self.interleaved:
            return 8 * self.hmax, 8 * self.vmax
        c = self.components[0]
        return 8 * self.hmax // c.h, 8 * self.vmax // c.v

    @property
    def mcu_cols(self) -> int:
        return ceil(self.width / self.mcu_size[0])

    @property
    def mcu_rows(self) -> int:
        return ceil(self.height / self.mcu_size[1])

    def blocks_per_mcu(self, c: Component) -> tuple[int, int]:
        """(horizontal, vertical) count of blocks of ``c`` inside one MCU."""
        return (c.h, c.v) if self.interleaved else (1, 1)

    def to_payload(self) -> bytes:
        out = struct.pack(">BHHB", self.precision, self.height, self.width, len(self.components))
        for c in self.components:
            out += struct.pack(">BBB", c.cid, c.h << 4 | c.v, c.tq)
        return out


@dataclass(frozen=True)
class JpegImage:
    segments: tuple[Segment, ...]
    frame: Frame
    qtables: dict[int, tuple[int, ...]] = field(repr=False)  # zigzag order
    coefficients: tuple[np.ndarray, ...] = field(repr=False)
    trailer: bytes = b""

    def to_bytes(self) -> bytes:
        parts = [b"\xff\xd8"]
        parts.extend(seg.to_bytes() for seg in self.segments)
        parts.append(self.trailer)
        return b"".join(parts)

    @property
    def width(self) -> int:
        return self.frame.width

    @property
    def height(self) -> int:
        return self.frame.height

    def component_qtable(self, c: Component) -> tuple[int, ...]:
        return self.qtables[c.tq]

    def with_segments(self, segments) -> JpegImage:
        return replace(self, segments=tuple(segments))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _parse_frame(marker: int, payload: bytes, offset: int) -> Frame:
    if len(payload) < 6:
        raise JpegParseError("truncated frame header", offset)
    precision, height, width, n = struct.unpack_from(">BHHB", payload)
    if len(payload) != 6 + 3 * n or n == 0:
        raise JpegParseError("bad frame header length", offset)
    comps = []
    for k in range(n):
        cid, hv, tq = payload[6 + 3 * k:9 + 3 * k]
        h, v = hv >> 4, hv & 15
        if not (1 <= h <= 4 and 1 <= v <= 4):
            raise JpegParseError("bad sampling factors", offset)
        comps.append(Component(cid, h, v, tq))
    if precision != 8:
        raise UnsupportedJpegError(f"{precision}-bit samples are not supported")
    if height == 0:
        raise UnsupportedJpegError("DNL-defined image height is not supported")
    if width == 0:
        raise JpegParseError("zero image width", offset)
    return Frame(marker, precision, height, width, tuple(comps))


def _parse_dqt(payload: bytes, tables: dict, offset: int) -> None:
    pos = 0
    while pos < len(payload):
        pq, tq = payload[pos] >> 4, payload[pos] & 15
        size = 128 if pq else 64
        if pos + 1 + size > len(payload):
            raise JpegParseError("truncated DQT segment", offset)
        raw = payload[pos + 1:pos + 1 + size]
        tables[tq] = struct.unpack(">64H", raw) if pq else tuple(raw)
        pos += 1 + size


def _scan_end(data: bytes, start: int) -> int:
    """Index of the first marker (other than RSTn / stuffing) after ``start``."""
    pos = start
    n = len(data)
    while True:
        pos = data.find(b"\xff", pos)
        if pos < 0 or pos + 1 >= n:
            raise JpegParseError("entropy-coded data runs past end of file", n)
        nxt = data[pos + 1]
        if nxt == 0x00 or 0xD0 <= nxt <= 0xD7:
            pos += 2
        else:
            # a real marker, possibly preceded by 0xFF fill bytes
            return pos


def parse_jpeg(data: bytes) -> JpegImage:
    """Parse a baseline sequential Huffman JPEG and decode its coefficients."""
    data = bytes(data)
    if data[:2] != b"\xff\xd8":
        raise JpegParseError("missing SOI marker", 0)
    pos = 2
    segments: list[Segment] = []
    qtables: dict[int, tuple[int, ...]] = {}
    htables: dict[tuple[int, int], HuffmanTable] = {}
    frame: Frame | None = None
    restart_interval = 0
    scan: tuple | None = None
    n = len(data)
    while True:
        if pos >= n:
            raise JpegParseError("missing EOI marker", pos)
        if data[pos] != 0xFF:
            raise JpegParseError(f"expected marker, found 0x{data[pos]:02x}", pos)
        seg_start = pos
        fill = 0
        while pos + 1 < n and data[pos + 1] == 0xFF:
            pos += 1
            fill += 1
        if pos + 1 >= n:
            raise JpegParseError("truncated marker", pos)
        marker = data[pos + 1]
        pos += 2
        if marker == EOI:
            segments.append(Segment(EOI, fill=fill))
            break
        if marker in _STANDALONE:
            segments.append(Segment(marker, fill=fill))
            continue
        if pos + 2 > n:
            raise JpegParseError("truncated segment length", pos)
        (length,) = struct.unpack_from(">H", data, pos)
        if length < 2 or pos + length > n:
            raise JpegParseError(f"segment 0x{marker:02x} overruns file", seg_start)
        payload = data[pos + 2:pos + length]
        pos += length
        scan_data = b""

        if marker in SOF_BASELINE:
            if frame is not None:
                raise UnsupportedJpegError("multiple frames")
            frame = _parse_frame(marker, payload, seg_start)
        elif marker in SOF_OTHER:
            raise UnsupportedJpegError(f"coding process SOF{marker - 0xC0} (only baseline Huffman is supported)")
        elif marker == 0xCC:
            raise UnsupportedJpegError("arithmetic coding is not supported")
        elif marker == DQT:
            _parse_dqt(payload, qtables, seg_start)
        elif marker == DHT:
            try:
                for tc, th, table in parse_dht(payload):
                    htables[(tc, th)] = table
            except ValueError as exc:
                raise JpegParseError(str(exc), seg_start) from None
        elif marker == DRI:
            if len(payload) != 2:
                raise JpegParseError("bad DRI segment", seg_start)
            (restart_interval,) = struct.unpack(">H", payload)
        elif marker == 0xDC:
            raise UnsupportedJpegError("DNL marker is not supported")
        elif marker == SOS:
            if frame is None:
                raise JpegParseError("scan before frame header", seg_start)
            if scan is not None:
                raise UnsupportedJpegError("multi-scan JPEG is not supported")
            end = _scan_end(data, pos)
            scan_data = data[pos:end]
            scan = (payload, scan_data, pos, dict(htables), restart_interval)
            pos = end
        segments.append(Segment(marker, payload, scan_data, fill))

    if frame is None or scan is None:
        raise JpegParseError("no frame or scan found", pos)
    coeffs = _decode_scan(frame, qtables, *scan)
    for c in frame.components:
        if c.tq not in qtables:
            raise JpegParseError(f"missing quantization table {c.tq}", 0)
    return JpegImage(tuple(segments), frame, qtables, coeffs, data[pos:])


def _component_shape(frame: Frame, c: Component) -> tuple[int, int]:
    """(block_rows, block_cols) of a component's coefficient array."""
    if frame.interleaved:
        return frame.mcu_rows * c.v, frame.mcu_cols * c.h
    cw = ceil(frame.width * c.h / frame.hmax)
    ch = ceil(frame.height * c.v / frame.vmax)
    return ceil(ch / 8), ceil(cw / 8)


def _parse_scan_header(frame: Frame, payload: bytes, offset: int):
    ns = payload[0] if payload else 0
    if ns == 0 or len(payload) != 4 + 2 * ns:
        raise JpegParseError("bad scan header", offset)
    if ns != len(frame.components):
        raise UnsupportedJpegError("multi-scan JPEG is not supported")
    selectors = []
    by_id = {c.cid: k for k, c in enumerate(frame.components)}
    for k in range(ns):
        cs, t = payload[1 + 2 * k], payload[2 + 2 * k]
        if cs not in by_id:
            raise JpegParseError(f"scan references unknown component {cs}", offset)
        selectors.append((by_id[cs], t >> 4, t & 15))
    ss, se, a = payload[1 + 2 * ns:4 + 2 * ns]
    if (ss, se, a) != (0, 63, 0):
        raise UnsupportedJpegError("spectral selection / successive approximation in a baseline scan")
    order = [k for k, _, _ in selectors]
    if order != sorted(order):
        raise UnsupportedJpegError("scan component order differs from frame order")
    return selectors


def _decode_scan(frame, qtables, header, data, data_offset, htables, restart_interval):
    selectors = _parse_scan_header(frame, header, data_offset)
    shapes = [_component_shape(frame, c) for c in frame.components]
    blocks = [[None] * (r * c) for r, c in shapes]
    try:
        dc_luts = [htables[(0, td)].lookup for _, td, _ in selectors]
        ac_luts = [htables[(1, ta)].lookup for _, _, ta in selectors]
    except KeyError as exc:
        raise JpegParseError(f"scan uses undefined Huffman table {exc.args[0]}", data_offset) from None

    # (component index, block row, block col) for every block of every MCU
    if frame.interleaved:
        total_mcus = frame.mcu_rows * frame.mcu_cols
        layout = []
        for k, c in enumerate(frame.components):
            for v in range(c.v):
                for h in range(c.h):
                    layout.append((k, v, h, c.v, c.h))

        def mcu_blocks(m):
            my, mx = divmod(m, frame.mcu_cols)
            cols = frame.mcu_cols
            return [(k, (my * cv + v) * cols * ch + mx * ch + h) for k, v, h, cv, ch in layout]
    else:
        rows, cols = shapes[0]
        total_mcus = rows * cols

        def mcu_blocks(m):
            return [(0, m)]

    intervals = re.split(rb"\xff[\xd0-\xd7]", data)
    per_interval = restart_interval or total_mcus
    expected = ceil(total_mcus / per_interval)
    if len(intervals) < expected:
        raise JpegParseError("scan has fewer restart intervals than the image needs", data_offset + len(data))

    m = 0
    for chunk in intervals[:expected]:
        stream = chunk.replace(b"\xff\x00", b"\xff") + b"\x00" * 8
        limit = len(stream) - 8
        count = min(per_interval, total_mcus - m)
        _decode_interval(stream, limit, [mcu_blocks(mm) for mm in range(m, m + count)],
                         blocks, dc_luts, ac_luts, data_offset)
        m += count

    out = []
    for (r, c), blist in zip(shapes, blocks):
        arr = np.array(blist, dtype=np.int16).reshape(r, c, 64)
        arr.setflags(write=False)
        out.append(arr)
    return tuple(out)


def _decode_interval(stream, limit, mcus, blocks, dc_luts, ac_luts, data_offset):
    buf = 0
    nbits = 0
    pos = 0
    pred = [0] * len(blocks)
    for mcu in mcus:
        for k, idx in mcu:
            blk = [0] * 64
            # DC
            if nbits < 32:
                buf = ((buf & ((1 << nbits) - 1)) << 32) | int.from_bytes(stream[pos:pos + 4], "big")
                pos += 4
                nbits += 32
            e = dc_luts[k][(buf >> (nbits - 16)) & 0xFFFF]
            if not e:
                raise JpegParseError("invalid Huffman code", data_offset + pos)
            nbits -= e >> 8
            s = e & 0xFF
            if s:
                if s > 16:
                    raise JpegParseError("bad DC magnitude category", data_offset + pos)
                val = (buf >> (nbits - s)) & ((1 << s) - 1)
                nbits -= s
                if val < (1 << (s - 1)):
                    val -= (1 << s) - 1
                pred[k] += val
            blk[0] = pred[k]
            # AC
            i = 1
            lut = ac_luts[k]
            while i < 64:
                if nbits < 32:
                    buf = ((buf & ((1 << nbits) - 1)) << 32) | int.from_bytes(stream[pos:pos + 4], "big")
                    pos += 4
                    nbits += 32
                e = lut[(buf >> (nbits - 16)) & 0xFFFF]
                if not e:
                    raise JpegParseError("invalid Huffman code", data_offset + pos)
                nbits -= e >> 8
                rs = e & 0xFF
                r, s = rs >> 4, rs & 15
                if s == 0:
                    if r == 15:
                        i += 16
                        continue
                    break
                i += r
                if i > 63:
                    raise JpegParseError("AC run past end of block", data_offset + pos)
                val = (buf >> (nbits - s)) & ((1 << s) - 1)
                nbits -= s
                if val < (1 << (s - 1)):
                    val -= (1 << s) - 1
                blk[i] = val
                i += 1
            if i > 64:
                raise JpegParseError("AC run past end of block", data_offset + pos)
            blocks[k][idx] = blk
        if pos - nbits // 8 > limit:
            raise JpegParseError("entropy-coded data truncated", data_offset + limit)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _category(v: int) -> int:
    return abs(v).bit_length()


def _mcu_order(frame: Frame, shapes):
    """Yield (component index, block row, block col) in scan order."""
    if frame.interleaved:
        for my in range(frame.mcu_rows):
            for mx in range(frame.mcu_cols):
                for k, c in enumerate(frame.components):
                    for v in range(c.v):
                        for h in range(c.h):
                            yield k, my * c.v + v, mx * c.h + h
    else:
        rows, cols = shapes[0]
        for by in range(rows):
            for bx in range(cols):
                yield 0, by, bx


def _symbols(frame: Frame, coefficients):
    """Per block: (component, dc_category, dc_bits, [(rs, ac_bits, size), ...])."""
    shapes = [a.shape[:2] for a in coefficients]
    lists = [a.tolist() for a in coefficients]
    pred = [0] * len(coefficients)
    for k, by, bx in _mcu_order(frame, shapes):
        blk = lists[k][by][bx]
        diff = blk[0] - pred[k]
        pred[k] = blk[0]
        ac = []
        run = 0
        for i in range(1, 64):
            v = blk[i]
            if v == 0:
                run += 1
                continue
            while run > 15:
                ac.append((0xF0, 0, 0))
                run -= 16
            s = _category(v)
            ac.append((run << 4 | s, v if v > 0 else v + (1 << s) - 1, s))
            run = 0
        if run:
            ac.append((0x00, 0, 0))
        s = _category(diff)
        yield k, s, (diff if diff >= 0 else diff + (1 << s) - 1), ac


def encode_scan(frame: Frame, coefficients) -> tuple[list[tuple[int, int, HuffmanTable]], list[int], bytes]:
    """Entropy-code coefficients with optimal tables.

    Returns (DHT table list, per-component table id, stuffed scan bytes).
    Component 0 uses table 0, the others share table 1.
    """
    blocks = list(_symbols(frame, coefficients))
    table_of = [0 if k == 0 else 1 for k in range(len(frame.components))]
    ntab = max(table_of) + 1
    dc_freq = [dict() for _ in range(ntab)]
    ac_freq = [dict() for _ in range(ntab)]
    for k, s, _, ac in blocks:
        t = table_of[k]
        dc_freq[t][s] = dc_freq[t].get(s, 0) + 1
        for rs, _, _ in ac:
            ac_freq[t][rs] = ac_freq[t].get(rs, 0) + 1
    dc_tabs = [optimal_table(f) for f in dc_freq]
    ac_tabs = [optimal_table(f) for f in ac_freq]
    dc_enc = [t.encoder for t in dc_tabs]
    ac_enc = [t.encoder for t in ac_tabs]

    out = bytearray()
    acc = 0
    nacc = 0
    for k, s, bits, ac in blocks:
        t = table_of[k]
        code, length = dc_enc[t][s]
        acc = (acc << (length + s)) | (code << s) | bits
        nacc += length + s
        enc = ac_enc[t]
        for rs, bits, size in ac:
            code, length = enc[rs]
            acc = (acc << (length + size)) | (code << size) | bits
            nacc += length + size
        if nacc >= 256:
            nb = nacc >> 3
            rem = nacc - (nb << 3)
            out += (acc >> rem).to_bytes(nb, "big")
            acc &= (1 << rem) - 1
            nacc = rem
    if nacc % 8:
        pad = 8 - nacc % 8
        acc = (acc << pad) | ((1 << pad) - 1)
        nacc += pad
    out += acc.to_bytes(nacc >> 3, "big")
    tables = []
    for t in range(ntab):
        tables.append((0, t, dc_tabs[t]))
        tables.append((1, t, ac_tabs[t]))
    return tables, table_of, bytes(out).replace(b"\xff", b"\xff\x00")


def rebuild(image: JpegImage, frame: Frame, coefficients) -> JpegImage:
    """New image with ``frame`` and ``coefficients``, re-entropy-coded.

    Huffman tables are regenerated for the new data, restart intervals are
    dropped, and every other segment is kept as is.
    """
    tables, table_of, scan_data = encode_scan(frame, coefficients)
    frozen = []
    for arr in coefficients:
        arr = np.array(arr, dtype=np.int16)
        arr.setflags(write=False)
        frozen.append(arr)
    segments = []
    dht_written = False
    for seg in image.segments:
        if seg.marker in SOF_BASELINE:
            segments.append(replace(seg, payload=frame.to_payload()))
        elif seg.marker == DHT:
            if not dht_written:
                segments.append(Segment(DHT, build_dht(tables)))
                dht_written = True
        elif seg.marker == DRI or 0xD0 <= seg.marker <= 0xD7:
            continue
        elif seg.marker == SOS:
            if not dht_written:
                segments.append(Segment(DHT, build_dht(tables)))
                dht_written = True
            header = bytes([len(frame.components)])
            for k, c in enumerate(frame.components):
                t = table_of[k]
                header += bytes([c.cid, t << 4 | t])
            header += b"\x00\x3f\x00"
            segments.append(Segment(SOS, header, scan_data, seg.fill))
        else:
            segments.append(seg)
    return JpegImage(tuple(segments), frame, image.qtables, tuple(frozen), image.trailer)
