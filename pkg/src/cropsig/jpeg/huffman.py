"""Canonical JPEG Huffman tables: parsing, decode lookup, optimal construction."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

PEEK_BITS = 16


@dataclass(frozen=True)
class HuffmanTable:
    counts: tuple[int, ...]  # number of codes of each length 1..16
    symbols: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != 16 or sum(self.counts) != len(self.symbols):
            raise ValueError("inconsistent Huffman table")

    def codes(self) -> list[tuple[int, int, int]]:
        """(code, length, symbol) triples in canonical order."""
        out = []
        code = 0
        k = 0
        for length, n in enumerate(self.counts, start=1):
            for _ in range(n):
                out.append((code, length, self.symbols[k]))
                code += 1
                k += 1
            if code > (1 << length):
                raise ValueError("Huffman code space overflow")
            code <<= 1
        return out

    @cached_property
    def lookup(self) -> list[int]:
        """Table indexed by the next 16 bits; entry = length << 8 | symbol, 0 if invalid."""
        lut = [0] * (1 << PEEK_BITS)
        for code, length, sym in self.codes():
            shift = PEEK_BITS - length
            start = code << shift
            lut[start:start + (1 << shift)] = [(length << 8) | sym] * (1 << shift)
        return lut

    @cached_property
    def encoder(self) -> dict[int, tuple[int, int]]:
        return {sym: (code, length) for code, length, sym in self.codes()}

    def to_bytes(self) -> bytes:
        return bytes(self.counts) + bytes(self.symbols)


def parse_dht(payload: bytes) -> list[tuple[int, int, HuffmanTable]]:
    """Return (table class, table id, table) for each table in a DHT payload."""
    out = []
    pos = 0
    while pos < len(payload):
        if pos + 17 > len(payload):
            raise ValueError("truncated DHT segment")
        tc, th = payload[pos] >> 4, payload[pos] & 15
        counts = tuple(payload[pos + 1:pos + 17])
        n = sum(counts)
        if pos + 17 + n > len(payload):
            raise ValueError("truncated DHT segment")
        symbols = tuple(payload[pos + 17:pos + 17 + n])
        out.append((tc, th, HuffmanTable(counts, symbols)))
        pos += 17 + n
    return out


def build_dht(tables: list[tuple[int, int, HuffmanTable]]) -> bytes:
    return b"".join(struct.pack(">B", tc << 4 | th) + t.to_bytes() for tc, th, t in tables)


def optimal_table(freq: dict[int, int]) -> HuffmanTable:
    """Length-limited optimal code for symbol frequencies (JPEG Annex K.2).

    A reserved pseudo-symbol keeps any real code from being all ones.
    """
    freq = {s: f for s, f in freq.items() if f > 0}
    if not freq:
        freq = {0: 1}
    reserved = 256
    f = dict(freq)
    f[reserved] = 1
    codesize = dict.fromkeys(f, 0)
    others = dict.fromkeys(f, None)
    while True:
        # two least frequent live entries; ties resolved toward larger symbol
        live = [s for s in f if f[s] > 0]
        if len(live) < 2:
            break
        live.sort(key=lambda s: (f[s], -s))
        c1, c2 = live[0], live[1]
        f[c1] += f[c2]
        f[c2] = 0
        codesize[c1] += 1
        while others[c1] is not None:
            c1 = others[c1]
            codesize[c1] += 1
        others[c1] = c2
        codesize[c2] += 1
        while others[c2] is not None:
            c2 = others[c2]
            codesize[c2] += 1

    bits = [0] * 33
    for s, size in codesize.items():
        if size:
            bits[size] += 1
    # limit code lengths to 16
    i = 32
    while i > 16:
        while bits[i] > 0:
            j = i - 2
            while bits[j] == 0:
                j -= 1
            bits[i] -= 2
            bits[i - 1] += 1
            bits[j + 1] += 2
            bits[j] -= 1
        i -= 1
    # drop the reserved symbol from the longest length
    i = 16
    while bits[i] == 0:
        i -= 1
    bits[i] -= 1

    ordered = sorted((s for s in codesize if s != reserved and codesize[s]), key=lambda s: (codesize[s], s))
    return HuffmanTable(tuple(bits[1:17]), tuple(ordered))
