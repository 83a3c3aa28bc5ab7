"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` to see the lines
inline; they are also repeated in the terminal summary of any pytest run.
"""

from __future__ import annotations

import dataclasses
import math
import random
import struct
import time
from fractions import Fraction

import pytest

from cropsig import crypto_core as cc
from cropsig import scheme as sc
from cropsig.bench import bench_image, bench_key, synthesize
from cropsig.cli import self_signed_certificate
from cropsig.jpeg.codec import parse_jpeg
from cropsig.jpeg.container import extract_block_grid, extract_payload, grid_shape
from cropsig.scheme import BlockGrid, CropRect
from cropsig.workflow import crop_jpeg, sign_jpeg, verify_jpeg
from helpers import KEY, decode_pixels, flip_bit, make_jpeg, random_grid

S = cc.DEFAULT_SUITE
RESULTS: dict[str, str] = {}


def report(capsys, criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    RESULTS[criterion] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def all_rects(w: int, h: int):
    for i1 in range(1, h + 1):
        for i2 in range(i1, h + 1):
            for j1 in range(1, w + 1):
                for j2 in range(j1, w + 1):
                    yield CropRect(i1, i2, j1, j2)


# ---------------------------------------------------------------------------


def test_ac1_correctness(capsys):
    start = time.perf_counter()
    rng = random.Random(101)
    failures = []
    grid = random_grid(4, 4, rng, max_len=64)
    full = sc.sign_full(KEY, grid)
    rects = list(all_rects(4, 4))
    for rect in rects:
        if not sc.verify_cropped(KEY.public_key, sc.crop_signature(full, rect), grid.view(rect)):
            failures.append(("4x4", rect))
    sizes = 0
    for w in range(1, 9):
        for h in range(1, 9):
            g = random_grid(w, h, rng, max_len=64)
            f = sc.sign_full(KEY, g)
            picks = [CropRect.whole(w, h)]
            for _ in range(2):
                i1, j1 = rng.randint(1, h), rng.randint(1, w)
                picks.append(CropRect(i1, rng.randint(i1, h), j1, rng.randint(j1, w)))
            for rect in picks:
                sizes += 1
                if not sc.verify_cropped(KEY.public_key, sc.crop_signature(f, rect), g.view(rect)):
                    failures.append((f"{w}x{h}", rect))
    elapsed = time.perf_counter() - start
    ok = len(rects) == 100 and not failures and elapsed < 60
    report(capsys, "AC1 correctness", ok,
           f"{len(rects)} rects on 4x4 + {sizes} rects on 1x1..8x8 grids, {len(failures)} failures, {elapsed:.1f}s")


# ---------------------------------------------------------------------------


def _tamper_cases(grid: BlockGrid, c: sc.CroppedSignature):
    """Yield (label, signature, grid) for every single-bit flip the criterion lists."""
    for cell in c.rect.cells():
        data = grid.block(*cell)
        for bit in range(len(data) * 8):
            blocks = dict(grid.blocks)
            blocks[cell] = flip_bit(data, bit)
            yield "block", c, BlockGrid(grid.width, grid.height, grid.context_digest, blocks, grid.rect)
    for name in ("outer_sig", "aggregate", "ephemeral_pk"):
        raw = getattr(c, name)
        for bit in range(len(raw) * 8):
            yield name, dataclasses.replace(c, **{name: flip_bit(raw, bit)}), grid
    for name in ("width", "height"):
        for bit in range(32):
            value = getattr(c, name) ^ (1 << bit)
            forged = dataclasses.replace(c, **{name: value})
            w, h = forged.width, forged.height
            # present blocks laid out for the forged shape whenever that is possible
            if c.rect.is_valid_for(w, h):
                g = BlockGrid(w, h, grid.context_digest, {k: grid.block(*k) for k in c.rect.cells()}, c.rect)
            else:
                g = grid
            yield name, forged, g
    for bit in range(len(c.context_digest) * 8):
        digest = flip_bit(c.context_digest, bit)
        forged = dataclasses.replace(c, context_digest=digest)
        yield "context_digest", forged, grid
        # and an image whose own digest matches the forged value
        yield "context_digest", forged, BlockGrid(grid.width, grid.height, digest, grid.blocks, grid.rect)


def test_ac2_tamper(capsys):
    rng = random.Random(202)
    full_grid = BlockGrid.from_rows([[rng.randbytes(16) for _ in range(2)] for _ in range(2)], rng.randbytes(32))
    full = sc.sign_full(KEY, full_grid)
    trials = 0
    false_accepts = []
    for rect in (CropRect.whole(2, 2), CropRect(1, 1, 1, 2), CropRect(2, 2, 2, 2)):
        c = sc.crop_signature(full, rect)
        view = full_grid.view(rect)
        assert sc.verify_cropped(KEY.public_key, c, view)
        for label, sig, g in _tamper_cases(view, c):
            trials += 1
            if sc.verify_cropped(KEY.public_key, sig, g):
                false_accepts.append((label, rect))
    report(capsys, "AC2 tamper", not false_accepts,
           f"{trials} single-bit flips over blocks, outer sig, aggregate, pk, w, h, digest; "
           f"{len(false_accepts)} false accepts")


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def signed_pair():
    data = make_jpeg(160, 160, seed=7)  # 10 x 10 MCUs at 4:2:0
    return {s: sign_jpeg(data, KEY, scheme_name=s) for s in ("croppable", "baseline")}


def _payload_len(jpeg: bytes) -> int:
    return len(extract_payload(parse_jpeg(jpeg)).to_bytes())


def test_ac3_constant_size(capsys, signed_pair):
    rects = [CropRect(1, 1, 1, 1), CropRect(2, 3, 4, 5), CropRect(5, 7, 1, 3)]
    counts = [r.count for r in rects]
    crop_sizes = [_payload_len(crop_jpeg(signed_pair["croppable"], r)) for r in rects]
    base_sizes = [_payload_len(crop_jpeg(signed_pair["baseline"], r)) for r in rects]
    constant = max(crop_sizes) - min(crop_sizes) == 0
    increasing = all(a < b for a, b in zip(base_sizes, base_sizes[1:]))
    # exact line through the first and last points; residual at the middle one
    slope = Fraction(base_sizes[2] - base_sizes[0], counts[2] - counts[0])
    residual = base_sizes[1] - (base_sizes[0] + slope * (counts[1] - counts[0]))
    ok = constant and increasing and residual == 0 and slope == S.outer_sig_len
    report(capsys, "AC3 constant size", ok,
           f"croppable cropped payloads {crop_sizes} for {counts} cells; "
           f"baseline {base_sizes}, slope {slope} B/cell, residual {residual}")


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trend_records():
    data = synthesize(1024, 768, 75, seed=0)
    records = bench_image("synth-1024x768-q75", data, list(range(1, 9)), bench_key(0), seed=0)
    return len(data), records


def test_ac4_size_trend(capsys, trend_records):
    unsigned, records = trend_records
    by = {(r.scheme, r.granularity, r.kind): r for r in records}
    gs = range(1, 9)
    smaller = all(by["croppable", g, "full"].payload_size < by["baseline", g, "full"].payload_size for g in (1, 2, 3))
    gaps = []
    for g in gs:
        a, b = by["croppable", g, "full"].signed_size, by["baseline", g, "full"].signed_size
        gaps.append((b - a) / b)
    monotone = all(x > y for x, y in zip(gaps, gaps[1:]))
    ok = smaller and monotone and gaps[5] < 0.01
    detail = ", ".join(f"g={g}:{100 * x:.2f}%" for g, x in zip(gs, gaps))
    report(capsys, "AC4 size trend", ok,
           f"unsigned {unsigned} B; full-file gap {detail}; croppable smaller at g<=3: {smaller}")


# ---------------------------------------------------------------------------


def test_ac5_analytic_full_size(capsys):
    # (pixel size, subsampling, MCU size in pixels for that subsampling)
    images = [((100, 70), 2, (16, 16)), ((333, 129), 1, (16, 8)), ((64, 200), 0, (8, 8))]
    cert_key = cc.OuterKeyPair.from_private_bytes(bytes.fromhex("44" * 32))
    certs = [b"", b"opaque-cert-blob", self_signed_certificate(cert_key)]
    mismatches = []
    checked = 0
    for ((w_px, h_px), sub, (mw, mh)), cert in zip(images, certs):
        data = make_jpeg(w_px, h_px, subsampling=sub)
        for g in (1, 2, 4):
            signed = sign_jpeg(data, KEY, granularity=g, certificate=cert)
            measured = _payload_len(signed)
            cells = math.ceil(math.ceil(w_px / mw) / g) * math.ceil(math.ceil(h_px / mh) / g)
            # magic, version, scheme, kind, suite, g, body length, cert length
            fixed = 8 + 1 + 1 + 1 + 1 + 2 + 4 + 2
            # suite, w, h, context digest
            body_head = 1 + 4 + 4 + 32
            expected = fixed + len(cert) + body_head + S.outer_sig_len + S.g2_len + cells * S.g1_len
            checked += 1
            if measured != expected:
                mismatches.append((w_px, h_px, g, measured, expected))
    report(capsys, "AC5 analytic full size", not mismatches,
           f"{checked} image/g combinations, {len(mismatches)} mismatches {mismatches}")


# ---------------------------------------------------------------------------


def test_ac6_lossless_crop(capsys):
    rng = random.Random(606)
    bad = []
    for case in range(20):
        w_px, h_px = rng.randint(24, 260), rng.randint(24, 260)
        data = make_jpeg(w_px, h_px, seed=case, quality=rng.randint(40, 95),
                         subsampling=rng.choice([0, 1, 2]))
        g = rng.randint(1, 4)
        scheme = rng.choice(["croppable", "baseline"])
        original = parse_jpeg(data)
        gw, gh = grid_shape(original, g)
        i1, j1 = rng.randint(1, gh), rng.randint(1, gw)
        rect = CropRect(i1, rng.randint(i1, gh), j1, rng.randint(j1, gw))
        cropped = crop_jpeg(sign_jpeg(data, KEY, granularity=g, scheme_name=scheme), rect)
        full_grid = extract_block_grid(original, g)
        sub = extract_block_grid(parse_jpeg(cropped), g, (rect.i1, rect.j1), (gw, gh))
        same = all(sub.block(*c) == full_grid.block(*c) for c in rect.cells())
        try:
            decode_pixels(cropped)
            decodes = True
        except Exception:  # noqa: BLE001
            decodes = False
        verified = verify_jpeg(cropped, KEY.public_key).rect == rect
        if not (same and decodes and verified):
            bad.append((case, w_px, h_px, g, rect))
    report(capsys, "AC6 lossless crop", not bad,
           f"20 random image/rect/g cases, cells byte-identical and decodable by libjpeg (Pillow); {len(bad)} bad")


# ---------------------------------------------------------------------------

TRIALS = 1000


def test_ac7_crypto_properties(capsys):
    rng = random.Random(707)
    r = S.group_order
    g1, g2 = S.g1_generator, S.g2_generator
    base = cc.pairing(g1, g2)
    counts = dict.fromkeys(["bilinearity", "distributivity", "encoding", "aggregate"], 0)
    failures = dict.fromkeys(counts, 0)

    for _ in range(TRIALS):
        a, b = rng.randrange(1, r), rng.randrange(1, r)
        pa, qb = cc.g1_scalar_mul(a, g1), cc.g2_scalar_mul(b, g2)
        lhs = cc.pairing(pa, qb)
        ok = lhs == cc.gt_pow(base, a * b % r) and lhs == cc.pairing(cc.g1_scalar_mul(a * b % r, g1), g2)
        counts["bilinearity"] += 1
        failures["bilinearity"] += not ok

    for _ in range(TRIALS):
        a, b, c = rng.randrange(r), rng.randrange(r), rng.randrange(1, r)
        p = cc.g1_scalar_mul(c, g1)
        q = cc.g2_scalar_mul(c, g2)
        p2 = cc.hash_to_g1(b"AC7", rng.randbytes(8))
        ok = (
            cc.g1_scalar_mul((a + b) % r, p) == cc.g1_add(cc.g1_scalar_mul(a, p), cc.g1_scalar_mul(b, p))
            and cc.g1_scalar_mul(a, cc.g1_add(p, p2)) == cc.g1_add(cc.g1_scalar_mul(a, p), cc.g1_scalar_mul(a, p2))
            and cc.g2_scalar_mul((a + b) % r, q) == cc.g2_scalar_mul(a, q) + cc.g2_scalar_mul(b, q)
        )
        counts["distributivity"] += 1
        failures["distributivity"] += not ok

    for _ in range(TRIALS):
        k = rng.randrange(r)
        p, q = cc.g1_scalar_mul(k, g1), cc.g2_scalar_mul(k, g2)
        e1, e2 = cc.encode_g1(p), cc.encode_g2(q)
        ok = (
            cc.decode_g1(e1) == p and cc.decode_g2(e2) == q
            and cc.encode_g1(cc.decode_g1(e1)) == e1 and cc.encode_g2(cc.decode_g2(e2)) == e2
            and len(e1) == S.g1_len and len(e2) == S.g2_len
        )
        counts["encoding"] += 1
        failures["encoding"] += not ok

    for _ in range(TRIALS):
        w, h = rng.randint(1, 3), rng.randint(1, 3)
        grid = random_grid(w, h, rng, max_len=8)
        seed = rng.getrandbits(64)
        full = sc.sign_full(KEY, grid, random.Random(seed))
        k = cc.scalar_random(random.Random(seed))  # the same draw sign_full made
        i1, j1 = rng.randint(1, h), rng.randint(1, w)
        rect = CropRect(i1, rng.randint(i1, h), j1, rng.randint(j1, w))
        naive = cc.G1Point.identity()
        for i, j in rect.cells():
            msg = sc.BLOCK_TAG + struct.pack(">IIQ", i, j, len(grid.block(i, j))) + grid.block(i, j)
            naive = naive + cc.hash_to_g1(sc.H2C_DST, msg)
        ok = sc.crop_signature(full, rect).aggregate == cc.encode_g1(cc.g1_scalar_mul(k, naive))
        counts["aggregate"] += 1
        failures["aggregate"] += not ok

    detail = "; ".join(f"{name} {failures[name]}/{counts[name]} failed" for name in counts)
    report(capsys, "AC7 crypto properties", not any(failures.values()) and min(counts.values()) >= 1000, detail)


# ---------------------------------------------------------------------------


def test_ac8_two_pairings(capsys):
    rng = random.Random(808)
    grid = random_grid(6, 6, rng)
    full = sc.sign_full(KEY, grid)
    seen = {}
    for rect in [CropRect(1, 1, 1, 1), CropRect(1, 2, 1, 2), CropRect(2, 5, 1, 6), CropRect.whole(6, 6)]:
        with cc.count_pairings() as n:
            assert sc.verify_cropped(KEY.public_key, sc.crop_signature(full, rect), grid.view(rect))
        seen[rect.count] = n[0]
    # the same through the JPEG pipeline
    signed = sign_jpeg(make_jpeg(96, 96), KEY)
    for rect in [CropRect(1, 1, 1, 1), CropRect(1, 6, 1, 6)]:
        cropped = crop_jpeg(signed, rect)
        with cc.count_pairings() as n:
            verify_jpeg(cropped, KEY.public_key)
        seen[f"jpeg:{rect.count}"] = n[0]
    ok = set(seen.values()) == {2}
    report(capsys, "AC8 two pairings", ok, "pairings per verify by cells covered: " + str(seen))
