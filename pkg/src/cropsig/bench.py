"""Signed-file size benchmark: both schemes, full and quarter-cropped, per granularity."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import logging
import random
from dataclasses import dataclass

import numpy as np
from PIL import Image

from cropsig import crypto_core as cc
from cropsig.jpeg.codec import parse_jpeg
from cropsig.jpeg.container import extract_payload, grid_shape
from cropsig.workflow import SCHEMES, crop_image, quarter_rect, sign_image

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchRecord:
    image_id: str
    width: int
    height: int
    unsigned_size: int
    scheme: str
    granularity: int
    kind: str
    signed_size: int
    payload_size: int


FIELDS = [f.name for f in dataclasses.fields(BenchRecord)]


def synthesize(width: int, height: int, quality: int = 75, seed: int = 0) -> bytes:
    """Procedural test photo: smooth gradients, a few waves and sensor-like noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u, v = xx / width, yy / height
    img = np.empty((height, width, 3))
    for ch in range(3):
        fx, fy, phase = rng.uniform(2, 14), rng.uniform(2, 14), rng.uniform(0, 2 * np.pi)
        img[..., ch] = (
            90 * (u * rng.uniform(0.3, 1) + v * rng.uniform(0.3, 1))
            + 35 * np.sin(2 * np.pi * (fx * u + fy * v) + phase)
            + 20 * np.sin(2 * np.pi * fx * 3 * u * v + phase)
            + 40
        )
    img += rng.normal(0, 16, (height, width, 1)) + rng.normal(0, 3, (height, width, 3))
    out = io.BytesIO()
    Image.fromarray(np.clip(img, 0, 255).astype(np.uint8)).save(out, "JPEG", quality=quality)
    return out.getvalue()


def synthesize_for_size(width: int, height: int, target_bytes: int, seed: int = 0) -> tuple[bytes, int]:
    """Binary-search the quality whose output size is closest to ``target_bytes``."""
    lo, hi = 1, 100
    best = None
    while lo <= hi:
        q = (lo + hi) // 2
        data = synthesize(width, height, q, seed)
        if best is None or abs(len(data) - target_bytes) < abs(len(best[0]) - target_bytes):
            best = (data, q)
        if len(data) < target_bytes:
            lo = q + 1
        else:
            hi = q - 1
    return best


def parse_synth_spec(spec: str) -> tuple[int, int, int]:
    """``"1024x768:75"`` -> (1024, 768, 75); quality defaults to 75."""
    dims, _, quality = spec.partition(":")
    w, _, h = dims.lower().partition("x")
    return int(w), int(h), int(quality or 75)


def parse_granularities(text: str) -> list[int]:
    """``"1..8"`` or ``"1,2,4"``."""
    if ".." in text:
        a, b = text.split("..")
        out = list(range(int(a), int(b) + 1))
    else:
        out = [int(x) for x in text.split(",") if x.strip()]
    if not out or min(out) < 1:
        raise ValueError(f"bad granularity list {text!r}")
    return out


def bench_key(seed: int) -> cc.OuterKeyPair:
    """Deterministic outer key for reproducible bench runs only."""
    return cc.OuterKeyPair.from_private_bytes(hashlib.sha256(b"cropsig-bench-key|%d" % seed).digest())


def bench_image(
    image_id: str,
    data: bytes,
    granularities: list[int],
    key: cc.OuterKeyPair,
    seed: int | None = None,
    schemes: tuple[str, ...] = tuple(SCHEMES),
) -> list[BenchRecord]:
    image = parse_jpeg(data)
    records = []
    for scheme_name in schemes:
        for g in granularities:
            rng = random.Random(f"{seed}|{image_id}|{scheme_name}|{g}") if seed is not None else None
            signed = sign_image(image, key, g, scheme_name, rng=rng)
            w, h = grid_shape(image, g)
            cropped = crop_image(signed, quarter_rect(w, h))
            for kind, img in (("full", signed), ("cropped", cropped)):
                blob = img.to_bytes()
                records.append(BenchRecord(
                    image_id=image_id,
                    width=image.width,
                    height=image.height,
                    unsigned_size=len(data),
                    scheme=scheme_name,
                    granularity=g,
                    kind=kind,
                    signed_size=len(blob),
                    payload_size=len(extract_payload(img).to_bytes()),
                ))
    return records


def run_bench(images, granularities, key, seed=None, schemes=tuple(SCHEMES), jobs: int = 1):
    """Benchmark ``images`` (an iterable of (id, bytes)); failures are logged and skipped.

    Returns (records, failures) where failures maps image id to the error text.
    """
    records: list[BenchRecord] = []
    failures: dict[str, str] = {}
    images = list(images)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            futures = {
                image_id: pool.submit(bench_image, image_id, data, granularities, key, seed, schemes)
                for image_id, data in images
            }
            for image_id, fut in futures.items():
                try:
                    records.extend(fut.result())
                except Exception as exc:  # noqa: BLE001 - keep the run going
                    log.error("bench failed for %s: %s", image_id, exc)
                    failures[image_id] = str(exc)
    else:
        for image_id, data in images:
            try:
                records.extend(bench_image(image_id, data, granularities, key, seed, schemes))
            except Exception as exc:  # noqa: BLE001
                log.error("bench failed for %s: %s", image_id, exc)
                failures[image_id] = str(exc)
    return records, failures


def write_csv(records, stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=FIELDS)
    writer.writeheader()
    for r in records:
        writer.writerow(dataclasses.asdict(r))


def read_csv(stream) -> list[BenchRecord]:
    out = []
    for row in csv.DictReader(stream):
        for name in ("width", "height", "unsigned_size", "granularity", "signed_size", "payload_size"):
            row[name] = int(row[name])
        out.append(BenchRecord(**row))
    return out
