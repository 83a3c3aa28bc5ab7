"""``cropsig`` command line: keygen, sign, crop, verify, inspect, bench.

Exit codes: 0 verified / success, 1 verification failed, 2 format or usage error.
"""

from __future__ import annotations

import argparse
import datetime
import logging
import math
import os
import sys
from pathlib import Path

from cropsig import crypto_core as cc
from cropsig import payload as pl
from cropsig.bench import (
    bench_key,
    parse_granularities,
    parse_synth_spec,
    run_bench,
    synthesize,
    write_csv,
)
from cropsig.jpeg.codec import JpegError, JpegImage, parse_jpeg
from cropsig.jpeg.container import extract_payload, grid_shape, payload_chunk_count
from cropsig.scheme import CropRect, VerificationError
from cropsig.workflow import SCHEMES, WorkflowError, crop_image, sign_image, verify_image

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

SEED_ENV = "CROPSIG_BENCH_SEED"

log = logging.getLogger("cropsig")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _read_jpeg(path: str) -> JpegImage:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return parse_jpeg(data)


def _write(path: str, data: bytes, mode: int | None = None) -> None:
    try:
        if mode is None:
            Path(path).write_bytes(data)
        else:
            fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, mode)
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def load_key(path: str) -> cc.OuterKeyPair:
    try:
        return cc.OuterKeyPair.from_pem(Path(path).read_bytes())
    except OSError as exc:
        raise UsageError(f"cannot read key {path}: {exc.strerror}") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path} is not a P-256 private key: {exc}") from None


def load_public_key(spec: str) -> bytes:
    """Public key from a hex string, a file holding hex, or a PEM private key file."""
    text = spec
    path = Path(spec)
    if path.is_file():
        raw = path.read_bytes()
        if b"PRIVATE KEY" in raw:
            return load_key(spec).public_key
        text = raw.decode("ascii", "replace")
    try:
        pk = bytes.fromhex(text.strip())
    except ValueError:
        raise UsageError(f"public key {spec!r} is neither hex nor a key file") from None
    if len(pk) != cc.DEFAULT_SUITE.outer_pk_len:
        raise UsageError(f"public key must be {cc.DEFAULT_SUITE.outer_pk_len} bytes, got {len(pk)}")
    return pk


def self_signed_certificate(key: cc.OuterKeyPair, common_name: str = "cropsig signer") -> bytes:
    """DER self-signed X.509 certificate for the outer key (an opaque blob to the payload)."""
    from cryptography import x509
    from cryptography.hazmat.primitives import hashes, serialization
    from cryptography.x509.oid import NameOID

    priv = serialization.load_pem_private_key(key.to_pem(), password=None)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
    now = datetime.datetime.now(datetime.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(priv.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now)
        .not_valid_after(now + datetime.timedelta(days=365))
        .sign(priv, hashes.SHA256())
    )
    return cert.public_bytes(serialization.Encoding.DER)


def rect_from_pixels(image: JpegImage, g: int, text: str) -> CropRect:
    """Convert ``x,y,w,h`` pixels to cell indices; edges must fall on cell boundaries."""
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--rect-px needs x,y,w,h, got {text!r}") from None
    mcu_w, mcu_h = image.frame.mcu_size
    cw, ch = g * mcu_w, g * mcu_h
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > image.width or y + h > image.height:
        raise UsageError(f"pixel rect {text} outside the {image.width}x{image.height} image")
    if x % cw or y % ch:
        raise UsageError(f"pixel rect origin must be a multiple of the {cw}x{ch} cell size")
    if (x + w) % cw and x + w != image.width:
        raise UsageError(f"pixel rect width must end on a {cw}-pixel cell boundary or the image edge")
    if (y + h) % ch and y + h != image.height:
        raise UsageError(f"pixel rect height must end on a {ch}-pixel cell boundary or the image edge")
    return CropRect(y // ch + 1, math.ceil((y + h) / ch), x // cw + 1, math.ceil((x + w) / cw))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_keygen(args) -> int:
    key = cc.OuterKeyPair.generate()
    prefix = args.prefix
    _write(prefix + ".key", key.to_pem(), mode=0o600)
    _write(prefix + ".pub", (key.public_key.hex() + "\n").encode())
    if args.cert:
        _write(prefix + ".crt", self_signed_certificate(key, args.cert_name))
    print(key.public_key.hex())
    return EXIT_OK


def cmd_sign(args) -> int:
    if args.granularity < 1:
        raise UsageError("granularity must be >= 1")
    key = load_key(args.key)
    cert = b""
    if args.cert:
        try:
            cert = Path(args.cert).read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read certificate {args.cert}: {exc.strerror}") from None
    image = _read_jpeg(args.input)
    signed = sign_image(image, key, args.granularity, args.scheme, cert)
    _write(args.output, signed.to_bytes())
    w, h = grid_shape(image, args.granularity)
    print(f"signed {args.input} -> {args.output}: {args.scheme}, g={args.granularity}, {w}x{h} cells")
    return EXIT_OK


def cmd_crop(args) -> int:
    image = _read_jpeg(args.input)
    payload = extract_payload(image)
    if payload is None:
        raise UsageError(f"{args.input} carries no signature payload")
    if args.rect_px is not None:
        rect = rect_from_pixels(image, payload.granularity, args.rect_px)
    else:
        try:
            rect = CropRect.parse(args.rect)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        cropped = crop_image(image, rect)
    except WorkflowError as exc:
        raise UsageError(str(exc)) from None
    _write(args.output, cropped.to_bytes())
    print(f"cropped {args.input} -> {args.output}: rect {rect}, {cropped.width}x{cropped.height} px")
    return EXIT_OK


def cmd_verify(args) -> int:
    pk = load_public_key(args.pubkey)
    image = _read_jpeg(args.input)
    try:
        report = verify_image(image, pk)
    except pl.PayloadFormatError as exc:
        # a damaged payload on an otherwise readable JPEG is a failed verification
        return _report_failure(VerificationError("malformed", str(exc)))
    except VerificationError as exc:
        return _report_failure(exc)
    print("\n".join(report.lines()))
    return EXIT_OK


def _report_failure(exc: VerificationError) -> int:
    print("status: FAILED")
    print(f"reason: {exc.reason}")
    if exc.detail:
        print(f"detail: {exc.detail}")
    return EXIT_FAILED


def cmd_inspect(args) -> int:
    image = _read_jpeg(args.input)
    print(f"pixels: {image.width}x{image.height}")
    print(f"mcu: {image.frame.mcu_size[0]}x{image.frame.mcu_size[1]}")
    try:
        payload = extract_payload(image)
    except pl.PayloadFormatError as exc:
        print(f"payload: malformed ({exc})")
        print(f"chunks: {payload_chunk_count(image)}")
        return EXIT_USAGE
    if payload is None:
        print("no payload")
        return EXIT_OK
    print(f"scheme: {payload.scheme_name}")
    print(f"kind: {payload.kind_name}")
    print(f"suite: 0x{payload.suite_id:02x}")
    print(f"g: {payload.granularity}")
    print(f"chunks: {payload_chunk_count(image)}")
    print(f"payload bytes: {len(payload.to_bytes())}")
    print(f"certificate bytes: {len(payload.certificate)}")
    sig = payload.signature()
    print(f"source grid: {sig.width}x{sig.height}")
    if payload.kind == pl.KIND_CROPPED:
        print(f"rect: {sig.rect}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        granularities = parse_granularities(args.granularities)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    key = load_key(args.key) if args.key else bench_key(seed if seed is not None else 0)

    images = []
    for spec in args.synthesize or []:
        try:
            w, h, q = parse_synth_spec(spec)
        except ValueError:
            raise UsageError(f"--synthesize expects WxH:Q, got {spec!r}") from None
        images.append((f"synth-{w}x{h}-q{q}", synthesize(w, h, q, seed or 0)))
    for path in args.images:
        try:
            images.append((Path(path).name, Path(path).read_bytes()))
        except OSError as exc:
            log.error("cannot read %s: %s", path, exc.strerror)
    if not images:
        raise UsageError("no images given (pass files or --synthesize WxH:Q)")

    schemes = tuple(args.schemes.split(","))
    unknown = set(schemes) - set(SCHEMES)
    if unknown:
        raise UsageError(f"unknown scheme(s): {', '.join(sorted(unknown))}")

    records, failures = run_bench(images, granularities, key, seed, schemes, args.jobs)
    if args.out == "-":
        write_csv(records, sys.stdout)
    else:
        try:
            with open(args.out, "w", newline="") as fh:
                write_csv(records, fh)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
        print(f"wrote {len(records)} records to {args.out}")
    for image_id, err in failures.items():
        print(f"failed: {image_id}: {err}", file=sys.stderr)
    return EXIT_FAILED if failures and not records else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cropsig", description="Croppable signatures for JPEG images.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a signer key pair")
    p.add_argument("prefix", help="writes PREFIX.key (PEM) and PREFIX.pub (hex)")
    p.add_argument("--cert", action="store_true", help="also write a self-signed DER certificate PREFIX.crt")
    p.add_argument("--cert-name", default="cropsig signer")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("sign", help="embed a full signature")
    p.add_argument("--key", required=True)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("-g", "--granularity", type=int, default=1, help="cell side in MCUs")
    p.add_argument("--scheme", choices=sorted(SCHEMES), default="croppable")
    p.add_argument("--cert", help="certificate blob to carry in the payload")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("crop", help="crop a signed image and derive its cropped signature")
    p.add_argument("input")
    p.add_argument("output")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--rect", help="cell indices i1,i2,j1,j2 (1-based, inclusive)")
    group.add_argument("--rect-px", help="pixels x,y,w,h aligned to the cell size")
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("verify", help="verify a signed or cropped image")
    p.add_argument("--pubkey", required=True, help="hex string, .pub file, or PEM private key")
    p.add_argument("input")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", help="print payload metadata without verifying")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("bench", help="signed file sizes across granularities")
    p.add_argument("images", nargs="*")
    p.add_argument("--synthesize", action="append", metavar="WxH:Q")
    p.add_argument("--granularities", default="1..8")
    p.add_argument("--schemes", default="croppable,baseline")
    p.add_argument("--out", default="bench.csv", help="CSV path or - for stdout")
    p.add_argument("--seed", type=int, help=f"fixes signing randomness (also ${SEED_ENV})")
    p.add_argument("--key", help="PEM key; default is a key derived from the seed")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except pl.PayloadFormatError as exc:
        print(f"error: malformed payload: {exc}", file=sys.stderr)
    except (JpegError, WorkflowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
