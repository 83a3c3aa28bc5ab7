"""Pairing-group primitives and the outer (long-term key) signature scheme.

Group arithmetic and the pairing come from arkworks over BLS12-381. The
outer scheme is ECDSA on P-256 with SHA-256, serialized as fixed-width
``r || s`` so that every signature has the same length.
"""

from __future__ import annotations

import contextlib
import functools
import hashlib
import random
import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from py_arkworks_bls12381 import GT, G1Point, G2Point, Scalar

from cropsig import _hash_to_curve

__all__ = [
    "DEFAULT_SUITE",
    "G1Point",
    "G2Point",
    "GT",
    "OuterKeyPair",
    "PairingSuite",
    "count_pairings",
    "decode_g1",
    "decode_g2",
    "encode_g1",
    "encode_g2",
    "fingerprint",
    "g1_add",
    "g1_scalar_mul",
    "g2_scalar_mul",
    "get_suite",
    "gt_pow",
    "hash_to_g1",
    "outer_sign",
    "outer_verify",
    "pairing",
    "scalar_random",
]


@dataclass(frozen=True)
class PairingSuite:
    suite_id: int
    name: str
    g1_generator: G1Point
    g2_generator: G2Point
    group_order: int
    security_bits: int
    g1_len: int
    g2_len: int
    outer_sig_len: int
    outer_pk_len: int


DEFAULT_SUITE = PairingSuite(
    suite_id=0x01,
    name="BLS12-381+ECDSA-P256",
    g1_generator=G1Point(),
    g2_generator=G2Point(),
    group_order=0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001,
    security_bits=128,
    g1_len=48,
    g2_len=96,
    outer_sig_len=64,
    outer_pk_len=33,
)

_SUITES = {DEFAULT_SUITE.suite_id: DEFAULT_SUITE}


def get_suite(suite_id: int) -> PairingSuite:
    try:
        return _SUITES[suite_id]
    except KeyError:
        raise ValueError(f"unknown suite id 0x{suite_id:02x}") from None


# ---------------------------------------------------------------------------
# Scalars and group elements
# ---------------------------------------------------------------------------

_system_random = random.SystemRandom()


def scalar_random(rng: random.Random | None = None, suite: PairingSuite = DEFAULT_SUITE) -> int:
    """Draw a uniform nonzero scalar mod r.

    ``rng`` defaults to the OS CSPRNG. A seeded ``random.Random`` is only
    acceptable for reproducible benchmarks and tests.
    """
    rng = rng or _system_random
    k = rng.randrange(1, suite.group_order)
    if not 0 < k < suite.group_order:
        raise RuntimeError("entropy source returned an out-of-range scalar")
    return k


def hash_to_g1(domain_tag: bytes, message: bytes) -> G1Point:
    if not domain_tag:
        raise ValueError("domain tag must be non-empty")
    return _hash_to_curve.hash_to_g1(message, domain_tag)


def g1_scalar_mul(k: int, p: G1Point) -> G1Point:
    return p * Scalar(k)


def g2_scalar_mul(k: int, p: G2Point) -> G2Point:
    return p * Scalar(k)


def g1_add(a: G1Point, b: G1Point) -> G1Point:
    return a + b


class _PairingCounter(threading.local):
    def __init__(self):
        self.active: list[list[int]] = []


_counter = _PairingCounter()


@contextlib.contextmanager
def count_pairings():
    """Count pairings evaluated on this thread inside the ``with`` block.

    >>> with count_pairings() as n:
    ...     _ = pairing(G1Point(), G2Point())
    >>> n[0]
    1
    """
    cell = [0]
    _counter.active.append(cell)
    try:
        yield cell
    finally:
        _counter.active.remove(cell)


def pairing(a: G1Point, b: G2Point) -> GT:
    for cell in _counter.active:
        cell[0] += 1
    return GT.pairing(a, b)


def gt_pow(x: GT, k: int) -> GT:
    """Square-and-multiply exponentiation in GT (the binding has no pow)."""
    result = GT.one()
    base = x
    while k:
        if k & 1:
            result = result * base
        base = base * base
        k >>= 1
    return result


def encode_g1(p: G1Point) -> bytes:
    return bytes(p.to_compressed_bytes())


def encode_g2(p: G2Point) -> bytes:
    return bytes(p.to_compressed_bytes())


def decode_g1(data: bytes) -> G1Point:
    """Decode a compressed G1 point; raises ValueError off-curve or off-subgroup."""
    if len(data) != DEFAULT_SUITE.g1_len:
        raise ValueError(f"G1 encoding must be {DEFAULT_SUITE.g1_len} bytes")
    point = G1Point.from_compressed_bytes(bytes(data))
    # reject non-canonical encodings (e.g. stray bits in the infinity form)
    if encode_g1(point) != bytes(data):
        raise ValueError("non-canonical G1 encoding")
    return point


def decode_g2(data: bytes) -> G2Point:
    if len(data) != DEFAULT_SUITE.g2_len:
        raise ValueError(f"G2 encoding must be {DEFAULT_SUITE.g2_len} bytes")
    point = G2Point.from_compressed_bytes(bytes(data))
    if encode_g2(point) != bytes(data):
        raise ValueError("non-canonical G2 encoding")
    return point


# ---------------------------------------------------------------------------
# Outer signature scheme
# ---------------------------------------------------------------------------

_CURVE = ec.SECP256R1()
_ECDSA = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)


@dataclass(frozen=True)
class OuterKeyPair:
    private_key: bytes  # 32-byte big-endian scalar
    public_key: bytes  # 33-byte SEC1 compressed point

    @classmethod
    def generate(cls) -> OuterKeyPair:
        key = ec.generate_private_key(_CURVE)
        return cls._from_key(key)

    @classmethod
    def from_private_bytes(cls, private_key: bytes) -> OuterKeyPair:
        key = ec.derive_private_key(int.from_bytes(private_key, "big"), _CURVE)
        return cls._from_key(key)

    @classmethod
    def from_pem(cls, pem: bytes) -> OuterKeyPair:
        key = serialization.load_pem_private_key(pem, password=None)
        if not isinstance(key, ec.EllipticCurvePrivateKey) or key.curve.name != _CURVE.name:
            raise ValueError("expected a P-256 private key")
        return cls._from_key(key)

    @classmethod
    def _from_key(cls, key: ec.EllipticCurvePrivateKey) -> OuterKeyPair:
        priv = key.private_numbers().private_value.to_bytes(32, "big")
        pub = key.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
        )
        return cls(priv, pub)

    def to_pem(self) -> bytes:
        return self._key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )

    @functools.cached_property
    def _key(self) -> ec.EllipticCurvePrivateKey:
        return ec.derive_private_key(int.from_bytes(self.private_key, "big"), _CURVE)

    def __reduce__(self):
        # the cached library key object does not pickle; rebuild it on demand
        return (type(self), (self.private_key, self.public_key))

    def __repr__(self):
        return f"OuterKeyPair(public_key={self.public_key.hex()})"


def outer_sign(key: OuterKeyPair, message: bytes) -> bytes:
    der = key._key.sign(message, _ECDSA)
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def outer_verify(public_key: bytes, sig: bytes, message: bytes) -> bool:
    if len(sig) != DEFAULT_SUITE.outer_sig_len:
        return False
    try:
        pub = ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, bytes(public_key))
    except ValueError:
        return False
    r = int.from_bytes(sig[:32], "big")
    s = int.from_bytes(sig[32:], "big")
    if r == 0 or s == 0:
        return False
    try:
        pub.verify(encode_dss_signature(r, s), message, ec.ECDSA(hashes.SHA256()))
    except InvalidSignature:
        return False
    return True


def fingerprint(public_key: bytes) -> str:
    return hashlib.sha256(public_key).hexdigest()[:16]
