"""Croppable signatures for JPEG images, with a per-block baseline for comparison."""

from cropsig.baseline import (
    BaselineCroppedSignature,
    BaselineFullSignature,
    baseline_crop,
    baseline_sign_full,
    baseline_verify,
    baseline_verify_full,
)
from cropsig.crypto_core import DEFAULT_SUITE, OuterKeyPair, PairingSuite, count_pairings
from cropsig.scheme import (
    BlockGrid,
    CroppedSignature,
    CropRect,
    FullSignature,
    SignatureFormatError,
    VerificationError,
    crop_signature,
    locate_bad_blocks,
    sign_full,
    verify_cropped,
    verify_full,
)
from cropsig.workflow import crop_image, crop_jpeg, sign_image, sign_jpeg, verify_image, verify_jpeg

__version__ = "0.1.0"

__all__ = [
    "BaselineCroppedSignature",
    "BaselineFullSignature",
    "BlockGrid",
    "CropRect",
    "CroppedSignature",
    "DEFAULT_SUITE",
    "FullSignature",
    "OuterKeyPair",
    "PairingSuite",
    "SignatureFormatError",
    "VerificationError",
    "baseline_crop",
    "baseline_sign_full",
    "baseline_verify",
    "baseline_verify_full",
    "count_pairings",
    "crop_image",
    "crop_jpeg",
    "crop_signature",
    "locate_bad_blocks",
    "sign_full",
    "sign_image",
    "sign_jpeg",
    "verify_cropped",
    "verify_full",
    "verify_image",
    "verify_jpeg",
]
