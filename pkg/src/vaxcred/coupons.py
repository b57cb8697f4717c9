"""Signed eligibility coupons and their distribution.

A coupon is a small signed payload (index, zip code, job type). It is
bearer-style: anyone holding it can attempt redemption, and the issuer's
registry enforces one-use semantics. Distributors hand coupons out in
index order against eligibility records; they never need the issuer key.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import canonical
from .crypto import KeyHandle, VerifyingKey, sha256, sign_canonical, verify_canonical
from .errors import (
    BatchExhaustedError,
    CanonicalError,
    InvalidJobTypeError,
    InvalidZipError,
    MismatchError,
    NotEligibleError,
)
from .config import DEFAULT_JOB_TYPES

_ZIP_RE = re.compile(r"^[0-9]{5}$")
_MAX_INDEX = 2 ** 64 - 1


@dataclass(frozen=True)
class CouponPayload:
    index: int
    zip_code: str
    job_type: str

    def __post_init__(self):
        if not isinstance(self.index, int) or isinstance(self.index, bool):
            raise CanonicalError("coupon index must be an integer")
        if not 0 <= self.index <= _MAX_INDEX:
            raise CanonicalError("coupon index out of range")
        if not isinstance(self.zip_code, str) or not _ZIP_RE.match(self.zip_code):
            raise InvalidZipError(f"bad zip code {self.zip_code!r}")
        if not isinstance(self.job_type, str) or not self.job_type:
            raise InvalidJobTypeError("job type must be non-empty text")

    def to_wire(self) -> dict:
        return {"index": self.index, "job": self.job_type, "zip": self.zip_code}

    @classmethod
    def from_wire(cls, obj) -> "CouponPayload":
        if not isinstance(obj, dict) or set(obj) != {"index", "job", "zip"}:
            raise CanonicalError("malformed coupon payload")
        return cls(index=obj["index"], zip_code=obj["zip"], job_type=obj["job"])


@dataclass(frozen=True)
class Coupon:
    payload: CouponPayload
    signature: bytes

    @property
    def coupon_id(self) -> bytes:
        return coupon_id(self.payload)

    def to_wire(self) -> dict:
        return {"payload": self.payload.to_wire(), "sig": self.signature}

    @classmethod
    def from_wire(cls, obj) -> "Coupon":
        if not isinstance(obj, dict) or set(obj) != {"payload", "sig"}:
            raise CanonicalError("malformed coupon")
        sig = obj["sig"]
        if not isinstance(sig, bytes) or len(sig) != 64:
            raise CanonicalError("bad coupon signature length")
        return cls(payload=CouponPayload.from_wire(obj["payload"]), signature=sig)

    def to_bytes(self) -> bytes:
        return canonical.encode(self.to_wire())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Coupon":
        return cls.from_wire(canonical.decode(data))


def coupon_id(payload: CouponPayload) -> bytes:
    """Stable identifier: hash of the canonical payload encoding."""
    return sha256(canonical.encode(payload.to_wire()))


def issue_coupon_batch(
    handle: KeyHandle,
    n: int,
    zip_code: str,
    job_type: str,
    *,
    registry=None,
    job_types=DEFAULT_JOB_TYPES,
    start_index: int = 0,
) -> list:
    """Sign `n` coupons with indices start_index..start_index+n-1.

    When a registry is supplied every fresh coupon id is pre-seeded as
    unused, so redemption can distinguish "unknown" from "unused".
    """
    if n < 1:
        raise CanonicalError("batch size must be >= 1")
    if job_type not in job_types:
        raise InvalidJobTypeError(f"unknown job type {job_type!r}")
    coupons = []
    for i in range(start_index, start_index + n):
        payload = CouponPayload(index=i, zip_code=zip_code, job_type=job_type)
        sig = sign_canonical(handle, payload.to_wire())
        coupons.append(Coupon(payload=payload, signature=sig))
    if registry is not None:
        for c in coupons:
            registry.register(c.coupon_id)
    return coupons


def verify_coupon(vk: VerifyingKey, coupon: Coupon) -> bool:
    """Total signature check; any malformation is just False."""
    try:
        return verify_canonical(vk, coupon.payload.to_wire(), coupon.signature)
    except Exception:
        return False


@dataclass(frozen=True)
class EligibilityRecord:
    subject_ref: str
    zip_code: str
    job_type: str
    approved: bool


@dataclass
class DistributorBatch:
    """Coupons awaiting hand-out, released strictly in ascending index order."""

    coupons: list
    released: set = field(default_factory=set)

    def __post_init__(self):
        indices = [c.payload.index for c in self.coupons]
        if len(set(indices)) != len(indices):
            raise CanonicalError("duplicate coupon index in batch")
        zips = {c.payload.zip_code for c in self.coupons}
        jobs = {c.payload.job_type for c in self.coupons}
        if len(zips) > 1 or len(jobs) > 1:
            raise MismatchError("batch mixes zip codes or job types")

    @property
    def zip_code(self) -> str:
        return self.coupons[0].payload.zip_code

    @property
    def job_type(self) -> str:
        return self.coupons[0].payload.job_type

    @property
    def remaining(self) -> int:
        return len(self.coupons) - len(self.released)

    def distribute(self, record: EligibilityRecord) -> Coupon:
        if not record.approved:
            raise NotEligibleError(f"record {record.subject_ref!r} not approved")
        if not self.coupons:
            raise BatchExhaustedError("batch is empty")
        if record.zip_code != self.zip_code or record.job_type != self.job_type:
            raise MismatchError(
                f"record ({record.zip_code}, {record.job_type}) does not match "
                f"batch ({self.zip_code}, {self.job_type})"
            )
        for c in sorted(self.coupons, key=lambda c: c.payload.index):
            if c.payload.index not in self.released:
                self.released.add(c.payload.index)
                return c
        raise BatchExhaustedError("all coupons already handed out")


def distribute(batch: DistributorBatch, record: EligibilityRecord) -> Coupon:
    return batch.distribute(record)
