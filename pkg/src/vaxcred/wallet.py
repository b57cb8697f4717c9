"""Holder-side wallet: credentials, consent-gated presentations, storage.

Two variants exist. A paper wallet holds printed artifacts — coupon,
badge, status, passkey — and can show the passkey only with explicit
consent. An app wallet additionally holds a keypair and the identity
hash tree, and discloses individual fields through tree proofs instead
of ever showing the passkey. A presentation contains exactly what the
holder consented to and nothing else.

Wallet files are encrypted with a passphrase; the file format is a
version byte, a KDF salt, an AEAD nonce, and the sealed body.
"""

from __future__ import annotations

import datetime as _dt
import enum
import os
from dataclasses import dataclass, field
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from . import canonical
from .credentials import (
    AppBinding,
    Badge,
    Commitment,
    Passkey,
    PasskeyHash,
    Status,
    TreeRoot,
    parse_date,
)
from .coupons import Coupon
from .crypto import KeyHandle, SALT_LEN, VerifyingKey, _passphrase_key
from .errors import (
    AuthFailureError,
    CanonicalError,
    ConsentDeniedError,
    EmptyRequestError,
    MismatchError,
    MissingCredentialError,
    NotApplicableError,
    VariantError,
)
from .merkle import DisclosureProof, PiiTree, build_pii_tree, prove_disclosure


class PresentationKind(enum.Enum):
    BADGE_ONLY = "badge-only"
    STATUS_ONLY = "status-only"
    STATUS_WITH_PASSKEY = "status+passkey"
    STATUS_WITH_DISCLOSURE = "status+disclosure"


@dataclass(frozen=True)
class DisclosureConsent:
    """Explicit holder consent; `labels` names the fields to disclose."""

    granted: bool
    labels: tuple = ()


@dataclass(frozen=True)
class Presentation:
    kind: PresentationKind
    status: Optional[Status] = None
    badge: Optional[Badge] = None
    passkey: Optional[Passkey] = None
    proof: Optional[DisclosureProof] = None

    def __post_init__(self):
        expected = {
            PresentationKind.BADGE_ONLY: ("badge",),
            PresentationKind.STATUS_ONLY: ("status",),
            PresentationKind.STATUS_WITH_PASSKEY: ("status", "passkey"),
            PresentationKind.STATUS_WITH_DISCLOSURE: ("status", "proof"),
        }[self.kind]
        for name in ("status", "badge", "passkey", "proof"):
            value = getattr(self, name)
            if name in expected and value is None:
                raise MissingCredentialError(f"{self.kind.value} needs {name}")
            if name not in expected and value is not None:
                raise CanonicalError(f"{self.kind.value} must not carry {name}")

    def to_wire(self) -> dict:
        wire = {"kind": self.kind.value}
        if self.status is not None:
            wire["status"] = self.status.to_wire()
        if self.badge is not None:
            wire["badge"] = self.badge.to_wire()
        if self.passkey is not None:
            wire["passkey"] = self.passkey.to_wire()
        if self.proof is not None:
            wire["proof"] = self.proof.to_wire()
        return wire

    @classmethod
    def from_wire(cls, obj) -> "Presentation":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise CanonicalError("malformed presentation")
        try:
            kind = PresentationKind(obj["kind"])
        except ValueError:
            raise CanonicalError(f"unknown presentation kind {obj['kind']!r}") from None
        parts = {"status": Status, "badge": Badge, "passkey": Passkey,
                 "proof": DisclosureProof}
        kwargs = {}
        for name, typ in parts.items():
            if name in obj:
                kwargs[name] = typ.from_wire(obj[name])
        if set(obj) - {"kind"} != set(kwargs):
            raise CanonicalError("malformed presentation")
        return cls(kind=kind, **kwargs)

    def to_bytes(self) -> bytes:
        return canonical.encode(self.to_wire())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Presentation":
        return cls.from_wire(canonical.decode(data))


@dataclass
class WalletState:
    variant: str  # "paper" | "app"
    coupon: Optional[Coupon] = None
    badge: Optional[Badge] = None
    status: Optional[Status] = None
    passkey: Optional[Passkey] = None
    key: Optional[KeyHandle] = None
    pii_tree: Optional[PiiTree] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in ("paper", "app"):
            raise VariantError(f"unknown wallet variant {self.variant!r}")
        if self.variant == "paper":
            if self.key is not None or self.pii_tree is not None:
                raise VariantError("paper wallet cannot hold a key or hash tree")
            if self.badge is not None and not isinstance(
                self.badge.info.binding, Commitment
            ):
                raise VariantError("paper wallet badge must use a commitment binding")
        else:
            if self.passkey is not None:
                raise VariantError("app wallet never holds a passkey")
            if self.key is None or self.pii_tree is None:
                raise VariantError("app wallet needs a key and a hash tree")
            if self.badge is not None:
                binding = self.badge.info.binding
                if not isinstance(binding, TreeRoot):
                    raise VariantError("app wallet badge must use a tree-root binding")
                if binding.digest != self.pii_tree.root:
                    raise MismatchError("badge tree root differs from wallet tree")
        if self.badge is not None and self.coupon is not None:
            if self.badge.info.coupon != self.coupon:
                raise MismatchError("badge was issued against a different coupon")

    @property
    def verifying_key(self) -> Optional[VerifyingKey]:
        return self.key.verifying_key if self.key is not None else None

    @property
    def dose_dates(self) -> tuple:
        if self.badge is None:
            return ()
        return tuple(d.date for d in self.badge.info.dose_history)


def wallet_init_paper(coupon: Optional[Coupon] = None) -> WalletState:
    return WalletState(variant="paper", coupon=coupon)


def wallet_init_app(pii_entries, coupon: Optional[Coupon] = None,
                    rng=None) -> WalletState:
    """Fresh app wallet: generates the holder keypair and the hash tree."""
    from .crypto import generate_keypair

    handle, _ = generate_keypair(rng)
    tree = build_pii_tree(pii_entries, rng=rng)
    return WalletState(variant="app", coupon=coupon, key=handle, pii_tree=tree)


def store_credentials(state: WalletState, badge: Badge, status: Status,
                      passkey: Optional[Passkey] = None) -> None:
    """Accept freshly issued artifacts into the wallet (first or second dose)."""
    state.badge = badge
    state.status = status
    if state.variant == "paper":
        if passkey is None and state.passkey is None:
            raise MissingCredentialError("paper wallet needs its passkey")
        if passkey is not None:
            if passkey.commitment() != badge.info.binding.digest:
                raise MismatchError("passkey does not open the badge commitment")
            state.passkey = passkey
    elif passkey is not None:
        raise VariantError("app wallet never holds a passkey")
    state.validate()


def present(state: WalletState, kind: PresentationKind,
            consent: Optional[DisclosureConsent] = None) -> Presentation:
    """Build a presentation containing exactly the consented material."""
    if kind is PresentationKind.BADGE_ONLY:
        if state.badge is None:
            raise MissingCredentialError("no badge in wallet")
        return Presentation(kind=kind, badge=state.badge)
    if state.status is None:
        raise MissingCredentialError("no status in wallet")
    if kind is PresentationKind.STATUS_ONLY:
        return Presentation(kind=kind, status=state.status)
    if kind is PresentationKind.STATUS_WITH_PASSKEY:
        if state.variant != "paper":
            raise VariantError("passkey presentations are paper-wallet only")
        if state.passkey is None:
            raise MissingCredentialError("no passkey in wallet")
        if consent is None or not consent.granted:
            raise ConsentDeniedError("holder did not consent to show the passkey")
        return Presentation(kind=kind, status=state.status, passkey=state.passkey)
    if kind is PresentationKind.STATUS_WITH_DISCLOSURE:
        if state.variant != "app":
            raise VariantError("tree disclosures are app-wallet only")
        if consent is None or not consent.granted:
            raise ConsentDeniedError("holder did not consent to disclose fields")
        if not consent.labels:
            raise EmptyRequestError("consent names no fields")
        proof = prove_disclosure(state.pii_tree, consent.labels)
        return Presentation(kind=kind, status=state.status, proof=proof)
    raise CanonicalError(f"unknown presentation kind {kind!r}")


def second_dose_due(state: WalletState, today, interval_days: int = 21):
    """(due?, days since dose 1). Raises if the course is complete or empty."""
    if state.badge is None:
        raise MissingCredentialError("no badge in wallet")
    history = state.badge.info.dose_history
    if len(history) != 1:
        raise NotApplicableError("vaccination course already complete")
    if isinstance(today, str):
        today = parse_date(today)
    elif not isinstance(today, _dt.date):
        raise CanonicalError("today must be a date or ISO text")
    days = (today - parse_date(history[0].date)).days
    return days >= interval_days, days


# -- persistence -------------------------------------------------------------

_WALLET_VERSION = b"\x01"
_WALLET_INFO = b"vaxcred wallet v1"


def _wallet_wire(state: WalletState, passphrase: str) -> dict:
    wire = {"variant": state.variant}
    if state.coupon is not None:
        wire["coupon"] = state.coupon.to_wire()
    if state.badge is not None:
        wire["badge"] = state.badge.to_wire()
    if state.status is not None:
        wire["status"] = state.status.to_wire()
    if state.passkey is not None:
        wire["passkey"] = state.passkey.to_wire()
    if state.key is not None:
        wire["key"] = state.key.seal(passphrase)
    if state.pii_tree is not None:
        wire["leaves"] = [[l, v, s] for l, v, s in state.pii_tree.leaves]
    return wire


def _wallet_from_wire(obj: dict, passphrase: str) -> WalletState:
    if not isinstance(obj, dict) or "variant" not in obj:
        raise CanonicalError("malformed wallet body")
    allowed = {"variant", "coupon", "badge", "status", "passkey", "key", "leaves"}
    if set(obj) - allowed:
        raise CanonicalError("malformed wallet body")
    tree = None
    if "leaves" in obj:
        leaves = [(l, v, s) for l, v, s in obj["leaves"]]
        tree = PiiTree.from_leaves(leaves)
    return WalletState(
        variant=obj["variant"],
        coupon=Coupon.from_wire(obj["coupon"]) if "coupon" in obj else None,
        badge=Badge.from_wire(obj["badge"]) if "badge" in obj else None,
        status=Status.from_wire(obj["status"]) if "status" in obj else None,
        passkey=Passkey.from_wire(obj["passkey"]) if "passkey" in obj else None,
        key=KeyHandle.unseal(obj["key"], passphrase) if "key" in obj else None,
        pii_tree=tree,
    )


def save_wallet(state: WalletState, path, passphrase: str) -> None:
    body = canonical.encode(_wallet_wire(state, passphrase))
    kdf_salt = os.urandom(SALT_LEN)
    nonce = os.urandom(12)
    key = _passphrase_key(passphrase, kdf_salt)
    sealed = ChaCha20Poly1305(key).encrypt(nonce, body, _WALLET_INFO)
    with open(path, "wb") as fh:
        fh.write(_WALLET_VERSION + kdf_salt + nonce + sealed)


def load_wallet(path, passphrase: str) -> WalletState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 1 + SALT_LEN + 12 + 16 or blob[:1] != _WALLET_VERSION:
        raise CanonicalError("not a wallet file")
    kdf_salt = blob[1 : 1 + SALT_LEN]
    nonce = blob[1 + SALT_LEN : 1 + SALT_LEN + 12]
    sealed = blob[1 + SALT_LEN + 12 :]
    key = _passphrase_key(passphrase, kdf_salt)
    try:
        body = ChaCha20Poly1305(key).decrypt(nonce, sealed, _WALLET_INFO)
    except InvalidTag as exc:
        raise AuthFailureError("wrong passphrase or corrupted wallet") from exc
    return _wallet_from_wire(canonical.decode(body), passphrase)
