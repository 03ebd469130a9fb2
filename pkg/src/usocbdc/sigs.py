"""Ordinary (non-blind) signatures: owner authorisations, endorsements,
certificates and ledger records.  Ed25519 keys, derived from caller-supplied
randomness so seeded simulations stay reproducible."""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass, field
from typing import ClassVar

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from .codec import BYTES, DIGEST, Digest, Encodable, register, selector


@register
@dataclass(frozen=True)
class Signature(Encodable):
    """A signature value together with the digest of the signer's public key."""

    TAG: ClassVar[int] = 0x0001
    SCHEMA: ClassVar[tuple] = (("value", BYTES), ("signer", DIGEST))

    value: bytes
    signer: Digest


def key_id(public: bytes) -> Digest:
    return selector(public)


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 key pair.  ``public`` is the raw 32-byte key."""

    secret: bytes = field(repr=False)
    public: bytes

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "KeyPair":
        seed = rng.randbytes(32) if rng is not None else secrets.token_bytes(32)
        return cls.from_seed(seed)

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        pub = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return cls(secret=seed, public=pub)

    @property
    def id(self) -> Digest:
        return key_id(self.public)

    def sign(self, message: bytes) -> Signature:
        sk = Ed25519PrivateKey.from_private_bytes(self.secret)
        return Signature(value=sk.sign(message), signer=self.id)


def verify(public: bytes, message: bytes, sig: Signature | None) -> bool:
    if sig is None or sig.signer != key_id(public):
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig.value, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def secret_matches(secret: bytes, public: bytes) -> bool:
    try:
        return KeyPair.from_seed(secret).public == public
    except ValueError:
        return False


def private_pem(kp: KeyPair) -> bytes:
    sk = Ed25519PrivateKey.from_private_bytes(kp.secret)
    return sk.private_bytes(Encoding.PEM, PrivateFormat.PKCS8, NoEncryption())
