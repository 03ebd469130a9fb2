"""RSA full-domain-hash blind signatures.

    blind:    b  = H(m) * r^e  mod n
    sign:     s' = b^d         mod n
    unblind:  s  = s' * r^-1   mod n      (so s = H(m)^d)
    verify:   s^e == H(m)      mod n

``H`` expands a SHA-256 counter stream to the byte length of ``n`` and
reduces mod ``n``.  Two parameter profiles are provided: ``REALISTIC_BITS``
for real runs and ``TEST_BITS`` for fast property tests.
"""

from __future__ import annotations

import base64
import hashlib
import math
import random
import secrets
import textwrap
from dataclasses import dataclass, field
from typing import ClassVar

import gmpy2

from .codec import BYTES, STR, U64, Digest, Encodable, decode, register, selector
from .sigs import Signature

REALISTIC_BITS = 2048
TEST_BITS = 512
PUBLIC_EXPONENT = 65537


class BlindSigError(Exception):
    pass


class InvalidFactor(BlindSigError):
    pass


def _i2b(x: int, size: int) -> bytes:
    return x.to_bytes(size, "big")


def _b2i(b: bytes) -> int:
    return int.from_bytes(b, "big")


@register
@dataclass(frozen=True)
class IssuerPublicKey(Encodable):
    TAG: ClassVar[int] = 0x0101
    SCHEMA: ClassVar[tuple] = (("modulus", BYTES), ("exponent", U64))

    modulus: bytes
    exponent: int

    @property
    def n(self) -> int:
        return _b2i(self.modulus)

    @property
    def size(self) -> int:
        return len(self.modulus)

    @property
    def id(self) -> Digest:
        return selector(self)


@register
@dataclass(frozen=True)
class IssuerSecretKey(Encodable):
    TAG: ClassVar[int] = 0x0102
    SCHEMA: ClassVar[tuple] = (
        ("plate_id", STR),
        ("denomination", U64),
        ("public", IssuerPublicKey),
        ("d", BYTES),
        ("p", BYTES),
        ("q", BYTES),
    )

    plate_id: str
    denomination: int
    public: IssuerPublicKey
    d: bytes = field(repr=False)
    p: bytes = field(repr=False)
    q: bytes = field(repr=False)


@dataclass(frozen=True)
class IssuerKeyPair:
    """Signing key for one denomination on one minting plate."""

    plate_id: str
    denomination: int
    public: IssuerPublicKey
    d: int = field(repr=False)
    p: int = field(repr=False)
    q: int = field(repr=False)

    @property
    def id(self) -> Digest:
        return self.public.id

    def to_secret(self) -> IssuerSecretKey:
        size = self.public.size
        return IssuerSecretKey(
            self.plate_id, self.denomination, self.public,
            _i2b(self.d, size), _i2b(self.p, size), _i2b(self.q, size),
        )

    @classmethod
    def from_secret(cls, sk: IssuerSecretKey) -> "IssuerKeyPair":
        return cls(sk.plate_id, sk.denomination, sk.public, _b2i(sk.d), _b2i(sk.p), _b2i(sk.q))


def _random_prime(bits: int, rng) -> int:
    while True:
        cand = rng.getrandbits(bits) | (0b11 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits and (p - 1) % PUBLIC_EXPONENT != 0:
            return p


def generate_keypair(
    plate_id: str,
    denomination: int,
    bits: int = REALISTIC_BITS,
    rng: random.Random | None = None,
) -> IssuerKeyPair:
    if denomination <= 0:
        raise ValueError("denomination must be positive")
    rng = rng if rng is not None else secrets.SystemRandom()
    while True:
        p = _random_prime(bits // 2, rng)
        q = _random_prime(bits - bits // 2, rng)
        n = p * q
        if p != q and n.bit_length() == bits:
            break
    phi = (p - 1) * (q - 1)
    d = pow(PUBLIC_EXPONENT, -1, phi)
    pub = IssuerPublicKey(_i2b(n, (bits + 7) // 8), PUBLIC_EXPONENT)
    return IssuerKeyPair(plate_id, denomination, pub, d, p, q)


def full_domain_hash(message: bytes, public: IssuerPublicKey) -> int:
    size = public.size
    out = b""
    counter = 0
    while len(out) < size:
        out += hashlib.sha256(b"USO-FDH" + counter.to_bytes(4, "big") + message).digest()
        counter += 1
    return _b2i(out[:size]) % public.n


@dataclass(frozen=True)
class BlindingFactor:
    """Wallet-private blinding scalar ``r``; valid iff 1 < r < n and gcd(r, n) = 1."""

    r: int = field(repr=False)

    @classmethod
    def sample(cls, public: IssuerPublicKey, rng=None) -> "BlindingFactor":
        rng = rng if rng is not None else secrets.SystemRandom()
        n = public.n
        while True:
            r = rng.randrange(2, n - 1)
            if math.gcd(r, n) == 1:
                return cls(r)

    def check(self, public: IssuerPublicKey) -> None:
        n = public.n
        if not 1 < self.r < n or math.gcd(self.r, n) != 1:
            raise InvalidFactor("blinding factor outside the multiplicative group mod n")


@dataclass(frozen=True)
class BlindedMessage:
    value: bytes
    issuer: Digest  # id of the public key it was blinded for


def blind(message: Digest, factor: BlindingFactor, issuer_public: IssuerPublicKey) -> BlindedMessage:
    factor.check(issuer_public)
    n = issuer_public.n
    b = full_domain_hash(message, issuer_public) * pow(factor.r, issuer_public.exponent, n) % n
    return BlindedMessage(_i2b(b, issuer_public.size), issuer_public.id)


def sign_blinded(blinded: BlindedMessage, key: IssuerKeyPair) -> Signature:
    """Raw RSA signature on the blinded value (CRT)."""
    if blinded.issuer != key.id:
        raise BlindSigError("blinded message was prepared for a different key")
    n = key.public.n
    b = _b2i(blinded.value)
    if not 0 <= b < n:
        raise BlindSigError("blinded value out of range")
    p, q, d = key.p, key.q, key.d
    sp = pow(b % p, d % (p - 1), p)
    sq = pow(b % q, d % (q - 1), q)
    s = (sq + q * ((sp - sq) * pow(q, -1, p) % p)) % n
    return Signature(_i2b(s, key.public.size), key.id)


def unblind(sig: Signature, factor: BlindingFactor, issuer_public: IssuerPublicKey) -> Signature:
    n = issuer_public.n
    s = _b2i(sig.value) * pow(factor.r, -1, n) % n
    return Signature(_i2b(s, issuer_public.size), sig.signer)


def verify(message: Digest, sig: Signature | None, public: IssuerPublicKey) -> bool:
    if sig is None or sig.signer != public.id or len(sig.value) != public.size:
        return False
    s = _b2i(sig.value)
    n = public.n
    if not 0 < s < n:
        return False
    return pow(s, public.exponent, n) == full_domain_hash(message, public)


# ---- key files -------------------------------------------------------------

_BEGIN = "-----BEGIN USO ISSUER {kind} KEY-----"
_END = "-----END USO ISSUER {kind} KEY-----"


def dump_key(key: IssuerKeyPair, secret: bool = True) -> str:
    kind = "SECRET" if secret else "PUBLIC"
    payload = key.to_secret().encode() if secret else key.public.encode()
    body = textwrap.fill(base64.b64encode(payload).decode(), 64)
    return "\n".join([
        _BEGIN.format(kind=kind),
        f"Plate-Id: {key.plate_id}",
        f"Denomination: {key.denomination}",
        "",
        body,
        _END.format(kind=kind),
        "",
    ])


def load_key(text: str):
    """Parse one key block.  Returns ``(headers, IssuerKeyPair | IssuerPublicKey)``."""
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if not lines or not lines[0].startswith("-----BEGIN USO ISSUER "):
        raise ValueError("not a USO issuer key block")
    secret = "SECRET" in lines[0]
    if lines[-1] != _END.format(kind="SECRET" if secret else "PUBLIC"):
        raise ValueError("unterminated key block")
    headers: dict[str, str] = {}
    body: list[str] = []
    for ln in lines[1:-1]:
        if ":" in ln and not body:
            k, v = ln.split(":", 1)
            headers[k.strip()] = v.strip()
        elif ln:
            body.append(ln)
    raw = base64.b64decode("".join(body))
    if secret:
        sk = decode(raw, IssuerSecretKey)
        if headers.get("Plate-Id") != sk.plate_id or int(headers.get("Denomination", -1)) != sk.denomination:
            raise ValueError("key headers disagree with key body")
        return headers, IssuerKeyPair.from_secret(sk)
    return headers, decode(raw, IssuerPublicKey)
