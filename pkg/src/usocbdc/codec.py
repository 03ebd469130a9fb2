"""Canonical tag-length-value encoding and the selector hash.

Every protocol object is a frozen dataclass that declares a numeric ``TAG``
and an ordered ``SCHEMA`` of ``(field_name, kind)`` pairs.  Encoding is

    object := tag:u16 || body_len:u32 || body
    body   := field_1 || field_2 || ...

with integers as fixed-width big-endian, variable-length byte strings
length-prefixed, digests as raw 32 bytes, optionals as a presence byte,
sequences as a count followed by items, and nested objects encoded whole.
The format is prefix-free, which makes it injective per schema.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Any, ClassVar, Union

Digest = bytes  # exactly 32 bytes

DIGEST_SIZE = 32
EMPTY_SHA256 = bytes.fromhex(
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
)


class CodecError(ValueError):
    pass


# ---- field kinds -----------------------------------------------------------

U64 = "u64"
BYTES = "bytes"
STR = "str"
BOOL = "bool"
DIGEST = "digest"


@dataclass(frozen=True)
class Opt:
    inner: Any


@dataclass(frozen=True)
class Seq:
    inner: Any


Kind = Union[str, Opt, Seq, type]

_REGISTRY: dict[int, type] = {}


def register(cls):
    """Class decorator: add a schema'd dataclass to the tag registry."""
    tag = cls.TAG
    if tag in _REGISTRY and _REGISTRY[tag] is not cls:
        raise CodecError(f"tag {tag} already used by {_REGISTRY[tag].__name__}")
    _REGISTRY[tag] = cls
    return cls


class Encodable:
    TAG: ClassVar[int]
    SCHEMA: ClassVar[tuple]

    def encode(self) -> bytes:
        return encode(self)

    def digest(self) -> Digest:
        return selector(self)


# ---- encoding --------------------------------------------------------------


def _enc_field(kind: Kind, value: Any, out: list[bytes]) -> None:
    if kind == U64:
        if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < 1 << 64:
            raise CodecError(f"u64 out of range: {value!r}")
        out.append(struct.pack(">Q", value))
    elif kind == BYTES:
        if not isinstance(value, (bytes, bytearray)):
            raise CodecError(f"expected bytes, got {type(value).__name__}")
        out.append(struct.pack(">I", len(value)))
        out.append(bytes(value))
    elif kind == STR:
        raw = value.encode("utf-8")
        out.append(struct.pack(">I", len(raw)))
        out.append(raw)
    elif kind == BOOL:
        out.append(b"\x01" if value else b"\x00")
    elif kind == DIGEST:
        if not isinstance(value, (bytes, bytearray)) or len(value) != DIGEST_SIZE:
            raise CodecError("digest must be exactly 32 bytes")
        out.append(bytes(value))
    elif isinstance(kind, Opt):
        if value is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            _enc_field(kind.inner, value, out)
    elif isinstance(kind, Seq):
        out.append(struct.pack(">I", len(value)))
        for item in value:
            _enc_field(kind.inner, item, out)
    elif isinstance(kind, type):
        if not isinstance(value, kind):
            raise CodecError(f"expected {kind.__name__}, got {type(value).__name__}")
        out.append(encode(value))
    else:
        raise CodecError(f"unknown field kind {kind!r}")


def encode(obj: Any) -> bytes:
    """Canonical bytes of a registered protocol object."""
    cls = type(obj)
    if _REGISTRY.get(getattr(cls, "TAG", None)) is not cls:
        raise CodecError(f"{cls.__name__} is not a registered protocol type")
    parts: list[bytes] = []
    for name, kind in cls.SCHEMA:
        _enc_field(kind, getattr(obj, name), parts)
    body = b"".join(parts)
    return struct.pack(">HI", cls.TAG, len(body)) + body


# ---- decoding --------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise CodecError("truncated input")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _dec_field(kind: Kind, r: _Reader) -> Any:
    if kind == U64:
        return struct.unpack(">Q", r.take(8))[0]
    if kind == BYTES:
        (n,) = struct.unpack(">I", r.take(4))
        return r.take(n)
    if kind == STR:
        (n,) = struct.unpack(">I", r.take(4))
        try:
            return r.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError("invalid utf-8") from exc
    if kind == BOOL:
        b = r.take(1)
        if b not in (b"\x00", b"\x01"):
            raise CodecError("non-canonical bool")
        return b == b"\x01"
    if kind == DIGEST:
        return r.take(DIGEST_SIZE)
    if isinstance(kind, Opt):
        flag = r.take(1)
        if flag == b"\x00":
            return None
        if flag != b"\x01":
            raise CodecError("non-canonical option flag")
        return _dec_field(kind.inner, r)
    if isinstance(kind, Seq):
        (n,) = struct.unpack(">I", r.take(4))
        return tuple(_dec_field(kind.inner, r) for _ in range(n))
    if isinstance(kind, type):
        obj = _dec_object(r)
        if not isinstance(obj, kind):
            raise CodecError(f"expected {kind.__name__}, got {type(obj).__name__}")
        return obj
    raise CodecError(f"unknown field kind {kind!r}")


def _dec_object(r: _Reader) -> Any:
    tag, length = struct.unpack(">HI", r.take(6))
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise CodecError(f"unknown type tag {tag}")
    end = r.pos + length
    if end > r.end:
        raise CodecError("truncated object body")
    sub = _Reader(r.data, r.pos, end)
    values = {name: _dec_field(kind, sub) for name, kind in cls.SCHEMA}
    if sub.pos != end:
        raise CodecError(f"trailing bytes inside {cls.__name__}")
    r.pos = end
    return cls(**values)


def decode(data: bytes, expect: type | None = None) -> Any:
    """Inverse of :func:`encode`.  Rejects trailing bytes."""
    r = _Reader(bytes(data))
    obj = _dec_object(r)
    if r.pos != len(r.data):
        raise CodecError("trailing bytes after object")
    if expect is not None and not isinstance(obj, expect):
        raise CodecError(f"expected {expect.__name__}, got {type(obj).__name__}")
    return obj


def selector(obj: Any) -> Digest:
    """SHA-256 over canonical bytes; raw ``bytes`` input is hashed as-is."""
    if isinstance(obj, (bytes, bytearray)):
        return hashlib.sha256(bytes(obj)).digest()
    return hashlib.sha256(encode(obj)).digest()


def sha256(*parts: bytes) -> Digest:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


def registered_types() -> dict[int, type]:
    return dict(_REGISTRY)
