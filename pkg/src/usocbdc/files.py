"""Armoured text files for assets and trust roots.

The body is the canonical encoding in hex.  Asset files may also be given
as a bare hex string or as the raw canonical bytes.
"""

from __future__ import annotations

import textwrap

from .asset import Asset
from .codec import decode
from .commitments import TrustRoots


def armor(kind: str, payload: bytes, headers: dict | None = None) -> str:
    lines = [f"-----BEGIN USO {kind}-----"]
    for k, v in (headers or {}).items():
        lines.append(f"{k}: {v}")
    if headers:
        lines.append("")
    lines.append(textwrap.fill(payload.hex(), 64))
    lines.append(f"-----END USO {kind}-----")
    return "\n".join(lines) + "\n"


def unarmor(text: str, kind: str) -> tuple[dict, bytes]:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if not lines or lines[0] != f"-----BEGIN USO {kind}-----" or lines[-1] != f"-----END USO {kind}-----":
        raise ValueError(f"not a USO {kind.lower()} file")
    headers: dict[str, str] = {}
    body: list[str] = []
    for ln in lines[1:-1]:
        if ":" in ln and not body:
            k, v = ln.split(":", 1)
            headers[k.strip()] = v.strip()
        elif ln:
            body.append(ln)
    try:
        return headers, bytes.fromhex("".join(body))
    except ValueError as exc:
        raise ValueError(f"corrupt hex body: {exc}") from None


def dump_asset(asset: Asset) -> str:
    return armor("ASSET", asset.encode(), {"Denomination": asset.value, "Hops": asset.hops})


def load_asset(data: str | bytes) -> Asset:
    """Accepts an armoured file, bare hex, or raw canonical bytes."""
    if isinstance(data, bytes):
        if not data.lstrip().startswith(b"-----BEGIN"):
            try:
                return load_asset(data.decode("ascii"))
            except (UnicodeDecodeError, ValueError):
                return decode(data, Asset)
        data = data.decode("ascii")
    if data.lstrip().startswith("-----BEGIN"):
        _, raw = unarmor(data, "ASSET")
    else:
        raw = bytes.fromhex("".join(data.split()))
    return decode(raw, Asset)


def dump_roots(roots: TrustRoots) -> str:
    return armor("TRUST ROOTS", roots.encode(), {"Integrity-Root": roots.integrity_root})


def load_roots(text: str) -> TrustRoots:
    _, raw = unarmor(text, "TRUST ROOTS")
    return decode(raw, TrustRoots)
