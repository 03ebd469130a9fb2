"""Relay commitment objects and the checks a third party can run on them
without talking to any relay."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import ClassVar

from . import merkle, sigs
from .codec import BYTES, DIGEST, STR, U64, Digest, Encodable, Seq, encode, register, selector
from .sigs import Signature

ZERO_DIGEST = bytes(32)


@register
@dataclass(frozen=True)
class CycleEntry(Encodable):
    TAG: ClassVar[int] = 0x0201
    SCHEMA: ClassVar[tuple] = (("state_digest", DIGEST), ("successor_digest", DIGEST))

    state_digest: Digest
    successor_digest: Digest

    def leaf(self) -> Digest:
        return merkle.leaf_hash(encode(self))


@register
@dataclass(frozen=True)
class PathStep(Encodable):
    TAG: ClassVar[int] = 0x0202
    SCHEMA: ClassVar[tuple] = (("sibling", DIGEST), ("side", U64))

    sibling: Digest
    side: int


@register
@dataclass(frozen=True)
class InclusionProof(Encodable):
    TAG: ClassVar[int] = 0x0203
    SCHEMA: ClassVar[tuple] = (
        ("leaf", CycleEntry),
        ("path", Seq(PathStep)),
        ("relay_id", STR),
        ("sequence", U64),
    )

    leaf: CycleEntry
    path: tuple
    relay_id: str
    sequence: int

    def computed_root(self) -> Digest:
        return merkle.fold(self.leaf.leaf(), ((s.sibling, s.side) for s in self.path))


@register
@dataclass(frozen=True)
class RelayCommitment(Encodable):
    TAG: ClassVar[int] = 0x0204
    SCHEMA: ClassVar[tuple] = (
        ("relay_id", STR),
        ("sequence", U64),
        ("previous", DIGEST),
        ("batch_root", DIGEST),
        ("timestamp", U64),
        ("n_entries", U64),
        ("endorsements", Seq(Signature)),
    )

    relay_id: str
    sequence: int
    previous: Digest
    batch_root: Digest
    timestamp: int
    n_entries: int
    endorsements: tuple = ()

    def body(self) -> "RelayCommitment":
        return replace(self, endorsements=())

    @property
    def id(self) -> Digest:
        """Digest of the unendorsed body; what chains, anchors and aggregates use."""
        return selector(self.body())

    def ledger_line(self) -> str:
        return (
            f"{self.relay_id} {self.sequence} {self.previous.hex()} "
            f"{self.batch_root.hex()} {self.n_entries} {len(self.endorsements)}"
        )


@register
@dataclass(frozen=True)
class RelayTrust(Encodable):
    TAG: ClassVar[int] = 0x0205
    SCHEMA: ClassVar[tuple] = (
        ("relay_id", STR),
        ("endorsers", Seq(BYTES)),
        ("quorum", U64),
        ("parent", STR),
    )

    relay_id: str
    endorsers: tuple
    quorum: int
    parent: str = ""


@register
@dataclass(frozen=True)
class TrustRoots(Encodable):
    """Everything an offline verifier needs: the issuer root key and the
    endorser sets of every relay in the hierarchy."""

    TAG: ClassVar[int] = 0x0206
    SCHEMA: ClassVar[tuple] = (
        ("issuer_root", BYTES),
        ("integrity_root", STR),
        ("relays", Seq(RelayTrust)),
    )

    issuer_root: bytes
    integrity_root: str
    relays: tuple

    def relay(self, relay_id: str) -> RelayTrust | None:
        for r in self.relays:
            if r.relay_id == relay_id:
                return r
        return None


def slot_key(relay_id: str, sequence: int) -> Digest:
    """Parent-relay index key for a child commitment position.

    Using the position as the ``state_digest`` makes the parent's
    first-write-wins rule refuse a second commitment for the same child
    sequence, which is how a parent notices a forking child.
    """
    return selector(b"CHILD-SLOT\x00" + relay_id.encode() + b"\x00" + sequence.to_bytes(8, "big"))


def aggregation_entry(child: RelayCommitment) -> CycleEntry:
    return CycleEntry(slot_key(child.relay_id, child.sequence), child.id)


def endorsement_count(c: RelayCommitment, trust: RelayTrust) -> int:
    msg = c.id
    valid = set()
    for sig in c.endorsements:
        for pub in trust.endorsers:
            if pub not in valid and sigs.verify(pub, msg, sig):
                valid.add(pub)
                break
    return len(valid)


def commitment_endorsed(c: RelayCommitment, roots: TrustRoots) -> bool:
    """Quorum met and every carried endorsement valid, so that a verified
    commitment has no malleable bytes."""
    trust = roots.relay(c.relay_id)
    if trust is None:
        return False
    n = endorsement_count(c, trust)
    return n == len(c.endorsements) and n >= trust.quorum


def proof_matches(proof: InclusionProof, c: RelayCommitment) -> bool:
    return (
        proof.relay_id == c.relay_id
        and proof.sequence == c.sequence
        and proof.computed_root() == c.batch_root
    )


@register
@dataclass(frozen=True)
class EquivocationEvidence(Encodable):
    TAG: ClassVar[int] = 0x0207
    SCHEMA: ClassVar[tuple] = (("first", RelayCommitment), ("second", RelayCommitment))

    first: RelayCommitment
    second: RelayCommitment


def detect_equivocation(a: RelayCommitment, b: RelayCommitment) -> EquivocationEvidence | None:
    if a.relay_id != b.relay_id or a.sequence != b.sequence:
        return None
    if a.batch_root == b.batch_root and a.previous == b.previous:
        return None
    first, second = sorted((a, b), key=lambda c: c.id)
    return EquivocationEvidence(first, second)


def verify_evidence(ev: EquivocationEvidence, roots: TrustRoots) -> bool:
    """Accept iff both commitments are quorum-endorsed and genuinely conflict."""
    a, b = ev.first, ev.second
    if a.relay_id != b.relay_id or a.sequence != b.sequence:
        return False
    if a.batch_root == b.batch_root and a.previous == b.previous:
        return False
    return commitment_endorsed(a, roots) and commitment_endorsed(b, roots)


def check_chain(commitments: list[RelayCommitment]) -> bool:
    """True iff the commitments form one unbroken previous-linked chain."""
    for prev, cur in zip(commitments, commitments[1:]):
        if cur.relay_id != prev.relay_id or cur.sequence != prev.sequence + 1 or cur.previous != prev.id:
            return False
    return True
