"""USO assets: a genesis record, a hash-chained list of owner-signed
updates, and a proof of provenance that anchors every update in a relay
commitment (optionally all the way up to the integrity root).

Verification here is a pure function of the asset bytes and a
:class:`~usocbdc.commitments.TrustRoots`; it never contacts a relay, minter
or bank.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import ClassVar

from . import blindsig, sigs
from .blindsig import IssuerPublicKey
from .codec import BYTES, DIGEST, STR, U64, Digest, Encodable, Opt, Seq, encode, register, selector, sha256
from .commitments import (
    CycleEntry,
    InclusionProof,
    RelayCommitment,
    TrustRoots,
    aggregation_entry,
    commitment_endorsed,
    proof_matches,
)
from .sigs import KeyPair, Signature

GLOBALLY_FINAL = "globally final"
LOCALLY_FINAL = "locally final, globally pending"
PENDING = "pending anchoring"
INVALID = "invalid"


class AssetError(Exception):
    pass


class BadCertificate(AssetError):
    pass


class NotOwner(AssetError):
    pass


class MissingValiditySignature(AssetError):
    pass


class InvalidValiditySignature(AssetError):
    pass


class LockedState(AssetError):
    """The current state is hash-locked and no matching secret was supplied."""


# ---- records ---------------------------------------------------------------


@register
@dataclass(frozen=True)
class PlateCertificate(Encodable):
    """The issuer root's statement that ``plate_key`` signs ``denomination``."""

    TAG: ClassVar[int] = 0x0301
    SCHEMA: ClassVar[tuple] = (
        ("plate_id", STR),
        ("denomination", U64),
        ("plate_key", IssuerPublicKey),
        ("expiry", U64),
        ("signature", Opt(Signature)),
    )

    plate_id: str
    denomination: int
    plate_key: IssuerPublicKey
    expiry: int
    signature: Signature | None = None

    def body_bytes(self) -> bytes:
        return encode(replace(self, signature=None))


def certify_plate(root: KeyPair, plate_id: str, denomination: int, plate_key: IssuerPublicKey, expiry: int) -> PlateCertificate:
    unsigned = PlateCertificate(plate_id, denomination, plate_key, expiry)
    return replace(unsigned, signature=root.sign(unsigned.body_bytes()))


def certificate_valid(cert: PlateCertificate, issuer_root: bytes) -> bool:
    return sigs.verify(issuer_root, cert.body_bytes(), cert.signature)


@register
@dataclass(frozen=True)
class GenesisRecord(Encodable):
    TAG: ClassVar[int] = 0x0302
    SCHEMA: ClassVar[tuple] = (
        ("owner_public_key", BYTES),
        ("home_relay", STR),
        ("relay_anchor", DIGEST),
        ("denomination_certificate", PlateCertificate),
        ("denomination", U64),
    )

    owner_public_key: bytes
    home_relay: str
    relay_anchor: Digest
    denomination_certificate: PlateCertificate
    denomination: int


@register
@dataclass(frozen=True)
class AssetUpdate(Encodable):
    TAG: ClassVar[int] = 0x0303
    SCHEMA: ClassVar[tuple] = (
        ("previous_state", DIGEST),
        ("validity_signature", Opt(Signature)),
        ("new_owner_public_key", BYTES),
        ("recipient_commitment", Opt(DIGEST)),
        ("owner_lock", Opt(DIGEST)),
        ("unlock_secret", Opt(BYTES)),
        ("owner_authorization", Opt(Signature)),
    )

    previous_state: Digest
    validity_signature: Signature | None
    new_owner_public_key: bytes
    recipient_commitment: Digest | None = None
    owner_lock: Digest | None = None  # new owner must also reveal the preimage
    unlock_secret: bytes | None = None  # preimage of the previous state's lock
    owner_authorization: Signature | None = None

    def body_bytes(self) -> bytes:
        return encode(replace(self, owner_authorization=None))


@register
@dataclass(frozen=True)
class AggregationLink(Encodable):
    """Proof that a child commitment was absorbed by a parent relay."""

    TAG: ClassVar[int] = 0x0304
    SCHEMA: ClassVar[tuple] = (("inclusion", InclusionProof), ("commitment", RelayCommitment))

    inclusion: InclusionProof
    commitment: RelayCommitment


@register
@dataclass(frozen=True)
class ProofStep(Encodable):
    TAG: ClassVar[int] = 0x0305
    SCHEMA: ClassVar[tuple] = (
        ("inclusion", InclusionProof),
        ("commitment", RelayCommitment),
        ("aggregation", Seq(AggregationLink)),
    )

    inclusion: InclusionProof
    commitment: RelayCommitment
    aggregation: tuple = ()


@register
@dataclass(frozen=True)
class ProofOfProvenance(Encodable):
    TAG: ClassVar[int] = 0x0306
    SCHEMA: ClassVar[tuple] = (("anchor", RelayCommitment), ("steps", Seq(ProofStep)))

    anchor: RelayCommitment
    steps: tuple = ()


@register
@dataclass(frozen=True)
class Asset(Encodable):
    TAG: ClassVar[int] = 0x0307
    SCHEMA: ClassVar[tuple] = (
        ("genesis", GenesisRecord),
        ("updates", Seq(AssetUpdate)),
        ("proof", ProofOfProvenance),
    )

    genesis: GenesisRecord
    updates: tuple
    proof: ProofOfProvenance

    @property
    def value(self) -> int:
        return self.genesis.denomination

    @property
    def plate_id(self) -> str:
        return self.genesis.denomination_certificate.plate_id

    @property
    def hops(self) -> int:
        return len(self.updates)

    @property
    def genesis_digest(self) -> Digest:
        return selector(self.genesis)

    @property
    def first_update_digest(self) -> Digest | None:
        return selector(self.updates[0]) if self.updates else None

    def state_digests(self) -> list[Digest]:
        return [selector(self.genesis)] + [selector(u) for u in self.updates]

    @property
    def state_digest(self) -> Digest:
        return selector(self.updates[-1]) if self.updates else selector(self.genesis)

    @property
    def owner_key(self) -> bytes:
        return self.updates[-1].new_owner_public_key if self.updates else self.genesis.owner_public_key

    @property
    def owner_lock(self) -> Digest | None:
        return self.updates[-1].owner_lock if self.updates else None

    def pending_entry(self) -> CycleEntry | None:
        """The relay entry for the newest update, if it is not yet anchored."""
        if len(self.proof.steps) >= len(self.updates):
            return None
        states = self.state_digests()
        i = len(self.proof.steps)
        return CycleEntry(states[i], states[i + 1])

    def with_update(self, update: AssetUpdate) -> "Asset":
        return replace(self, updates=self.updates + (update,))

    def with_step(self, step: ProofStep) -> "Asset":
        return replace(self, proof=replace(self.proof, steps=self.proof.steps + (step,)))

    def with_steps(self, steps) -> "Asset":
        return replace(self, proof=replace(self.proof, steps=tuple(steps)))


def lock_for(secret: bytes) -> Digest:
    return sha256(b"USO-LOCK\x00", secret)


# ---- operations ------------------------------------------------------------


def create_genesis(
    wallet_key: KeyPair,
    home_relay: str,
    relay_anchor: Digest,
    denom_cert: PlateCertificate,
    denomination: int,
    issuer_root: bytes,
) -> GenesisRecord:
    if not certificate_valid(denom_cert, issuer_root):
        raise BadCertificate("certificate does not verify under the issuer root key")
    if denom_cert.denomination != denomination:
        raise BadCertificate(
            f"certificate is for denomination {denom_cert.denomination}, asked for {denomination}"
        )
    return GenesisRecord(wallet_key.public, home_relay, relay_anchor, denom_cert, denomination)


def privacy_lint(records) -> list[str]:
    """Flag owner keys shared between distinct geneses (linkable spending)."""
    counts = Counter(r.owner_public_key for r in records)
    return [f"owner key {k.hex()[:16]} reused across {n} assets" for k, n in sorted(counts.items()) if n > 1]


def new_asset(genesis: GenesisRecord, anchor: RelayCommitment) -> Asset:
    return Asset(genesis, (), ProofOfProvenance(anchor))


def create_transfer(
    asset: Asset,
    validity_sig: Signature | None,
    recipient_key: bytes,
    recipient_commitment: Digest | None,
    owner: KeyPair,
    owner_lock: Digest | None = None,
    unlock_secret: bytes | None = None,
) -> AssetUpdate:
    if owner.public != asset.owner_key:
        raise NotOwner("signing key does not own the current state")
    lock = asset.owner_lock
    if lock is not None and (unlock_secret is None or lock_for(unlock_secret) != lock):
        raise LockedState("current state is locked; the payer has not revealed its secret")
    if not asset.updates:
        if validity_sig is None:
            raise MissingValiditySignature("the first update must carry the plate's validity signature")
        plate_key = asset.genesis.denomination_certificate.plate_key
        if not blindsig.verify(asset.genesis_digest, validity_sig, plate_key):
            raise InvalidValiditySignature("validity signature does not verify on the genesis record")
    else:
        validity_sig = None
    update = AssetUpdate(
        previous_state=asset.state_digest,
        validity_signature=validity_sig,
        new_owner_public_key=recipient_key,
        recipient_commitment=recipient_commitment,
        owner_lock=owner_lock,
        unlock_secret=unlock_secret if lock is not None else None,
    )
    return replace(update, owner_authorization=owner.sign(update.body_bytes()))


# ---- verification ----------------------------------------------------------


@dataclass
class VerificationReport:
    denomination: int
    certificate_ok: bool = False
    anchor_ok: bool = False
    validity_ok: bool = False
    chain_ok: bool = False
    anchoring: list[str] = field(default_factory=list)  # per update: anchored | missing | bad
    aggregation: list[str] = field(default_factory=list)  # per update: root | local
    findings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.finality in (GLOBALLY_FINAL, LOCALLY_FINAL)

    @property
    def finality(self) -> str:
        if not (self.certificate_ok and self.anchor_ok and self.validity_ok and self.chain_ok):
            return INVALID
        if "bad" in self.anchoring:
            return INVALID
        if "missing" in self.anchoring:
            return PENDING
        if all(a == "root" for a in self.aggregation):
            return GLOBALLY_FINAL
        return LOCALLY_FINAL

    def as_dict(self) -> dict:
        return {
            "finality": self.finality,
            "passed": self.passed,
            "denomination": self.denomination,
            "certificate_ok": self.certificate_ok,
            "anchor_ok": self.anchor_ok,
            "validity_ok": self.validity_ok,
            "chain_ok": self.chain_ok,
            "anchoring": list(self.anchoring),
            "aggregation": list(self.aggregation),
            "findings": list(self.findings),
        }


def _aggregation_status(step: ProofStep, roots: TrustRoots, report: VerificationReport, i: int) -> str:
    child = step.commitment
    current = roots.relay(child.relay_id)
    if child.relay_id == roots.integrity_root:
        return "root"
    for link in step.aggregation:
        parent_id = current.parent if current is not None else ""
        if not parent_id or link.commitment.relay_id != parent_id:
            report.findings.append(f"update {i + 1}: aggregation link to unexpected relay {link.commitment.relay_id!r}")
            return "local"
        if link.inclusion.leaf != aggregation_entry(child):
            report.findings.append(f"update {i + 1}: aggregation leaf does not name the child commitment")
            return "local"
        if not proof_matches(link.inclusion, link.commitment) or not commitment_endorsed(link.commitment, roots):
            report.findings.append(f"update {i + 1}: aggregation proof into {parent_id!r} does not verify")
            return "local"
        child = link.commitment
        current = roots.relay(parent_id)
        if child.relay_id == roots.integrity_root:
            return "root"
    return "local"


def verify_asset(asset: Asset, trust_roots: TrustRoots) -> VerificationReport:
    g = asset.genesis
    rep = VerificationReport(denomination=g.denomination)
    cert = g.denomination_certificate

    rep.certificate_ok = certificate_valid(cert, trust_roots.issuer_root) and cert.denomination == g.denomination
    if not rep.certificate_ok:
        rep.findings.append("denomination certificate invalid or mismatched")

    anchor = asset.proof.anchor
    rep.anchor_ok = (
        anchor.id == g.relay_anchor
        and anchor.relay_id == g.home_relay
        and commitment_endorsed(anchor, trust_roots)
    )
    if not rep.anchor_ok:
        rep.findings.append("genesis relay anchor is not an endorsed commitment of the home relay")

    if not asset.updates:
        rep.findings.append("no updates: validity signature never attached")
    else:
        first = asset.updates[0]
        rep.validity_ok = blindsig.verify(selector(g), first.validity_signature, cert.plate_key)
        if not rep.validity_ok:
            rep.findings.append("plate validity signature on the genesis record missing or invalid")

    states = asset.state_digests()
    rep.chain_ok = bool(asset.updates)
    owner = g.owner_public_key
    lock = None
    for i, u in enumerate(asset.updates):
        if u.previous_state != states[i]:
            rep.chain_ok = False
            rep.findings.append(f"update {i + 1}: previous_state does not match the prior state")
        if i > 0 and u.validity_signature is not None:
            rep.chain_ok = False
            rep.findings.append(f"update {i + 1}: unexpected validity signature")
        if not sigs.verify(owner, u.body_bytes(), u.owner_authorization):
            rep.chain_ok = False
            rep.findings.append(f"update {i + 1}: not authorised by the owner of the prior state")
        if lock is not None and (u.unlock_secret is None or lock_for(u.unlock_secret) != lock):
            rep.chain_ok = False
            rep.findings.append(f"update {i + 1}: prior state is locked and the secret was not revealed")
        owner = u.new_owner_public_key
        lock = u.owner_lock

    steps = asset.proof.steps
    if len(steps) > len(asset.updates):
        rep.findings.append("proof has more steps than updates")
        rep.anchor_ok = False
    last_seq = anchor.sequence
    for i, u in enumerate(asset.updates):
        if i >= len(steps):
            rep.anchoring.append("missing")
            rep.aggregation.append("local")
            continue
        st = steps[i]
        expected = CycleEntry(states[i], states[i + 1])
        ok = (
            st.inclusion.leaf == expected
            and st.commitment.relay_id == g.home_relay
            and proof_matches(st.inclusion, st.commitment)
            and commitment_endorsed(st.commitment, trust_roots)
            and st.commitment.sequence > anchor.sequence
            and st.commitment.sequence >= last_seq
        )
        if not ok:
            rep.anchoring.append("bad")
            rep.aggregation.append("local")
            rep.findings.append(f"update {i + 1}: inclusion proof does not anchor in an endorsed home-relay commitment")
            continue
        last_seq = st.commitment.sequence
        rep.anchoring.append("anchored")
        rep.aggregation.append(_aggregation_status(st, trust_roots, rep, i))
    return rep


def claim_ready(asset: Asset, secret: bytes | None) -> bool:
    """Whether a holder of ``secret`` could exercise control of the current state."""
    lock = asset.owner_lock
    return lock is None or (secret is not None and lock_for(secret) == lock)
