"""Minting plates, vouchers, the minting invariant, and the monitoring ledger.

A minter never creates or destroys value on net: every blind signature it
produces is paid for, in the same step, by destroying a voucher or retiring
a spent asset of equal face value.  Each action is appended to a signed,
append-only monitoring ledger from which in-flight value (issuance minus
redemptions) can be recomputed per plate.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import ClassVar

from . import blindsig, instrument, sigs
from .asset import Asset, PlateCertificate, verify_asset
from .blindsig import BlindedMessage, IssuerKeyPair
from .codec import STR, U64, Digest, Encodable, Opt, encode, register
from .commitments import TrustRoots
from .sigs import KeyPair, Signature

RECYCLE = "recycle"
REDEEM = "redeem"


class MintError(Exception):
    pass


class UnknownPlate(MintError):
    pass


class ValueMismatch(MintError):
    pass


class PlateExpired(MintError):
    pass


class PlateLimitExceeded(MintError):
    pass


class InFlightCapExceeded(PlateLimitExceeded):
    pass


class CumulativeCapExceeded(PlateLimitExceeded):
    pass


class AlreadyDestroyed(MintError):
    pass


class AlreadySpent(MintError):
    pass


class VerificationFailed(MintError):
    pass


@dataclass
class MintingPlate:
    plate_id: str
    key: IssuerKeyPair
    certificate: PlateCertificate
    cap_in_flight: int
    cap_cumulative: int
    expiry: int
    issued_total: int = 0
    redeemed_total: int = 0

    @property
    def denomination(self) -> int:
        return self.key.denomination

    @property
    def in_flight(self) -> int:
        return self.issued_total - self.redeemed_total


@register
@dataclass
class Voucher(Encodable):
    """Central-bank instrument a bank hands to a minter in place of CBDC."""

    TAG: ClassVar[int] = 0x0401
    SCHEMA: ClassVar[tuple] = (("voucher_id", STR), ("value", U64), ("issuer_signature", Opt(Signature)))

    voucher_id: str
    value: int
    issuer_signature: Signature | None = None
    state: str = "live"

    def body_bytes(self) -> bytes:
        return encode(Voucher(self.voucher_id, self.value))


def sign_voucher(issuer: KeyPair, voucher_id: str, value: int) -> Voucher:
    v = Voucher(voucher_id, value)
    v.issuer_signature = issuer.sign(v.body_bytes())
    return v


@register
@dataclass(frozen=True)
class MonitoringRecord(Encodable):
    TAG: ClassVar[int] = 0x0402
    SCHEMA: ClassVar[tuple] = (
        ("plate_id", STR),
        ("action", STR),
        ("value_destroyed", U64),
        ("value_signed", U64),
        ("consumed_ref", STR),
        ("consumed_plate", STR),
        ("cycle", U64),
    )

    plate_id: str  # signing plate for recycle; retired plate for redeem
    action: str
    value_destroyed: int
    value_signed: int
    consumed_ref: str  # voucher id or asset first-update digest (hex)
    consumed_plate: str  # plate the destroyed value was issued on ("" for vouchers)
    cycle: int


@dataclass(frozen=True)
class LedgerEntry:
    record: MonitoringRecord
    writer: str
    signature: Signature

    def line(self) -> str:
        r = self.record
        return " ".join([
            self.writer, r.plate_id, r.action, str(r.value_destroyed), str(r.value_signed),
            r.consumed_ref, r.consumed_plate or "-", str(r.cycle), self.signature.value.hex(),
        ])


class MonitoringLedger:
    """Append-only log; each writer signs its own records."""

    def __init__(self):
        self.entries: list[LedgerEntry] = []
        self.writers: dict[str, bytes] = {}
        self.plates: dict[str, MintingPlate] = {}

    def register_writer(self, writer: str, public: bytes) -> None:
        self.writers[writer] = public

    def append(self, record: MonitoringRecord, writer: str, key: KeyPair) -> LedgerEntry:
        entry = LedgerEntry(record, writer, key.sign(encode(record)))
        self.entries.append(entry)
        return entry

    @property
    def records(self) -> list[MonitoringRecord]:
        return [e.record for e in self.entries]

    def lines(self) -> list[str]:
        out = [f"#writer {w} {pub.hex()}" for w, pub in sorted(self.writers.items())]
        for p in sorted(self.plates.values(), key=lambda p: p.plate_id):
            out.append(
                f"#plate {p.plate_id} {p.denomination} {p.cap_in_flight} {p.cap_cumulative} "
                f"{p.expiry} {p.issued_total} {p.redeemed_total}"
            )
        out.extend(e.line() for e in self.entries)
        return out


class MonitoringSystem:
    """Shared state of all minters: plates, the spent set, destroyed vouchers
    and the ledger.  Updates are serialised under one lock."""

    def __init__(self, trust_roots: TrustRoots, voucher_issuer: bytes):
        self.roots = trust_roots
        self.voucher_issuer = voucher_issuer
        self.plates: dict[str, MintingPlate] = {}
        self.ledger = MonitoringLedger()
        self.ledger.plates = self.plates
        self.spent: set[Digest] = set()
        self.destroyed_vouchers: set[str] = set()
        self.lock = threading.Lock()

    def add_plate(self, plate: MintingPlate) -> None:
        self.plates[plate.plate_id] = plate

    def plate(self, plate_id: str) -> MintingPlate:
        instrument.touch("mint")
        try:
            return self.plates[plate_id]
        except KeyError:
            raise UnknownPlate(plate_id) from None

    def _check_asset(self, asset: Asset, presenter: bytes | None) -> Digest:
        rep = verify_asset(asset, self.roots)
        if not rep.passed:
            raise VerificationFailed("; ".join(rep.findings) or rep.finality)
        if presenter is not None and asset.owner_key != presenter:
            raise VerificationFailed("asset is not controlled by the presenting institution")
        if asset.plate_id not in self.plates:
            raise UnknownPlate(asset.plate_id)
        return asset.first_update_digest


class Minter:
    def __init__(self, minter_id: str, key: KeyPair, system: MonitoringSystem):
        self.minter_id = minter_id
        self.key = key
        self.system = system
        system.ledger.register_writer(minter_id, key.public)

    def recycle(
        self,
        plate_id: str,
        consumed: Voucher | Asset,
        blinded: BlindedMessage,
        cycle: int,
        presenter: bytes | None = None,
    ) -> tuple[Signature, MonitoringRecord]:
        """Destroy ``consumed`` and sign ``blinded`` under the plate, atomically."""
        instrument.touch("mint")
        sysm = self.system
        with sysm.lock:
            plate = sysm.plate(plate_id)
            if cycle > plate.expiry:
                raise PlateExpired(f"plate {plate_id} expired at cycle {plate.expiry}")
            d = plate.denomination
            if consumed.value != d:
                raise ValueMismatch(f"consumed value {consumed.value} != plate denomination {d}")

            if isinstance(consumed, Voucher):
                if consumed.voucher_id in sysm.destroyed_vouchers or consumed.state == "destroyed":
                    raise AlreadyDestroyed(f"voucher {consumed.voucher_id}")
                if not sigs.verify(sysm.voucher_issuer, consumed.body_bytes(), consumed.issuer_signature):
                    raise VerificationFailed("voucher not signed by the central bank")
                ref, src_plate = consumed.voucher_id, None
            else:
                ref_digest = sysm._check_asset(consumed, presenter)
                if ref_digest in sysm.spent:
                    raise AlreadyDestroyed(f"asset {ref_digest.hex()[:16]} already retired")
                ref, src_plate = ref_digest.hex(), sysm.plates[consumed.plate_id]

            retired_here = d if src_plate is plate else 0
            if plate.issued_total + d > plate.cap_cumulative:
                raise CumulativeCapExceeded(f"plate {plate_id}: cumulative cap {plate.cap_cumulative}")
            if plate.in_flight + d - retired_here > plate.cap_in_flight:
                raise InFlightCapExceeded(f"plate {plate_id}: in-flight cap {plate.cap_in_flight}")

            sig = blindsig.sign_blinded(blinded, plate.key)

            if isinstance(consumed, Voucher):
                sysm.destroyed_vouchers.add(consumed.voucher_id)
                consumed.state = "destroyed"
            else:
                sysm.spent.add(bytes.fromhex(ref))
                src_plate.redeemed_total += consumed.value
            plate.issued_total += d
            record = MonitoringRecord(
                plate_id, RECYCLE, consumed.value, d, ref,
                src_plate.plate_id if src_plate else "", cycle,
            )
            sysm.ledger.append(record, self.minter_id, self.key)
            return sig, record


def redeem(
    system: MonitoringSystem,
    asset: Asset,
    writer: str,
    key: KeyPair,
    cycle: int,
    presenter: bytes | None = None,
) -> MonitoringRecord:
    """Retire an asset for reserves.  The caller credits the reserves."""
    instrument.touch("mint")
    with system.lock:
        ref = system._check_asset(asset, presenter)
        if ref in system.spent:
            raise AlreadySpent(f"asset {ref.hex()[:16]} already retired")
        plate = system.plates[asset.plate_id]
        system.spent.add(ref)
        plate.redeemed_total += asset.value
        record = MonitoringRecord(asset.plate_id, REDEEM, asset.value, 0, ref.hex(), asset.plate_id, cycle)
        system.ledger.append(record, writer, key)
        return record


# ---- audits ----------------------------------------------------------------


def ledger_totals(records, plate_id: str) -> tuple[int, int]:
    issued = sum(r.value_signed for r in records if r.plate_id == plate_id and r.action == RECYCLE)
    redeemed = sum(r.value_destroyed for r in records if r.consumed_plate == plate_id)
    return issued, redeemed


def audit_in_flight(ledger, plate_id: str) -> int:
    records = ledger.records if isinstance(ledger, MonitoringLedger) else list(ledger)
    issued, redeemed = ledger_totals(records, plate_id)
    return issued - redeemed


@dataclass(frozen=True)
class Alarm:
    plate_id: str
    reason: str


def detect_plate_compromise(ledger, plate: MintingPlate) -> Alarm | None:
    """Alarm iff redemptions outrun recorded issuance, a cap is breached, or
    the plate's live counters disagree with the ledger."""
    records = ledger.records if isinstance(ledger, MonitoringLedger) else list(ledger)
    issued, redeemed = ledger_totals(records, plate.plate_id)
    if plate.redeemed_total > plate.issued_total or redeemed > issued:
        return Alarm(plate.plate_id, f"redeemed {max(redeemed, plate.redeemed_total)} exceeds recorded issuance {issued}")
    if issued - redeemed > plate.cap_in_flight:
        return Alarm(plate.plate_id, f"in-flight {issued - redeemed} exceeds cap {plate.cap_in_flight}")
    if issued > plate.cap_cumulative:
        return Alarm(plate.plate_id, f"cumulative issuance {issued} exceeds cap {plate.cap_cumulative}")
    if (issued, redeemed) != (plate.issued_total, plate.redeemed_total):
        return Alarm(
            plate.plate_id,
            f"ledger says issued={issued} redeemed={redeemed}, plate counters say "
            f"issued={plate.issued_total} redeemed={plate.redeemed_total}",
        )
    return None


def minting_invariant_violations(records) -> list[MonitoringRecord]:
    return [r for r in records if r.action == RECYCLE and r.value_destroyed != r.value_signed]


# ---- ledger files ----------------------------------------------------------


@dataclass
class PlateSummary:
    plate_id: str
    denomination: int
    cap_in_flight: int
    cap_cumulative: int
    expiry: int
    issued_total: int
    redeemed_total: int


@dataclass
class AuditResult:
    in_flight: dict[str, int] = field(default_factory=dict)
    findings: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings


def parse_ledger(lines):
    """Returns ``(writers, plates, entries, malformed)``; malformed is a list
    of line numbers that could not be parsed."""
    writers: dict[str, bytes] = {}
    plates: dict[str, PlateSummary] = {}
    entries: list[tuple[LedgerEntry, int]] = []
    malformed: list[int] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "#writer":
                writers[parts[1]] = bytes.fromhex(parts[2])
            elif parts[0] == "#plate":
                pid, *nums = parts[1:]
                plates[pid] = PlateSummary(pid, *map(int, nums))
            elif line.startswith("#"):
                continue
            else:
                writer, plate_id, action, vd, vs, ref, cplate, cycle, sig_hex = parts
                rec = MonitoringRecord(
                    plate_id, action, int(vd), int(vs), ref, "" if cplate == "-" else cplate, int(cycle)
                )
                pub = writers.get(writer, b"")
                entries.append((LedgerEntry(rec, writer, Signature(bytes.fromhex(sig_hex), sigs.key_id(pub))), lineno))
        except (ValueError, TypeError, IndexError):
            malformed.append(lineno)
    return writers, plates, entries, malformed


def audit_ledger_lines(lines) -> AuditResult:
    """Full offline audit of one or more concatenated ledger files."""
    writers, plates, entries, malformed = parse_ledger(lines)
    res = AuditResult()
    for lineno in malformed:
        res.findings.append({"line": lineno, "check": "format", "detail": "malformed ledger line"})
    records = []
    for entry, lineno in entries:
        pub = writers.get(entry.writer)
        if pub is None or not sigs.verify(pub, encode(entry.record), entry.signature):
            res.findings.append({"line": lineno, "check": "signature", "detail": f"bad or unknown writer {entry.writer}"})
        if entry.record.action == RECYCLE and entry.record.value_destroyed != entry.record.value_signed:
            res.findings.append({
                "line": lineno, "check": "minting_invariant",
                "detail": f"destroyed {entry.record.value_destroyed} != signed {entry.record.value_signed}",
            })
        records.append(entry.record)
    ids = sorted(set(plates) | {r.plate_id for r in records} | {r.consumed_plate for r in records if r.consumed_plate})
    for pid in ids:
        res.in_flight[pid] = audit_in_flight(records, pid)
        summary = plates.get(pid)
        if summary is None:
            continue
        fake = MintingPlate(
            pid, None, None, summary.cap_in_flight, summary.cap_cumulative, summary.expiry,
            summary.issued_total, summary.redeemed_total,
        )
        alarm = detect_plate_compromise(records, fake)
        if alarm:
            res.findings.append({"plate": pid, "check": "plate_compromise", "detail": alarm.reason})
    return res


def plate_from_key(key: IssuerKeyPair, cert: PlateCertificate, cap_in_flight: int, cap_cumulative: int) -> MintingPlate:
    return MintingPlate(key.plate_id, key, cert, cap_in_flight, cap_cumulative, cert.expiry)

