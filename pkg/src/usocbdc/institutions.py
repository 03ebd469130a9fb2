"""Wallets, commercial banks and the central bank, plus the withdrawal,
payment and deposit protocols that run between them.

A payment is split into the steps the two consummation options share so the
simulator can reorder them:

* option 1 (recipient registers): ``deliver`` -> ``register`` -> ``settle``
* option 2 (payer registers):     ``register`` -> ``settle`` -> ``deliver``
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass, replace
from typing import ClassVar

from . import blindsig, instrument, sigs
from .asset import (
    Asset,
    GenesisRecord,
    PlateCertificate,
    certify_plate,
    create_genesis,
    create_transfer,
    lock_for,
    new_asset,
    verify_asset,
)
from .blindsig import BlindedMessage, BlindingFactor
from .codec import BYTES, STR, Digest, Encodable, Opt, encode, register, selector
from .commitments import CycleEntry, RelayCommitment
from .compliance import FAIL, NEEDS_EVIDENCE, ComplianceReport, ComplianceRule, check_compliance
from .mint import (
    AlreadySpent,
    MintError,
    Minter,
    MonitoringRecord,
    MonitoringSystem,
    VerificationFailed,
    ValueMismatch,
    Voucher,
    redeem,
    sign_voucher,
)
from .relay import ConflictingSuccessor, NotCommittedYet, RelayNetwork
from .sigs import KeyPair, Signature

DEFAULT_COOLING_OFF = 10
DEFAULT_DENOMINATIONS = (100, 50, 10, 5, 1)


class InstitutionError(Exception):
    pass


class InsufficientFunds(InstitutionError):
    pass


class InsufficientReserves(InstitutionError):
    pass


class PlateUnavailable(InstitutionError):
    pass


class CoolingOff(InstitutionError):
    pass


class PaymentConflict(InstitutionError):
    def __init__(self, msg, conflict: ConflictingSuccessor | None = None):
        super().__init__(msg)
        self.conflict = conflict


class UnverifiedRecipient(InstitutionError):
    pass


class ComplianceFailed(InstitutionError):
    def __init__(self, report: ComplianceReport):
        super().__init__("; ".join(d for _, d in report.findings) or report.verdict)
        self.report = report


# ---- merchant key certificates --------------------------------------------


@register
@dataclass(frozen=True)
class KeyCertificate(Encodable):
    """A certifier's statement that ``public`` belongs to ``subject``."""

    TAG: ClassVar[int] = 0x0501
    SCHEMA: ClassVar[tuple] = (("subject", STR), ("public", BYTES), ("signature", Opt(Signature)))

    subject: str
    public: bytes
    signature: Signature | None = None

    def body_bytes(self) -> bytes:
        return encode(replace(self, signature=None))


def certify_key(certifier: KeyPair, subject: str, public: bytes) -> KeyCertificate:
    c = KeyCertificate(subject, public)
    return replace(c, signature=certifier.sign(c.body_bytes()))


def key_certificate_valid(cert: KeyCertificate, certifiers) -> bool:
    return any(sigs.verify(pub, cert.body_bytes(), cert.signature) for pub in certifiers)


# ---- wallet ----------------------------------------------------------------


@dataclass
class HeldToken:
    asset: Asset
    key: KeyPair  # controls the current state
    since: int  # cycle the holder obtained it
    validity: Signature | None = None  # plate signature on the genesis, until the first transfer
    secret: bytes | None = None  # revealed preimage when the state is hash-locked

    @property
    def value(self) -> int:
        return self.asset.value

    @property
    def identity(self) -> Digest:
        return self.asset.genesis_digest

    @property
    def anchored(self) -> bool:
        return self.asset.pending_entry() is None


@dataclass
class _PendingWithdrawal:
    genesis: GenesisRecord
    anchor: RelayCommitment
    key: KeyPair
    factor: BlindingFactor | None
    plate_key: blindsig.IssuerPublicKey


class Wallet:
    """Non-custodial wallet.  ``holder_id`` is a simulation label only and
    never enters any protocol object."""

    def __init__(
        self,
        holder_id: str,
        rng: random.Random | None = None,
        preferred_relay: str | None = None,
        anchor_epoch: int = 1,
    ):
        self.holder_id = holder_id
        self.rng = rng if rng is not None else random.Random()
        self.preferred_relay = preferred_relay
        # anchoring to the newest commitment dates the withdrawal to the cycle;
        # rounding down to an epoch boundary widens the anonymity set
        self.anchor_epoch = max(1, anchor_epoch)
        self.tokens: list[HeldToken] = []
        self.incoming: list[HeldToken] = []
        self.outgoing: list["PaymentInFlight"] = []
        self.geneses: list[GenesisRecord] = []
        self.lock_secrets: dict[Digest, bytes] = {}  # payer side of time-shifted transfers
        self._receive_keys: dict[bytes, KeyPair] = {}
        self._pending: dict[int, _PendingWithdrawal] = {}
        self._next_req = 0

    # keys

    def new_receive_key(self) -> bytes:
        kp = KeyPair.generate(self.rng)
        self._receive_keys[kp.public] = kp
        return kp.public

    def key_for(self, public: bytes) -> KeyPair:
        return self._receive_keys[public]

    # withdrawal

    def choose_anchor(self, commitments: list[RelayCommitment]) -> RelayCommitment:
        seq = commitments[-1].sequence
        return commitments[seq - seq % self.anchor_epoch]

    def prepare_withdrawal(
        self, cert: PlateCertificate, anchor: RelayCommitment, issuer_root: bytes, recipient_key: KeyPair | None = None
    ) -> tuple[int, BlindedMessage]:
        """Wallet side of a withdrawal: fresh key, genesis record, blinding."""
        kp = recipient_key or KeyPair.generate(self.rng)
        g = create_genesis(kp, anchor.relay_id, anchor.id, cert, cert.denomination, issuer_root)
        factor = BlindingFactor.sample(cert.plate_key, self.rng)
        blinded = blindsig.blind(selector(g), factor, cert.plate_key)
        req = self._next_req
        self._next_req += 1
        self._pending[req] = _PendingWithdrawal(g, anchor, kp, factor, cert.plate_key)
        self.geneses.append(g)
        return req, blinded

    def finish_withdrawal(self, req: int, blind_sig: Signature, cycle: int) -> HeldToken:
        p = self._pending.pop(req)
        sig = blindsig.unblind(blind_sig, p.factor, p.plate_key)
        p.factor = None  # single use
        if not blindsig.verify(selector(p.genesis), sig, p.plate_key):
            raise VerificationFailed("unblinded signature does not verify on the genesis record")
        tok = HeldToken(new_asset(p.genesis, p.anchor), p.key, cycle, validity=sig)
        self.tokens.append(tok)
        return tok

    def abandon_withdrawal(self, req: int) -> None:
        self._pending.pop(req, None)

    # holdings

    def spendable(self, cycle: int, cooling_off: int = 0, value: int | None = None) -> list[HeldToken]:
        out = []
        for t in self.tokens:
            if value is not None and t.value != value:
                continue
            if not t.anchored:
                continue
            if t.validity is not None and cycle - t.since < cooling_off:
                continue
            if t.asset.owner_lock is not None and t.secret is None:
                continue
            out.append(t)
        return out

    def take(self, token: HeldToken) -> None:
        self.tokens.remove(token)

    def balance(self) -> int:
        return sum(t.value for t in self.tokens)

    def outstanding(self) -> list[HeldToken]:
        """Every unit this wallet currently holds or has in transit."""
        return self.tokens + self.incoming + [p.as_token() for p in self.outgoing]


# ---- payments --------------------------------------------------------------


@dataclass
class PaymentInFlight:
    option: int
    payer: Wallet
    recipient: Wallet
    asset: Asset  # includes the new update; proof step for it may be missing
    recipient_key: bytes
    cycle: int
    status: str = "created"  # created | delivered | registered | settled | conflict
    recipient_secret: bytes | None = None  # lock preimage the recipient already has

    @property
    def entry(self) -> CycleEntry:
        return self.asset.pending_entry()

    def as_token(self) -> HeldToken:
        return HeldToken(self.asset, self.recipient.key_for(self.recipient_key), self.cycle)


def start_payment(
    payer: Wallet,
    token: HeldToken,
    recipient: Wallet,
    *,
    option: int = 1,
    recipient_commitment: Digest | None = None,
    cycle: int = 0,
    cooling_off: int = 0,
    recipient_certificate: KeyCertificate | None = None,
    certifiers=(),
    owner_lock: Digest | None = None,
) -> PaymentInFlight:
    """Build the update transferring ``token`` to a fresh key of ``recipient``."""
    if option not in (1, 2):
        raise ValueError("option must be 1 or 2")
    if token.validity is not None and cycle - token.since < cooling_off:
        raise CoolingOff(f"token obtained at cycle {token.since}; cooling-off is {cooling_off} cycles")
    if not token.anchored:
        raise InstitutionError("token has an unanchored update")
    recipient_key = recipient.new_receive_key()
    if recipient_certificate is not None:
        if recipient_certificate.public != recipient_key and not key_certificate_valid(recipient_certificate, certifiers):
            raise UnverifiedRecipient("recipient key certificate does not verify")
    update = create_transfer(
        token.asset, token.validity, recipient_key, recipient_commitment, token.key,
        owner_lock=owner_lock, unlock_secret=token.secret,
    )
    payer.take(token)
    pif = PaymentInFlight(option, payer, recipient, token.asset.with_update(update), recipient_key, cycle)
    if option == 2:
        payer.outgoing.append(pif)
    return pif


def deliver(pif: PaymentInFlight) -> None:
    """Hand the asset (and, for option 2, its proof) to the recipient."""
    tok = HeldToken(pif.asset, pif.recipient.key_for(pif.recipient_key), pif.cycle, secret=pif.recipient_secret)
    if pif.option == 2:
        if pif.status != "settled":
            raise InstitutionError("option 2 delivers only after the proof is in hand")
        pif.payer.outgoing.remove(pif)
        pif.recipient.tokens.append(tok)
        pif.status = "done"
    else:
        pif.recipient.incoming.append(tok)
        pif.status = "delivered"


def _drop(pif: PaymentInFlight) -> None:
    pif.recipient.incoming[:] = [t for t in pif.recipient.incoming if t.asset is not pif.asset]
    if pif in pif.payer.outgoing:
        pif.payer.outgoing.remove(pif)


def register_payment(pif: PaymentInFlight, network: RelayNetwork) -> None:
    """Send the (current state, successor) digest pair to the home relay."""
    if pif.option == 1 and pif.status != "delivered":
        raise InstitutionError("option 1: recipient registers after delivery")
    relay = network[pif.asset.genesis.home_relay]
    try:
        relay.submit(pif.entry)
    except ConflictingSuccessor as exc:
        pif.status = "conflict"
        _drop(pif)
        raise PaymentConflict("the payer's state already has a registered successor", exc) from exc
    pif.status = "registered"


def settle(pif: PaymentInFlight, network: RelayNetwork) -> Asset:
    """Fetch the proof of provenance once the relay has published.
    Raises NotCommittedYet if it has not."""
    if pif.status != "registered":
        raise InstitutionError(f"cannot settle a payment in state {pif.status!r}")
    pif.asset = network.attach_pending(pif.asset)
    pif.status = "settled"
    if pif.option == 1:
        for t in pif.recipient.incoming:
            if t.asset.genesis == pif.asset.genesis and len(t.asset.updates) == len(pif.asset.updates):
                pif.recipient.incoming.remove(t)
                t.asset = pif.asset
                pif.recipient.tokens.append(t)
                break
        pif.status = "done"
    return pif.asset


def pay(payer: Wallet, token: HeldToken, recipient: Wallet, network: RelayNetwork, *, flush: bool = True, **kw) -> PaymentInFlight:
    """Whole payment in one call; with ``flush`` the relays publish in between."""
    pif = start_payment(payer, token, recipient, **kw)
    if pif.option == 1:
        deliver(pif)
        register_payment(pif, network)
        if flush:
            network.flush()
            settle(pif, network)
    else:
        register_payment(pif, network)
        if flush:
            network.flush()
            settle(pif, network)
            deliver(pif)
    return pif


# ---- banks -----------------------------------------------------------------


@dataclass
class BankAccount:
    account_id: str
    owner: str  # KYC stub
    balance: int = 0

    @property
    def details(self) -> bytes:
        return f"acct:{self.account_id}".encode()

    @property
    def commitment(self) -> Digest:
        return selector(self.details)


@dataclass
class DepositResult:
    credited: int
    report: ComplianceReport
    overridden: bool = False
    change: Signature | None = None


class CentralBank:
    def __init__(self, root: KeyPair, system: MonitoringSystem | None = None, writer: str = "central-bank"):
        self.root = root
        self.system = system
        self.writer = writer
        self.reserves: dict[str, int] = {}
        self.certificates: dict[str, PlateCertificate] = {}
        self._voucher_seq = 0
        if system is not None:
            system.ledger.register_writer(writer, root.public)

    def attach(self, system: MonitoringSystem) -> None:
        self.system = system
        system.ledger.register_writer(self.writer, self.root.public)

    def certify(self, key: blindsig.IssuerKeyPair, expiry: int) -> PlateCertificate:
        cert = certify_plate(self.root, key.plate_id, key.denomination, key.public, expiry)
        self.certificates[key.plate_id] = cert
        return cert

    def plates_for(self, denomination: int, cycle: int) -> list[PlateCertificate]:
        return [c for _, c in sorted(self.certificates.items()) if c.denomination == denomination and c.expiry >= cycle]

    def issue_vouchers(self, bank: "Bank", value: int, denominations=DEFAULT_DENOMINATIONS) -> list[Voucher]:
        instrument.touch("central-bank")
        if self.reserves.get(bank.bank_id, 0) < value:
            raise InsufficientReserves(f"{bank.bank_id} holds {self.reserves.get(bank.bank_id, 0)}, asked {value}")
        parts = []
        rest = value
        for d in sorted(denominations, reverse=True):
            while rest >= d:
                parts.append(d)
                rest -= d
        if rest:
            raise ValueError(f"{value} cannot be split into denominations {denominations}")
        out = []
        for d in parts:
            out.append(sign_voucher(self.root, f"v{self._voucher_seq}", d))
            self._voucher_seq += 1
        self.reserves[bank.bank_id] -= value
        bank.vouchers.extend(out)
        return out

    def redeem(self, bank: "Bank", asset: Asset, cycle: int) -> MonitoringRecord:
        instrument.touch("central-bank")
        rec = redeem(self.system, asset, self.writer, self.root, cycle, presenter=bank.key.public)
        self.reserves[bank.bank_id] = self.reserves.get(bank.bank_id, 0) + asset.value
        return rec

    def buy_back(self, bank: "Bank", assets, cycle: int) -> int:
        total = 0
        for a in list(assets):
            self.redeem(bank, a, cycle)
            bank.stock.remove(a)
            total += a.value
        return total


class Bank:
    def __init__(
        self,
        bank_id: str,
        central_bank: CentralBank,
        minter: Minter,
        network: RelayNetwork,
        rules: ComplianceRule | None = None,
        rng: random.Random | None = None,
        require_global_finality: bool = False,
    ):
        self.bank_id = bank_id
        self.cb = central_bank
        self.minter = minter
        self.network = network
        self.rules = rules or ComplianceRule()
        self.require_global_finality = require_global_finality
        self.key = KeyPair.generate(rng)
        self.accounts: dict[str, BankAccount] = {}
        self.vouchers: list[Voucher] = []
        self.stock: list[Asset] = []  # deposited CBDC under the bank's control
        self.pending_stock: list[Asset] = []  # deposit update registered, proof not yet fetched
        self.withdrawal_log: list[tuple[int, str, str, str]] = []
        self.deposit_log: list[tuple[int, str, Asset]] = []
        self.compliance_log: list[tuple[int, str, str]] = []
        central_bank.reserves.setdefault(bank_id, 0)

    def open_account(self, account_id: str, owner: str = "", balance: int = 0) -> BankAccount:
        acct = BankAccount(account_id, owner or account_id, balance)
        self.accounts[account_id] = acct
        return acct

    # central-bank money the bank can hand a minter

    def _consumable(self, value: int):
        for a in self.stock:
            if a.value == value:
                return a
        for v in self.vouchers:
            if v.value == value and v.state == "live":
                return v
        return None

    def _recycle(self, plate_id: str, blinded: BlindedMessage, cycle: int) -> Signature:
        cert = self.cb.certificates.get(plate_id)
        if cert is None:
            raise PlateUnavailable(f"no certified plate {plate_id!r}")
        consumed = self._consumable(cert.denomination)
        if consumed is None:
            # obtain a voucher against reserves
            self.cb.issue_vouchers(self, cert.denomination, (cert.denomination,))
            consumed = self._consumable(cert.denomination)
        sig, _ = self.minter.recycle(plate_id, consumed, blinded, cycle, presenter=self.key.public)
        if isinstance(consumed, Voucher):
            self.vouchers.remove(consumed)
        else:
            self.stock.remove(consumed)
        return sig

    def withdraw(self, account_id: str, plate_id: str, blinded: BlindedMessage, cycle: int) -> Signature:
        """Bank side of a withdrawal: debit, pay the minter in CB money, return the blind signature."""
        instrument.touch("bank")
        acct = self.accounts[account_id]
        cert = self.cb.certificates.get(plate_id)
        if cert is None:
            raise PlateUnavailable(f"no certified plate {plate_id!r}")
        if acct.balance < cert.denomination:
            raise InsufficientFunds(f"{account_id} balance {acct.balance} < {cert.denomination}")
        sig = self._recycle(plate_id, blinded, cycle)
        acct.balance -= cert.denomination
        self.withdrawal_log.append((cycle, account_id, plate_id, blinded.value.hex()))
        return sig

    def _admit(self, asset: Asset, override: bool) -> tuple[ComplianceReport, bool]:
        rep = verify_asset(asset, self.network.trust_roots(self.cb.root.public))
        if not rep.passed or (self.require_global_finality and rep.finality != "globally final"):
            raise VerificationFailed("; ".join(rep.findings) or rep.finality)
        if asset.first_update_digest in self.minter.system.spent:
            raise AlreadySpent("asset already retired by the monitoring system")
        report = check_compliance(asset, self.rules)
        if report.verdict == FAIL:
            raise ComplianceFailed(report)
        if report.verdict == NEEDS_EVIDENCE and not override:
            raise ComplianceFailed(report)
        return report, report.verdict == NEEDS_EVIDENCE

    def deposit(self, account_id: str, asset: Asset, deposit_update, cycle: int, override: bool = False) -> DepositResult:
        """Check, register the transfer to the bank's key, then credit."""
        instrument.touch("bank")
        acct = self.accounts[account_id]
        report, overridden = self._admit(asset, override)
        self._take_control(asset, deposit_update)
        acct.balance += asset.value
        self.deposit_log.append((cycle, account_id, asset))
        self.compliance_log.append((cycle, account_id, "override" if overridden else report.verdict))
        return DepositResult(asset.value, report, overridden)

    def _take_control(self, asset: Asset, deposit_update) -> Asset:
        if deposit_update.new_owner_public_key != self.key.public:
            raise VerificationFailed("deposit update does not transfer control to the bank")
        held = asset.with_update(deposit_update)
        try:
            self.network[asset.genesis.home_relay].submit(held.pending_entry())
        except ConflictingSuccessor as exc:
            raise AlreadySpent("the depositor's state already has a registered successor") from exc
        self.pending_stock.append(held)
        return held

    def deposit_with_change(
        self,
        account_id: str,
        asset: Asset,
        deposit_update,
        owed: int,
        change_plate_id: str,
        change_request: BlindedMessage,
        cycle: int,
        override: bool = False,
    ) -> DepositResult:
        """Credit ``owed`` and sign the payer's blinded change request for the
        difference, paying the minter from the bank's own CB money."""
        instrument.touch("bank")
        acct = self.accounts[account_id]
        cert = self.cb.certificates.get(change_plate_id)
        if cert is None:
            raise PlateUnavailable(change_plate_id)
        if not 0 < owed < asset.value or asset.value - owed != cert.denomination:
            raise ValueMismatch(
                f"change of {cert.denomination} requested on overpayment of {asset.value - owed}"
            )
        report, overridden = self._admit(asset, override)
        if self._consumable(cert.denomination) is None:
            self.cb.issue_vouchers(self, cert.denomination, (cert.denomination,))
        self._take_control(asset, deposit_update)
        change = self._recycle(change_plate_id, change_request, cycle)
        acct.balance += owed
        self.deposit_log.append((cycle, account_id, asset))
        self.compliance_log.append((cycle, account_id, "override" if overridden else report.verdict))
        return DepositResult(owed, report, overridden, change)

    def settle(self) -> int:
        """Attach proofs to deposits whose relay cycle has been published."""
        done = 0
        for a in list(self.pending_stock):
            try:
                full = self.network.attach_pending(a)
            except NotCommittedYet:
                continue
            self.pending_stock.remove(a)
            self.stock.append(full)
            done += 1
        self.stock = [self.network.extend(a) for a in self.stock]
        return done

    def outstanding(self) -> list[Asset]:
        return self.stock + self.pending_stock


# ---- composed protocols ----------------------------------------------------


def withdraw(
    wallet: Wallet,
    bank: Bank,
    account_id: str,
    denomination: int,
    cycle: int = 0,
    plate_id: str | None = None,
    recipient_key: KeyPair | None = None,
) -> HeldToken:
    """Full withdrawal, ending with an unblinded, verified token in the wallet."""
    if plate_id is None:
        options = bank.cb.plates_for(denomination, cycle)
        if not options:
            raise PlateUnavailable(f"no live plate for denomination {denomination}")
        cert = options[0]
    else:
        cert = bank.cb.certificates.get(plate_id)
        if cert is None or cert.denomination != denomination:
            raise PlateUnavailable(f"plate {plate_id!r} does not sign denomination {denomination}")
    relay_id = wallet.preferred_relay or bank.network.root_id
    anchor = wallet.choose_anchor(bank.network[relay_id].commitments)
    req, blinded = wallet.prepare_withdrawal(cert, anchor, bank.cb.root.public, recipient_key)
    try:
        sig = bank.withdraw(account_id, cert.plate_id, blinded, cycle)
    except (InstitutionError, MintError):
        wallet.abandon_withdrawal(req)
        wallet.geneses.pop()
        raise
    return wallet.finish_withdrawal(req, sig, cycle)


def deposit(holder: Wallet, bank: Bank, account_id: str, token: HeldToken, cycle: int = 0, override: bool = False) -> DepositResult:
    acct = bank.accounts[account_id]
    upd = create_transfer(token.asset, token.validity, bank.key.public, acct.commitment, token.key, unlock_secret=token.secret)
    res = bank.deposit(account_id, token.asset, upd, cycle, override)
    holder.take(token)
    return res


def deposit_with_change(
    merchant: Wallet,
    bank: Bank,
    account_id: str,
    token: HeldToken,
    owed: int,
    change_plate_id: str,
    change_request: BlindedMessage,
    cycle: int = 0,
) -> DepositResult:
    acct = bank.accounts[account_id]
    upd = create_transfer(token.asset, token.validity, bank.key.public, acct.commitment, token.key, unlock_secret=token.secret)
    res = bank.deposit_with_change(account_id, token.asset, upd, owed, change_plate_id, change_request, cycle)
    merchant.take(token)
    return res


def issue_vouchers(central_bank: CentralBank, bank: Bank, value: int, denominations=DEFAULT_DENOMINATIONS) -> list[Voucher]:
    return central_bank.issue_vouchers(bank, value, denominations)


def buy_back(central_bank: CentralBank, bank: Bank, assets, cycle: int = 0) -> int:
    return central_bank.buy_back(bank, assets, cycle)


def time_lock(rng: random.Random | None = None) -> tuple[bytes, Digest]:
    """Fresh (secret, lock) pair for a time-shifted transfer."""
    s = rng.randbytes(32) if rng is not None else secrets.token_bytes(32)
    return s, lock_for(s)

