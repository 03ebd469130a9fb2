"""Deterministic discrete-cycle simulator.

Each cycle runs in a fixed order:

1. faults and operations scheduled for the cycle, in file order
2. delivery of queued messages that are due
3. relay commitments, children first, with uplink forwarding
4. settlement: payments fetch proofs, banks settle deposits, proofs extend
5. observations (``verify``, ``export``), metrics and invariant checks

Everything random is drawn from per-actor streams seeded by
``(seed, actor name)``, so the same seed and config give byte-identical
outputs.
"""

from __future__ import annotations

import os
import random
from collections import Counter
from dataclasses import dataclass, field

from .. import blindsig, instrument
from ..asset import AssetError, claim_ready, create_transfer, verify_asset
from ..blindsig import generate_keypair
from ..codec import sha256
from ..commitments import CycleEntry
from ..files import dump_asset, dump_roots
from ..institutions import (
    Bank,
    CentralBank,
    ComplianceFailed,
    InstitutionError,
    InsufficientFunds,
    PaymentConflict,
    PaymentInFlight,
    PlateUnavailable,
    Wallet,
    buy_back,
    deliver,
    deposit,
    deposit_with_change,
    register_payment,
    settle,
    start_payment,
    time_lock,
    withdraw,
)
from ..mint import MintError, Minter, MonitoringSystem, detect_plate_compromise, minting_invariant_violations, plate_from_key
from ..relay import NotCommittedYet, QuorumUnavailable, Relay, RelayError, RelayNetwork, UnknownEntry
from ..sigs import KeyPair
from .config import ConfigInvalid, Op, SimulationConfig, describe, parse_rule

OBSERVE_VERBS = {"verify", "export"}


class InvariantViolation(Exception):
    def __init__(self, cycle: int, assertion: str, detail: str):
        super().__init__(f"cycle {cycle}: {assertion}: {detail}")
        self.cycle = cycle
        self.assertion = assertion
        self.detail = detail


def _fmt(d: dict) -> str:
    return ",".join(f"{k}:{v}" for k, v in sorted(d.items())) or "-"


@dataclass
class MetricsSnapshot:
    cycle: int
    in_flight: dict
    outstanding: int
    reserves: int
    vouchers: int
    assets: dict  # holder class -> count
    balances: dict
    compliance: dict
    conflicts: int
    equivocations: int
    alarms: list = field(default_factory=list)

    def line(self) -> str:
        return " ".join([
            f"cycle={self.cycle}",
            f"in_flight={_fmt(self.in_flight)}",
            f"outstanding={self.outstanding}",
            f"reserves={self.reserves}",
            f"vouchers={self.vouchers}",
            f"assets={_fmt(self.assets)}",
            f"balances={_fmt(self.balances)}",
            f"compliance={_fmt(self.compliance)}",
            f"conflicts={self.conflicts}",
            f"equivocations={self.equivocations}",
            f"alarms={'|'.join(self.alarms) or '-'}",
        ])

    @property
    def total_in_flight(self) -> int:
        return sum(self.in_flight.values())


@dataclass(order=True)
class Message:
    due: int
    seq: int
    kind: str = field(compare=False)  # register | forward
    target: str = field(compare=False)
    payload: object = field(compare=False, default=None)
    origin: str = field(compare=False, default="")


@dataclass
class PreTransfer:
    payer: str
    payee: str
    pif: PaymentInFlight
    secret: bytes
    revealed: bool = False
    reclaimed: bool = False


class World:
    """All actors of one simulation, built deterministically from a config."""

    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg
        relays = []
        for rs in cfg.relays:
            rng = self.rng(f"relay:{rs.relay_id}")
            keys = [KeyPair.generate(rng) for _ in range(rs.endorsers)]
            relays.append(Relay(rs.relay_id, keys, rs.quorum, rs.period, rs.parent))
        self.network = RelayNetwork(relays)
        self.uplink_latency = {rs.relay_id: rs.latency for rs in cfg.relays}
        root = KeyPair.generate(self.rng("central-bank"))
        self.roots = self.network.trust_roots(root.public)
        self.system = MonitoringSystem(self.roots, root.public)
        self.cb = CentralBank(root, self.system)
        for ps in cfg.plates:
            key = generate_keypair(ps.plate_id, ps.denomination, cfg.key_bits, self.rng(f"plate:{ps.plate_id}"))
            cert = self.cb.certify(key, ps.expiry)
            self.system.add_plate(plate_from_key(key, cert, ps.cap_in_flight, ps.cap_cumulative))
        self.minters = [
            Minter(f"minter-{i}", KeyPair.generate(self.rng(f"minter:{i}")), self.system) for i in range(cfg.minters)
        ]
        self.banks: dict[str, Bank] = {}
        for i, bs in enumerate(cfg.banks):
            bank = Bank(
                bs.bank_id, self.cb, self.minters[i % len(self.minters)], self.network, cfg.rules,
                self.rng(f"bank:{bs.bank_id}"), bs.require_global,
            )
            self.cb.reserves[bs.bank_id] = bs.reserves
            self.banks[bs.bank_id] = bank
        for a in cfg.accounts:
            self.banks[a.bank_id].open_account(a.account_id, a.account_id, a.balance)
        self.wallets: dict[str, Wallet] = {}
        for ws in cfg.wallets:
            self.add_wallet(ws.wallet_id, ws.relay)
        self.m0 = self.money_supply()

    def rng(self, name: str) -> random.Random:
        return random.Random(f"{self.cfg.seed}:{name}")

    def add_wallet(self, wallet_id: str, relay: str | None = None) -> Wallet:
        w = Wallet(wallet_id, self.rng(f"wallet:{wallet_id}"), relay or self.network.root_id, self.cfg.anchor_epoch)
        self.wallets[wallet_id] = w
        return w

    def wallet(self, wallet_id: str) -> Wallet:
        if wallet_id not in self.wallets:
            return self.add_wallet(wallet_id)
        return self.wallets[wallet_id]

    def account(self, ref: str) -> tuple[Bank, str]:
        bank_id, _, acct = ref.partition(":")
        bank = self.banks.get(bank_id)
        if bank is None or acct not in bank.accounts:
            raise ConfigInvalid(f"unknown account {ref!r}")
        return bank, acct

    def money_supply(self) -> int:
        """Reserves + live vouchers + CBDC in flight."""
        vouchers = sum(v.value for b in self.banks.values() for v in b.vouchers if v.state == "live")
        return sum(self.cb.reserves.values()) + vouchers + sum(p.in_flight for p in self.system.plates.values())


@dataclass
class SimulationResult:
    config: SimulationConfig
    world: World
    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    exports: dict = field(default_factory=dict)
    violation: InvariantViolation | None = None

    @property
    def exit_status(self) -> int:
        return 1 if self.violation else 0

    @property
    def final(self) -> MetricsSnapshot:
        return self.snapshots[-1]

    def events_matching(self, text: str) -> list[str]:
        return [e for e in self.events if text in e]

    def results_text(self) -> str:
        lines = describe(self.config)
        lines += [s.line() for s in self.snapshots]
        lines.append("# events")
        lines += self.events
        status = f"FAIL {self.violation}" if self.violation else "OK"
        lines.append(f"# status {status}")
        return "\n".join(lines) + "\n"

    def files(self) -> dict[str, str]:
        w = self.world
        out = {
            "results.txt": self.results_text(),
            "monitoring.ledger": "\n".join(w.system.ledger.lines()) + "\n",
            "trust-roots.txt": dump_roots(w.roots),
        }
        for rid in sorted(w.network.relays):
            out[f"relay-{rid}.ledger"] = "\n".join(w.network[rid].ledger_lines()) + "\n"
        for name, text in sorted(self.exports.items()):
            out[f"{name}.asset"] = text
        return out

    def write(self, out_dir: str) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name, text in self.files().items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(path)
        return written


class Simulator:
    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg.validate()
        self.world = World(cfg)
        self.result = SimulationResult(cfg, self.world)
        self.queue: list[Message] = []
        self._seq = 0
        self.payments: list[PaymentInFlight] = []
        self.pretransfers: list[PreTransfer] = []
        self.compliance = Counter()
        self.conflicts = 0
        self.fork_next: set[str] = set()
        self._seen_evidence = 0
        self._checked_records = 0
        self._checked_leaves: dict[str, int] = {}
        self._states: dict[str, set] = {}
        self.cycle = 0

    # -- helpers ------------------------------------------------------------

    def log(self, text: str) -> None:
        self.result.events.append(f"c={self.cycle} {text}")

    def send(self, kind: str, target: str, payload=None, delay: int = 0, origin: str = "") -> None:
        self.queue.append(Message(self.cycle + delay, self._seq, kind, target, payload, origin))
        self._seq += 1

    def _side(self, relay_id: str) -> str | None:
        """Nearest partitioned ancestor-or-self, i.e. which island a relay is on."""
        net = self.world.network
        cur = relay_id
        while cur:
            if cur in net.partitioned:
                return cur
            cur = net[cur].parent
        return None

    def _token(self, wallet: Wallet, denom: int, *, cooling: int = 0, any_state: bool = False):
        pool = wallet.tokens if any_state else wallet.spendable(self.cycle, cooling, denom)
        for t in pool:
            if t.value == denom:
                return t
        raise InsufficientFunds(f"{wallet.holder_id} holds no usable token of {denom}")

    def _register(self, pif: PaymentInFlight) -> None:
        sender = pif.recipient if pif.option == 1 else pif.payer
        self.payments.append(pif)
        self.send("register", pif.asset.genesis.home_relay, pif, self.cfg.latency, sender.preferred_relay)

    # -- operations ---------------------------------------------------------

    def op_withdraw(self, op: Op):
        w = self.world.wallet(op.args[0])
        bank, acct = self.world.account(op.args[1])
        denom = int(op.args[2])
        withdraw(w, bank, acct, denom, self.cycle, op.kw.get("plate"))
        return f"{w.holder_id} withdrew {denom} from {op.args[1]}"

    def op_pay(self, op: Op):
        payer, payee = self.world.wallet(op.args[0]), self.world.wallet(op.args[1])
        denom = int(op.args[2])
        option = int(op.kw.get("option", 1))
        commit = None
        if "commit" in op.kw:
            bank, acct = self.world.account(op.kw["commit"])
            commit = bank.accounts[acct].commitment
        token = self._token(payer, denom, cooling=self.cfg.cooling_off)
        pif = start_payment(
            payer, token, payee, option=option, recipient_commitment=commit,
            cycle=self.cycle, cooling_off=self.cfg.cooling_off,
        )
        if option == 1:
            deliver(pif)
        self._register(pif)
        return f"{payer.holder_id} pays {denom} to {payee.holder_id} option={option}"

    def op_deposit(self, op: Op):
        w = self.world.wallet(op.args[0])
        bank, acct = self.world.account(op.args[1])
        denom = int(op.args[2])
        override = op.kw.get("override", "no") in ("yes", "on", "true", "1")
        token = self._token(w, denom)
        try:
            res = deposit(w, bank, acct, token, self.cycle, override)
        except ComplianceFailed as exc:
            self.compliance["fail"] += 1
            raise exc
        self.compliance["override" if res.overridden else res.report.verdict] += 1
        return f"{w.holder_id} deposited {denom} to {op.args[1]} verdict={res.report.verdict}"

    def op_change(self, op: Op):
        merchant = self.world.wallet(op.args[0])
        bank, acct = self.world.account(op.args[1])
        denom = int(op.args[2])
        owe = int(op.kw["owe"])
        payer = self.world.wallet(op.kw["payer"])
        token = self._token(merchant, denom)
        cb = self.world.cb
        if "plate" in op.kw:
            cert = cb.certificates.get(op.kw["plate"])
            if cert is None:
                raise PlateUnavailable(op.kw["plate"])
        else:
            options = cb.plates_for(denom - owe, self.cycle)
            if not options:
                raise PlateUnavailable(f"no live plate for change of {denom - owe}")
            cert = options[0]
        anchor = payer.choose_anchor(self.world.network[payer.preferred_relay].commitments)
        req, blinded = payer.prepare_withdrawal(cert, anchor, cb.root.public)
        try:
            res = deposit_with_change(merchant, bank, acct, token, owe, cert.plate_id, blinded, self.cycle)
        except Exception:
            payer.abandon_withdrawal(req)
            payer.geneses.pop()
            raise
        payer.finish_withdrawal(req, res.change, self.cycle)
        self.compliance["override" if res.overridden else res.report.verdict] += 1
        return f"{merchant.holder_id} deposited {denom} owing {owe}; change {cert.denomination} to {payer.holder_id}"

    def op_vouchers(self, op: Op):
        bank = self.world.banks[op.args[0]]
        value = int(op.args[1])
        vs = self.world.cb.issue_vouchers(bank, value)
        return f"{bank.bank_id} bought {len(vs)} vouchers worth {value}"

    def op_buyback(self, op: Op):
        bank = self.world.banks[op.args[0]]
        want = op.args[1] if len(op.args) > 1 else "all"
        chosen, total = [], 0
        for a in list(bank.stock):
            if want != "all" and total + a.value > int(want):
                continue
            chosen.append(a)
            total += a.value
        got = buy_back(self.world.cb, bank, chosen, self.cycle)
        return f"{bank.bank_id} sold {got} back for reserves"

    def op_rule(self, op: Op):
        targets = [self.world.banks[op.kw["bank"]]] if "bank" in op.kw else list(self.world.banks.values())
        for b in targets:
            b.rules = parse_rule(op.kw, b.rules)
        r = targets[0].rules if targets else None
        return f"rules now max_hops={r.max_hops} require_commitment={int(r.require_recipient_commitment)}"

    def op_pretransfer(self, op: Op):
        payer, payee = self.world.wallet(op.args[0]), self.world.wallet(op.args[1])
        denom = int(op.args[2])
        count = int(op.kw.get("count", 1))
        for _ in range(count):
            token = self._token(payer, denom, cooling=self.cfg.cooling_off)
            secret, lock = time_lock(payer.rng)
            pif = start_payment(
                payer, token, payee, option=2, cycle=self.cycle, cooling_off=self.cfg.cooling_off, owner_lock=lock,
            )
            payer.lock_secrets[pif.asset.genesis_digest] = secret
            self.pretransfers.append(PreTransfer(payer.holder_id, payee.holder_id, pif, secret))
            self._register(pif)
        return f"{payer.holder_id} pre-transferred {count}x{denom} to {payee.holder_id}"

    def _held_pre(self, pt: PreTransfer):
        payee = self.world.wallets[pt.payee]
        g = pt.pif.asset.genesis_digest
        return next((t for t in payee.tokens if t.asset.genesis_digest == g), None)

    def op_reveal(self, op: Op):
        count = int(op.kw.get("count", 1))
        before = instrument.ACCESS["relay"]
        done = 0
        for pt in self.pretransfers:
            if done == count:
                break
            if pt.payer != op.args[0] or pt.payee != op.args[1] or pt.revealed or pt.reclaimed:
                continue
            tok = self._held_pre(pt)
            if tok is None:
                continue
            tok.secret = pt.secret
            pt.revealed = True
            done += 1
        traffic = instrument.ACCESS["relay"] - before
        return f"{op.args[0]} revealed {done} secrets to {op.args[1]} relay_traffic={traffic}"

    def op_claim(self, op: Op):
        payee = self.world.wallet(op.args[0])
        ok = refused = 0
        for t in payee.tokens:
            if t.asset.owner_lock is None:
                continue
            if claim_ready(t.asset, t.secret) and verify_asset(t.asset, self.world.roots).passed:
                ok += 1
                continue
            try:
                create_transfer(t.asset, None, payee.new_receive_key(), None, t.key, unlock_secret=t.secret)
            except AssetError:
                refused += 1
        return f"{payee.holder_id} claimable={ok} refused={refused}"

    def op_reclaim(self, op: Op):
        payer, payee = self.world.wallet(op.args[0]), self.world.wallet(op.args[1])
        n = 0
        for pt in self.pretransfers:
            if pt.payer != payer.holder_id or pt.payee != payee.holder_id or pt.revealed or pt.reclaimed:
                continue
            tok = self._held_pre(pt)
            if tok is None:
                continue
            # atomic swap: the payee signs the return, the payer supplies the secret
            back_key = payer.new_receive_key()
            upd = create_transfer(tok.asset, None, back_key, None, tok.key, unlock_secret=pt.secret)
            payee.take(tok)
            pif = PaymentInFlight(2, payee, payer, tok.asset.with_update(upd), back_key, self.cycle)
            payee.outgoing.append(pif)
            self._register(pif)
            pt.reclaimed = True
            n += 1
        return f"{payer.holder_id} reclaims {n} unrevealed pre-transfers from {payee.holder_id}"

    def op_doublespend(self, op: Op):
        payer = self.world.wallet(op.args[0])
        r1, r2 = self.world.wallet(op.args[1]), self.world.wallet(op.args[2])
        denom = int(op.args[3])
        option = int(op.kw.get("option", 1))
        token = self._token(payer, denom)
        pifs = []
        for r in (r1, r2):
            pif = start_payment(payer, token, r, option=option, cycle=self.cycle)
            payer.tokens.append(token)
            if option == 1:
                deliver(pif)
            pifs.append(pif)
        payer.take(token)
        for pif in pifs:
            self._register(pif)
        return f"{payer.holder_id} double-spends {denom} to {r1.holder_id} and {r2.holder_id}"

    def op_verify(self, op: Op):
        w = self.world.wallet(op.args[0])
        t = self._token(w, int(op.args[1]), any_state=True)
        rep = verify_asset(t.asset, self.world.roots)
        return f"verify {w.holder_id} {op.args[1]} -> {rep.finality}"

    def op_export(self, op: Op):
        w = self.world.wallet(op.args[0])
        t = self._token(w, int(op.args[1]), any_state=True)
        self.result.exports[op.args[2]] = dump_asset(t.asset)
        return f"exported {w.holder_id} {op.args[1]} as {op.args[2]}"

    # faults

    def op_partition(self, op: Op):
        self.world.network.partitioned.add(op.args[0])
        return f"uplink of {op.args[0]} partitioned"

    def op_heal(self, op: Op):
        rid = op.args[0]
        self.world.network.partitioned.discard(rid)
        self.send("forward", rid, delay=self.world.uplink_latency[rid])
        return f"uplink of {rid} healed"

    def op_fork(self, op: Op):
        self.fork_next.add(op.args[0])
        return f"{op.args[0]} will equivocate at its next commitment"

    def op_crash(self, op: Op):
        self.world.network[op.args[0]].offline.add(int(op.args[1]))
        return f"endorser {op.args[1]} of {op.args[0]} down"

    def op_recover(self, op: Op):
        self.world.network[op.args[0]].offline.discard(int(op.args[1]))
        return f"endorser {op.args[1]} of {op.args[0]} up"

    def execute(self, op: Op) -> None:
        handler = getattr(self, f"op_{op.verb}", None)
        if handler is None:
            raise ConfigInvalid(f"line {op.line}: unknown verb {op.verb!r}")
        try:
            self.log(f"ok {handler(op)}")
        except ConfigInvalid:
            raise
        except (InstitutionError, MintError, RelayError, AssetError, KeyError, ValueError) as exc:
            self.log(f"fail {op.text()} -> {type(exc).__name__}: {exc}")

    # -- phases -------------------------------------------------------------

    def deliver_due(self) -> None:
        net = self.world.network
        while True:
            due = sorted(m for m in self.queue if m.due <= self.cycle)
            if not due:
                return
            for m in due:
                self.queue.remove(m)
                if m.kind == "forward":
                    net.forward(m.target)
                    continue
                pif = m.payload
                if self._side(m.origin or net.root_id) != self._side(m.target):
                    self.log(f"drop register to {m.target}: partitioned; retry next cycle")
                    m.due, m.seq = self.cycle + 1, self._seq
                    self._seq += 1
                    self.queue.append(m)
                    continue
                try:
                    register_payment(pif, net)
                except PaymentConflict as exc:
                    self.conflicts += 1
                    self.payments.remove(pif)
                    self.log(f"conflict {pif.recipient.holder_id} loses: {type(exc.conflict).__name__}")

    def commit_relays(self) -> None:
        net = self.world.network
        for r in net.order():
            if not (self.cfg.flush_cycles or self.cycle % r.period == 0):
                continue
            try:
                if r.relay_id in self.fork_next:
                    bogus = CycleEntry(sha256(b"fork", r.relay_id.encode(), bytes([self.cycle % 256])),
                                       sha256(b"fork-successor", r.relay_id.encode()))
                    net.commit_forked(r.relay_id, [bogus], self.cycle, forward=False)
                    self.fork_next.discard(r.relay_id)
                else:
                    net.commit(r.relay_id, self.cycle, forward=False)
            except QuorumUnavailable as exc:
                self.log(f"relay {r.relay_id} skipped cycle: {exc}")
                continue
            lat = self.world.uplink_latency[r.relay_id]
            if lat == 0:
                net.forward(r.relay_id)
            else:
                self.send("forward", r.relay_id, delay=lat)
        while len(net.evidence) > self._seen_evidence:
            ev = net.evidence[self._seen_evidence]
            self._seen_evidence += 1
            self.log(f"equivocation {ev.first.relay_id} seq={ev.first.sequence}")

    def _root_reached(self, asset) -> bool:
        root = self.world.network.root_id
        for st in asset.proof.steps:
            last = st.aggregation[-1].commitment if st.aggregation else st.commitment
            if last.relay_id != root:
                return False
        return True

    def settle_all(self) -> None:
        net = self.world.network
        for pif in list(self.payments):
            if pif.status != "registered":
                continue
            try:
                settle(pif, net)
            except (NotCommittedYet, UnknownEntry):
                continue
            if pif.option == 2:
                deliver(pif)
            self.payments.remove(pif)
        for b in self.world.banks.values():
            b.settle()
        for w in self.world.wallets.values():
            for t in w.tokens:
                if not self._root_reached(t.asset):
                    t.asset = net.extend(t.asset)

    # -- accounting ---------------------------------------------------------

    def live_assets(self) -> dict:
        spent = self.world.system.spent
        found: dict = {}

        def add(cls, asset, validity=None):
            g = asset.genesis_digest
            if g in found or (asset.updates and asset.first_update_digest in spent):
                return
            found[g] = (cls, asset, validity)

        for wid in sorted(self.world.wallets):
            w = self.world.wallets[wid]
            for t in w.tokens:
                add("wallet", t.asset, t.validity)
            for t in w.incoming:
                add("transit", t.asset)
            for p in w.outgoing:
                add("transit", p.asset)
        for bid in sorted(self.world.banks):
            for a in self.world.banks[bid].outstanding():
                add("bank", a)
        return found

    def snapshot(self) -> MetricsSnapshot:
        w = self.world
        plates = w.system.plates
        live = self.live_assets()
        counts = Counter({"wallet": 0, "bank": 0, "transit": 0})
        for cls, _, _ in live.values():
            counts[cls] += 1
        vouchers = sum(v.value for b in w.banks.values() for v in b.vouchers if v.state == "live")
        balances = {f"{bid}/{a}": acct.balance for bid, b in w.banks.items() for a, acct in b.accounts.items()}
        alarms = []
        for pid in sorted(plates):
            alarm = detect_plate_compromise(w.system.ledger, plates[pid])
            if alarm:
                alarms.append(f"{pid}:{alarm.reason.replace(' ', '_')}")
        return MetricsSnapshot(
            self.cycle,
            {pid: p.in_flight for pid, p in plates.items()},
            sum(a.value for _, a, _ in live.values()),
            sum(w.cb.reserves.values()),
            vouchers,
            dict(counts),
            balances,
            dict(self.compliance),
            self.conflicts,
            len(w.network.evidence),
            alarms,
        )

    def check_invariants(self, snap: MetricsSnapshot) -> None:
        w = self.world
        c = self.cycle
        if snap.total_in_flight != snap.outstanding:
            raise InvariantViolation(c, "conservation", f"in-flight {snap.total_in_flight} != outstanding {snap.outstanding}")
        m0 = w.money_supply()
        if m0 != w.m0:
            raise InvariantViolation(c, "money_supply", f"reserves+vouchers+in-flight {m0} != initial {w.m0}")
        for g, (_, asset, validity) in self.live_assets().items():
            sig = asset.updates[0].validity_signature if asset.updates else validity
            if not blindsig.verify(g, sig, asset.genesis.denomination_certificate.plate_key):
                raise InvariantViolation(c, "verifiable", f"asset {g.hex()[:16]} lacks a valid validity signature")
        records = w.system.ledger.records
        bad = minting_invariant_violations(records[self._checked_records:])
        if bad:
            raise InvariantViolation(c, "minting_invariant", f"{len(bad)} recycle records destroy != sign")
        self._checked_records = len(records)
        for rid, relay in w.network.relays.items():
            seen = self._states.setdefault(rid, set())
            start = self._checked_leaves.get(rid, 0)
            for seq in range(start, len(relay.commitments)):
                for e in relay.published_entries(seq):
                    if e.state_digest in seen:
                        raise InvariantViolation(c, "one_successor", f"{rid}: state {e.state_digest.hex()[:16]} published twice")
                    seen.add(e.state_digest)
            self._checked_leaves[rid] = len(relay.commitments)
        for bal in snap.balances.values():
            if bal < 0:
                raise InvariantViolation(c, "balance", "negative account balance")

    # -- driver -------------------------------------------------------------

    def step(self, cycle: int) -> MetricsSnapshot:
        self.cycle = cycle
        ops = [o for o in self.cfg.ops if o.cycle == cycle]
        for op in ops:
            if op.verb not in OBSERVE_VERBS:
                self.execute(op)
        self.deliver_due()
        if cycle > 0:
            self.commit_relays()
            self.deliver_due()
        self.settle_all()
        for op in ops:
            if op.verb in OBSERVE_VERBS:
                self.execute(op)
        snap = self.snapshot()
        self.result.snapshots.append(snap)
        self.check_invariants(snap)
        return snap

    def run(self) -> SimulationResult:
        try:
            for cycle in range(self.cfg.last_cycle + 1):
                self.step(cycle)
        except InvariantViolation as exc:
            self.result.violation = exc
            self.log(f"invariant {exc.assertion} violated: {exc.detail}")
        return self.result


def run_scenario(cfg: SimulationConfig) -> SimulationResult:
    return Simulator(cfg).run()
