"""Exhaustive interleaving of a double-spend race.

A holder signs two conflicting successors of the same state and hands one
to each of two recipients.  Each payment is three messages whose relative
order is fixed by its option; every merge of the two message sequences is
replayed on a fresh, identically seeded world.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..asset import verify_asset
from ..institutions import (
    PaymentConflict,
    PaymentInFlight,
    deliver,
    pay,
    register_payment,
    settle,
    start_payment,
    withdraw,
)
from .config import AccountSpec, BankSpec, PlateSpec, RelaySpec, SimulationConfig, WalletSpec
from .engine import World

STEPS = {1: ("deliver", "register", "settle"), 2: ("register", "settle", "deliver")}


def interleavings(a: list, b: list):
    """Every merge of ``a`` and ``b`` preserving each one's internal order."""
    if not a:
        yield list(b)
        return
    if not b:
        yield list(a)
        return
    for rest in interleavings(a[1:], b):
        yield [a[0]] + rest
    for rest in interleavings(a, b[1:]):
        yield [b[0]] + rest


@dataclass
class RaceOutcome:
    position: int
    options: tuple
    schedule: tuple
    winners: list = field(default_factory=list)
    losers: list = field(default_factory=list)  # (recipient, exception name)

    @property
    def ok(self) -> bool:
        return len(self.winners) == 1 and len(self.losers) == 1 and self.losers[0][1] == "ConflictingSuccessor"


def race_config(seed: int) -> SimulationConfig:
    return SimulationConfig(
        seed=seed,
        cooling_off=0,
        relays=[RelaySpec("root", endorsers=2)],
        plates=[PlateSpec("p100", 100)],
        banks=[BankSpec("bank", reserves=1000)],
        accounts=[AccountSpec("bank", "alice", 100)],
        wallets=[WalletSpec(n) for n in ("alice", "h1", "h2", "bob", "carol")],
    ).validate()


def _prepare(seed: int, position: int):
    """World where the holder at chain ``position`` owns an anchored token."""
    w = World(race_config(seed))
    holder = w.wallets["alice"]
    withdraw(holder, w.banks["bank"], "alice", 100, 0)
    w.network.flush(0)
    for nxt in ("h1", "h2")[:position]:
        tok = holder.tokens[0]
        pay(holder, tok, w.wallets[nxt], w.network, option=1)
        holder = w.wallets[nxt]
    return w, holder


def run_race(seed: int, position: int, options: tuple, schedule: list) -> RaceOutcome:
    w, holder = _prepare(seed, position)
    token = holder.tokens[0]
    recipients = (w.wallets["bob"], w.wallets["carol"])
    pifs: list[PaymentInFlight] = []
    for opt, r in zip(options, recipients):
        pifs.append(start_payment(holder, token, r, option=opt))
        holder.tokens.append(token)
    holder.take(token)
    out = RaceOutcome(position, options, tuple(schedule))
    dead: set[int] = set()
    for who, step in schedule:
        pif = pifs[who]
        if who in dead:
            continue
        if step == "deliver":
            if pif.option == 1 or pif.status == "settled":
                deliver(pif)
        elif step == "register":
            try:
                register_payment(pif, w.network)
            except PaymentConflict as exc:
                dead.add(who)
                out.losers.append((pif.recipient.holder_id, type(exc.conflict).__name__))
        elif step == "settle":
            w.network.flush()
            settle(pif, w.network)
    roots = w.roots
    genesis = token.asset.genesis_digest
    for r in recipients:
        for t in r.tokens:
            if t.asset.genesis_digest == genesis and verify_asset(t.asset, roots).passed:
                out.winners.append(r.holder_id)
    return out


def enumerate_races(seed: int = 0, positions=(0, 1, 2), option_pairs=((1, 1), (1, 2), (2, 1), (2, 2))):
    """Yield a RaceOutcome for every schedule, chain position and option pair."""
    for pos in positions:
        for opts in option_pairs:
            a = [(0, s) for s in STEPS[opts[0]]]
            b = [(1, s) for s in STEPS[opts[1]]]
            for sched in interleavings(a, b):
                yield run_race(seed, pos, opts, sched)
