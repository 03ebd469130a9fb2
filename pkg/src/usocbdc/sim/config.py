"""Simulation configuration and the line-oriented scenario format.

A scenario file is a list of directives, one per line; ``#`` starts a
comment.  Declarations::

    seed 7
    set key_bits=512 cooling_off=10 anchor_epoch=1 cycles=40 latency=0 minters=1
    relay root period=1 endorsers=3 quorum=2
    relay local parent=root period=1 latency=0
    plate p100 denom=100 cap_in_flight=10000 cap_cumulative=1000000 expiry=100000
    bank bankA reserves=1000 require_global=no
    account bankA alice balance=150
    wallet alice relay=root
    rule max_hops=1 require_commitment=no commitment_from=1 threshold=none

and a schedule, ``at <cycle> <verb> <args...> [key=value...]``.  See
the ``op_*`` methods of ``engine.Simulator`` for the verbs.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, fields, replace

from ..compliance import ComplianceRule
from ..relay import ConfigError, validate_topology

FAULT_VERBS = {"partition", "heal", "fork", "crash", "recover"}


class ConfigInvalid(ValueError):
    pass


@dataclass
class RelaySpec:
    relay_id: str
    parent: str | None = None
    period: int = 1
    endorsers: int = 1
    quorum: int | None = None
    latency: int = 0  # uplink latency in cycles


@dataclass
class PlateSpec:
    plate_id: str
    denomination: int
    cap_in_flight: int = 10**9
    cap_cumulative: int = 10**12
    expiry: int = 10**9


@dataclass
class BankSpec:
    bank_id: str
    reserves: int = 0
    require_global: bool = False


@dataclass
class AccountSpec:
    bank_id: str
    account_id: str
    balance: int = 0


@dataclass
class WalletSpec:
    wallet_id: str
    relay: str | None = None


@dataclass
class Op:
    cycle: int
    verb: str
    args: tuple
    kw: dict
    line: int = 0

    def text(self) -> str:
        extra = [f"{k}={v}" for k, v in sorted(self.kw.items())]
        return " ".join([self.verb, *self.args, *extra])


@dataclass
class SimulationConfig:
    seed: int = 0
    key_bits: int = 512
    cooling_off: int = 10
    anchor_epoch: int = 1
    latency: int = 0  # wallet/bank -> relay
    cycles: int | None = None
    minters: int = 1
    flush_cycles: bool = False
    relays: list = field(default_factory=list)
    plates: list = field(default_factory=list)
    banks: list = field(default_factory=list)
    accounts: list = field(default_factory=list)
    wallets: list = field(default_factory=list)
    rules: ComplianceRule = field(default_factory=ComplianceRule)
    ops: list = field(default_factory=list)

    @property
    def faults(self) -> list[Op]:
        return [o for o in self.ops if o.verb in FAULT_VERBS]

    @property
    def last_cycle(self) -> int:
        if self.cycles is not None:
            return self.cycles
        return max((o.cycle for o in self.ops), default=0) + 5

    def validate(self) -> "SimulationConfig":
        if not self.relays:
            self.relays = [RelaySpec("root")]
        ids = [r.relay_id for r in self.relays]
        if len(set(ids)) != len(ids):
            raise ConfigInvalid("duplicate relay id")
        try:
            validate_topology({r.relay_id: r.parent for r in self.relays})
        except ConfigError as exc:
            raise ConfigInvalid(str(exc)) from None
        if sum(1 for r in self.relays if not r.parent) != 1:
            raise ConfigInvalid("relay topology must have exactly one root")
        for r in self.relays:
            if r.period < 1 or r.endorsers < 1 or r.latency < 0:
                raise ConfigInvalid(f"relay {r.relay_id}: period/endorsers must be positive")
            if r.quorum is not None and not 1 <= r.quorum <= r.endorsers:
                raise ConfigInvalid(f"relay {r.relay_id}: quorum out of range")
        if self.key_bits < 256 or self.cooling_off < 0 or self.latency < 0 or self.minters < 1:
            raise ConfigInvalid("bad global setting")
        banks = {b.bank_id for b in self.banks}
        for a in self.accounts:
            if a.bank_id not in banks:
                raise ConfigInvalid(f"account {a.account_id}: unknown bank {a.bank_id}")
            if a.balance < 0:
                raise ConfigInvalid(f"account {a.account_id}: negative balance")
        for w in self.wallets:
            if w.relay is not None and w.relay not in ids:
                raise ConfigInvalid(f"wallet {w.wallet_id}: unknown relay {w.relay}")
        if len({p.plate_id for p in self.plates}) != len(self.plates):
            raise ConfigInvalid("duplicate plate id")
        for o in self.ops:
            if o.cycle < 0:
                raise ConfigInvalid(f"line {o.line}: negative cycle")
        return self


# ---- parsing ---------------------------------------------------------------


def _bool(v: str) -> bool:
    if v.lower() in ("yes", "on", "true", "1"):
        return True
    if v.lower() in ("no", "off", "false", "0"):
        return False
    raise ConfigInvalid(f"not a boolean: {v!r}")


def _opt_int(v: str) -> int | None:
    return None if v.lower() in ("none", "unlimited", "-") else int(v)


def _split(tokens: list[str]) -> tuple[list[str], dict[str, str]]:
    args, kw = [], {}
    for t in tokens:
        if "=" in t:
            k, v = t.split("=", 1)
            kw[k] = v
        else:
            args.append(t)
    return args, kw


def _build(cls, name_fields: list[str], args: list[str], kw: dict, conv: dict, lineno: int):
    allowed = {f.name for f in fields(cls)}
    alias = {"denom": "denomination"}
    vals = dict(zip(name_fields, args))
    for k, v in kw.items():
        k = alias.get(k, k)
        if k not in allowed:
            raise ConfigInvalid(f"line {lineno}: unknown key {k!r}")
        vals[k] = conv.get(k, str)(v)
    try:
        return cls(**vals)
    except TypeError as exc:
        raise ConfigInvalid(f"line {lineno}: {exc}") from None


_RULE_KEYS = {
    "max_hops": ("max_hops", _opt_int),
    "require_commitment": ("require_recipient_commitment", _bool),
    "commitment_from": ("commitment_from_hop", int),
    "threshold": ("deposit_evidence_threshold", _opt_int),
}


def parse_rule(kw: dict, base: ComplianceRule | None = None) -> ComplianceRule:
    changes = {}
    for k, v in kw.items():
        if k == "bank":
            continue
        if k not in _RULE_KEYS:
            raise ConfigInvalid(f"unknown rule key {k!r}")
        name, conv = _RULE_KEYS[k]
        changes[name] = conv(v)
    try:
        return replace(base or ComplianceRule(), **changes)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


_SETTINGS = {"key_bits": int, "cooling_off": int, "anchor_epoch": int, "latency": int,
             "cycles": int, "minters": int, "flush_cycles": _bool, "seed": int}


def parse_scenario(text: str, base: SimulationConfig | None = None) -> SimulationConfig:
    cfg = base if base is not None else SimulationConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise ConfigInvalid(f"line {lineno}: {exc}") from None
        head, rest = tokens[0], tokens[1:]
        args, kw = _split(rest)
        try:
            if head == "seed":
                cfg.seed = int(args[0])
            elif head == "set":
                for k, v in kw.items():
                    if k not in _SETTINGS:
                        raise ConfigInvalid(f"line {lineno}: unknown setting {k!r}")
                    setattr(cfg, k, _SETTINGS[k](v))
            elif head == "relay":
                cfg.relays.append(_build(RelaySpec, ["relay_id"], args, kw,
                                         {"period": int, "endorsers": int, "quorum": int, "latency": int}, lineno))
            elif head == "plate":
                cfg.plates.append(_build(PlateSpec, ["plate_id"], args, kw,
                                         {k: int for k in ("denomination", "cap_in_flight", "cap_cumulative", "expiry")}, lineno))
            elif head == "bank":
                cfg.banks.append(_build(BankSpec, ["bank_id"], args, kw, {"reserves": int, "require_global": _bool}, lineno))
            elif head == "account":
                cfg.accounts.append(_build(AccountSpec, ["bank_id", "account_id"], args, kw, {"balance": int}, lineno))
            elif head == "wallet":
                cfg.wallets.append(_build(WalletSpec, ["wallet_id"], args, kw, {}, lineno))
            elif head == "rule":
                cfg.rules = parse_rule(kw, cfg.rules)
            elif head == "at":
                if len(args) < 2:
                    raise ConfigInvalid(f"line {lineno}: 'at' needs a cycle and a verb")
                cfg.ops.append(Op(int(args[0]), args[1], tuple(args[2:]), kw, lineno))
            else:
                raise ConfigInvalid(f"line {lineno}: unknown directive {head!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"line {lineno}: {exc}") from None
    return cfg


def describe(cfg: SimulationConfig) -> list[str]:
    """Canonical header lines for results files."""
    r = cfg.rules
    out = [
        f"# seed={cfg.seed} key_bits={cfg.key_bits} cooling_off={cfg.cooling_off} anchor_epoch={cfg.anchor_epoch} "
        f"latency={cfg.latency} cycles={cfg.last_cycle} minters={cfg.minters} flush_cycles={int(cfg.flush_cycles)}",
        f"# rules max_hops={r.max_hops} require_commitment={int(r.require_recipient_commitment)} "
        f"commitment_from={r.commitment_from_hop} threshold={r.deposit_evidence_threshold}",
    ]
    for rs in cfg.relays:
        out.append(f"# relay {rs.relay_id} parent={rs.parent or '-'} period={rs.period} "
                   f"endorsers={rs.endorsers} quorum={rs.quorum or rs.endorsers} latency={rs.latency}")
    for p in cfg.plates:
        out.append(f"# plate {p.plate_id} denom={p.denomination} cap_in_flight={p.cap_in_flight} "
                   f"cap_cumulative={p.cap_cumulative} expiry={p.expiry}")
    out.append(f"# ops={len(cfg.ops)}")
    return out
