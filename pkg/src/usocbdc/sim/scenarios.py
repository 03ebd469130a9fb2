"""Built-in scenarios and a seeded random scenario generator."""

from __future__ import annotations

import random

from .config import SimulationConfig, parse_scenario
from .engine import SimulationResult, run_scenario

_TOPOLOGY = """
relay root period=1 endorsers=3 quorum=2
plate p100 denom=100 cap_in_flight=100000 cap_cumulative=10000000 expiry=100000
plate p10 denom=10 cap_in_flight=100000 cap_cumulative=10000000 expiry=100000
"""

ACT1_ACT2 = _TOPOLOGY + """
set cooling_off=2 cycles=20
bank alices-bank reserves=1000
bank bobs-bank reserves=1000
bank daves-bank reserves=1000
account alices-bank alice balance=150
account bobs-bank bob
account bobs-bank charlie balance=100
account daves-bank dave
wallet alice
wallet bob
wallet charlie
wallet dave

# act one: voucher, withdrawal, payment, deposit
at 0 vouchers alices-bank 100
at 1 withdraw alice alices-bank:alice 100
at 4 pay alice bob 100 option=1
at 5 export bob 100 bill
at 6 deposit bob bobs-bank:bob 100
# act two: the deposited unit is recycled for charlie, then retired
at 8 withdraw charlie bobs-bank:charlie 100
at 11 pay charlie dave 100 option=2
at 13 deposit dave daves-bank:dave 100
at 15 buyback daves-bank all
"""

DISCONNECTED = """
relay root period=1 endorsers=3 quorum=2
relay local parent=root period=1 endorsers=2
plate p100 denom=100 cap_in_flight=100000 cap_cumulative=10000000 expiry=100000
set cooling_off=1 cycles=28
bank bank reserves=1000
account bank alice balance=500
account bank bob
wallet alice relay=local
wallet bob relay=local

at 0 vouchers bank 200
at 1 withdraw alice bank:alice 100
at 2 withdraw alice bank:alice 100
at 10 partition local
at 12 pay alice bob 100 option=1
at 12 verify bob 100
at 15 verify bob 100
at 20 heal local
at 20 verify bob 100
at 23 verify bob 100
at 24 deposit bob bank:bob 100
"""

DISCONNECTED_FORK = DISCONNECTED.replace("at 12 verify bob 100\n", "at 12 verify bob 100\nat 15 fork local\n")

TIME_SHIFTED = _TOPOLOGY + """
set cooling_off=1 cycles=20
bank bank reserves=1000
account bank alice balance=1000
account bank shop
wallet alice
wallet shop

at 0 vouchers bank 500
at 1 withdraw alice bank:alice 100
at 1 withdraw alice bank:alice 100
at 1 withdraw alice bank:alice 100
at 1 withdraw alice bank:alice 100
at 1 withdraw alice bank:alice 100
at 3 pretransfer alice shop 100 count=5
# offline window: secrets revealed, no relay traffic
at 6 reveal alice shop count=3
at 7 claim shop
at 10 reclaim alice shop
at 14 deposit shop bank:shop 100
"""

CHAINED = _TOPOLOGY + """
set cooling_off=1 cycles=20
rule max_hops=3 require_commitment=yes
bank bank reserves=1000
account bank alice balance=200
account bank bob
account bank carol
account bank dave
wallet alice
wallet bob
wallet carol
wallet dave

at 0 vouchers bank 100
at 1 withdraw alice bank:alice 100
at 3 pay alice bob 100 commit=bank:bob
at 5 pay bob carol 100 commit=bank:carol
at 7 pay carol dave 100 commit=bank:dave
at 9 deposit dave bank:dave 100
"""

CHAINED_GAP = CHAINED.replace("at 5 pay bob carol 100 commit=bank:carol", "at 5 pay bob carol 100")

DOUBLE_SPEND = _TOPOLOGY + """
set cooling_off=1 cycles=10
bank bank reserves=1000
account bank alice balance=200
wallet alice
wallet bob
wallet carol

at 0 vouchers bank 100
at 1 withdraw alice bank:alice 100
at 3 doublespend alice bob carol 100
"""

BUILTIN = {
    "act1-act2": ACT1_ACT2,
    "disconnected": DISCONNECTED,
    "disconnected-fork": DISCONNECTED_FORK,
    "time-shifted": TIME_SHIFTED,
    "chained": CHAINED,
    "chained-gap": CHAINED_GAP,
    "double-spend": DOUBLE_SPEND,
}


def builtin(name: str, seed: int = 0, **settings) -> SimulationConfig:
    if name not in BUILTIN:
        raise KeyError(f"no built-in scenario {name!r}; choose from {', '.join(sorted(BUILTIN))}")
    cfg = parse_scenario(BUILTIN[name])
    cfg.seed = seed
    for k, v in settings.items():
        setattr(cfg, k, v)
    return cfg


def run_builtin(name: str, seed: int = 0, **settings) -> SimulationResult:
    return run_scenario(builtin(name, seed, **settings))


def scenario_disconnected(seed: int = 0, fork: bool = False) -> SimulationResult:
    return run_builtin("disconnected-fork" if fork else "disconnected", seed)


def scenario_time_shifted(seed: int = 0) -> SimulationResult:
    return run_builtin("time-shifted", seed)


def scenario_chained(seed: int = 0, gap: bool = False) -> SimulationResult:
    return run_builtin("chained-gap" if gap else "chained", seed)


# ---- random scenarios ------------------------------------------------------


def random_scenario(seed: int, n_ops: int = 200) -> str:
    """A seeded mix of every operation kind, with partitions and endorser
    crashes sprinkled in.  Many operations legitimately fail (no funds, no
    token, compliance); the point is that invariants hold regardless."""
    rng = random.Random(f"random-scenario:{seed}")
    banks = ["b0", "b1", "b2"]
    people = [f"w{i}" for i in range(8)]
    lines = [
        "relay root period=1 endorsers=3 quorum=2",
        "relay east parent=root period=2 endorsers=2 quorum=1",
        "relay west parent=root period=1 latency=1",
        "plate p100 denom=100 cap_in_flight=5000 cap_cumulative=1000000 expiry=100000",
        "plate p50 denom=50 cap_in_flight=5000 cap_cumulative=1000000 expiry=100000",
        "plate p10 denom=10 cap_in_flight=5000 cap_cumulative=1000000 expiry=100000",
        f"set cooling_off={rng.randint(0, 3)} anchor_epoch={rng.choice([1, 5])}",
        f"rule max_hops={rng.choice([1, 2, 3, 'none'])} threshold={rng.choice([100, 'none'])}",
    ]
    for b in banks:
        lines.append(f"bank {b} reserves={rng.randrange(500, 3000, 10)}")
    for p in people:
        lines.append(f"account {rng.choice(banks)} {p} balance={rng.randrange(0, 800, 10)}")
        lines.append(f"wallet {p} relay={rng.choice(['root', 'east', 'west'])}")
    home = {}
    for ln in lines:
        if ln.startswith("account"):
            _, b, p, _ = ln.split()
            home[p] = f"{b}:{p}"
    cycle = 0
    ops = []
    for _ in range(n_ops):
        cycle += rng.choice([0, 0, 1, 1, 2])
        kind = rng.choices(
            ["vouchers", "withdraw", "pay", "deposit", "change", "buyback", "rule", "doublespend", "fault", "pretransfer"],
            [6, 20, 22, 14, 4, 4, 2, 3, 4, 2],
        )[0]
        a, b = rng.sample(people, 2)
        d = rng.choice([100, 50, 10])
        if kind == "vouchers":
            ops.append(f"at {cycle} vouchers {rng.choice(banks)} {rng.choice([50, 100, 200, 300])}")
        elif kind == "withdraw":
            ops.append(f"at {cycle} withdraw {a} {home[a]} {d}")
        elif kind == "pay":
            extra = f" commit={home[b]}" if rng.random() < 0.5 else ""
            ops.append(f"at {cycle} pay {a} {b} {d} option={rng.choice([1, 2])}{extra}")
        elif kind == "deposit":
            over = " override=yes" if rng.random() < 0.3 else ""
            ops.append(f"at {cycle} deposit {a} {home[a]} {d}{over}")
        elif kind == "change":
            ops.append(f"at {cycle} change {a} {home[a]} 100 owe=90 payer={b}")
        elif kind == "buyback":
            ops.append(f"at {cycle} buyback {rng.choice(banks)} {rng.choice(['all', '100', '200'])}")
        elif kind == "rule":
            ops.append(f"at {cycle} rule max_hops={rng.choice([1, 2, 3, 'none'])}")
        elif kind == "doublespend":
            c = rng.choice([p for p in people if p not in (a, b)])
            ops.append(f"at {cycle} doublespend {a} {b} {c} {d} option={rng.choice([1, 2])}")
        elif kind == "pretransfer":
            ops.append(f"at {cycle} pretransfer {a} {b} {d} count=1")
            ops.append(f"at {cycle + 2} reveal {a} {b} count=1")
            ops.append(f"at {cycle + 4} reclaim {a} {b}")
        elif kind == "fault":
            r = rng.choice(["east", "west"])
            f = rng.choice(["partition", "crash"])
            if f == "partition":
                ops.append(f"at {cycle} partition {r}")
                ops.append(f"at {cycle + rng.randint(1, 6)} heal {r}")
            else:
                ops.append(f"at {cycle} crash {r} 0")
                ops.append(f"at {cycle + rng.randint(1, 4)} recover {r} 0")
    lines.extend(ops)
    lines.append(f"set cycles={cycle + 12}")
    return "\n".join(lines) + "\n"


def random_config(seed: int, n_ops: int = 200) -> SimulationConfig:
    cfg = parse_scenario(random_scenario(seed, n_ops))
    cfg.seed = seed
    return cfg
