"""Withdrawal/deposit linking experiment.

N payers withdraw one unit each during a withdrawal window, wait out the
cooling-off delay, pay a merchant, and the merchants deposit.  An adversary
holding every bank-side and minter-side record then tries to pair each
deposit with the withdrawal that produced it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from scipy.stats import binomtest

from .config import parse_scenario
from .engine import SimulationResult, run_scenario


@dataclass
class LinkingResult:
    seed: int
    n: int
    correct: int
    ci_low: float
    ci_high: float

    @property
    def accuracy(self) -> float:
        return self.correct / self.n

    def contains(self, p: float) -> bool:
        return self.ci_low <= p <= self.ci_high


def experiment_scenario(seed: int, n: int = 100, window: int = 40, dt: int = 10, spread: int = 40) -> str:
    rng = random.Random(f"unlinkability:{seed}")
    lines = [
        "relay root period=1",
        f"plate p100 denom=100 cap_in_flight={100 * n} cap_cumulative={1000 * n}",
        # every wallet in the window anchors to the same epoch commitment
        f"set cooling_off={dt} anchor_epoch={window + 1} cycles={window + dt + spread + 10}",
        f"bank bank reserves={100 * n}",
    ]
    payee = list(range(n))
    rng.shuffle(payee)
    for i in range(n):
        lines.append(f"account bank u{i} balance=100")
        lines.append(f"account bank m{i}")
        lines.append(f"wallet u{i}")
        lines.append(f"wallet m{i}")
    for i in range(n):
        w = rng.randint(1, window)
        p = rng.randint(window + dt, window + dt + spread)
        d = p + rng.randint(1, 5)
        m = payee[i]
        lines.append(f"at {w} withdraw u{i} bank:u{i} 100")
        lines.append(f"at {p} pay u{i} m{m} 100 option={rng.choice([1, 2])}")
        lines.append(f"at {d} deposit m{m} bank:m{m} 100")
    return "\n".join(lines) + "\n"


def adversary_view(result: SimulationResult):
    """Everything the bank and minters recorded, nothing else."""
    bank = result.world.banks["bank"]
    withdrawals = list(bank.withdrawal_log)  # (cycle, account, plate, blinded hex)
    deposits = list(bank.deposit_log)  # (cycle, account, asset)
    ledger = list(result.world.system.ledger.records)
    return withdrawals, deposits, ledger


def match(withdrawals, deposits, ledger=None) -> dict[int, int]:
    """Pair deposits with withdrawals using every observable constraint:
    plate, the genesis anchor epoch (withdrawal at or after the anchor), the
    first anchored update (withdrawal before it), then earliest-first."""
    taken: set[int] = set()
    out: dict[int, int] = {}
    order = sorted(range(len(deposits)), key=lambda j: (deposits[j][0], j))
    for j in order:
        _, _, asset = deposits[j]
        anchor_seq = asset.proof.anchor.sequence
        first_seq = asset.proof.steps[0].commitment.sequence if asset.proof.steps else 10**9
        cands = [
            i for i, (wc, _, plate, _) in enumerate(withdrawals)
            if i not in taken and plate == asset.plate_id and anchor_seq <= wc <= first_seq
        ]
        if not cands:
            cands = [i for i in range(len(withdrawals)) if i not in taken]
        pick = min(cands, key=lambda i: (withdrawals[i][0], i))
        taken.add(pick)
        out[j] = pick
    return out


def ground_truth(result: SimulationResult) -> dict[int, int]:
    """Deposit index -> withdrawal index, from the wallets' private state."""
    bank = result.world.banks["bank"]
    by_account = {}
    for i, (_, acct, _, _) in enumerate(bank.withdrawal_log):
        by_account[acct] = i
    owner = {}
    for wid, w in result.world.wallets.items():
        for g in w.geneses:
            owner[g.owner_public_key] = wid
    truth = {}
    for j, (_, _, asset) in enumerate(bank.deposit_log):
        truth[j] = by_account[owner[asset.genesis.owner_public_key]]
    return truth


def run_linking(seed: int, n: int = 100, **kw) -> LinkingResult:
    cfg = parse_scenario(experiment_scenario(seed, n, **kw))
    cfg.seed = seed
    res = run_scenario(cfg)
    if res.violation:
        raise res.violation
    w, d, ledger = adversary_view(res)
    if len(w) != n or len(d) != n:
        raise RuntimeError(f"experiment incomplete: {len(w)} withdrawals, {len(d)} deposits")
    guess = match(w, d, ledger)
    truth = ground_truth(res)
    correct = sum(1 for j in guess if guess[j] == truth[j])
    ci = binomtest(correct, n).proportion_ci(0.95, method="exact")
    return LinkingResult(seed, n, correct, ci.low, ci.high)


def pooled(results: list[LinkingResult]) -> LinkingResult:
    k = sum(r.correct for r in results)
    n = sum(r.n for r in results)
    ci = binomtest(k, n).proportion_ci(0.95, method="exact")
    return LinkingResult(-1, n, k, ci.low, ci.high)
