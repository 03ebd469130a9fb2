import random

import pytest

from conftest import small_config
from usocbdc.asset import GLOBALLY_FINAL, claim_ready, verify_asset
from usocbdc.compliance import FAIL, NEEDS_EVIDENCE, PASS, ComplianceRule, check_compliance
from usocbdc.institutions import (
    ComplianceFailed,
    CoolingOff,
    InsufficientFunds,
    InsufficientReserves,
    PaymentConflict,
    UnverifiedRecipient,
    buy_back,
    certify_key,
    deliver,
    deposit,
    deposit_with_change,
    issue_vouchers,
    key_certificate_valid,
    pay,
    register_payment,
    settle,
    start_payment,
    time_lock,
    withdraw,
)
from usocbdc.mint import ValueMismatch
from usocbdc.relay import ConflictingSuccessor
from usocbdc.sigs import KeyPair
from usocbdc.sim.engine import World


def chain(world, hops, commit=True, payer="dave"):
    """Withdraw 100 and pass it along ``hops`` wallets; returns the last holder."""
    names = ["alice", "bob", "carol", "alice", "bob"]
    bank = world.banks["bank"]
    holder = world.wallets[payer]
    tok = withdraw(holder, bank, payer, 100, 0)
    world.network.flush()
    for i in range(hops):
        nxt = world.wallets[names[i]]
        acct = bank.accounts.get(names[i]) or world.banks["other"].accounts[names[i]]
        pay(holder, tok, nxt, world.network, recipient_commitment=acct.commitment if commit else None)
        holder, tok = nxt, nxt.tokens[-1]
    return holder, tok


def test_withdraw_debits_account(world):
    bank = world.banks["bank"]
    alice = world.wallets["alice"]
    tok = withdraw(alice, bank, "alice", 100, 0)
    assert bank.accounts["alice"].balance == 50
    world.network.flush()
    pif = pay(alice, tok, world.wallets["bob"], world.network)
    assert verify_asset(pif.asset, world.roots).passed
    with pytest.raises(InsufficientFunds):
        withdraw(alice, bank, "alice", 100, 0)
    assert bank.accounts["alice"].balance == 50
    assert len(alice.geneses) == 1


def test_double_pay_one_winner(world):
    dave, bob, carol = (world.wallets[n] for n in ("dave", "bob", "carol"))
    tok = withdraw(dave, world.banks["bank"], "dave", 100, 0)
    world.network.flush()
    pay(dave, tok, bob, world.network)
    dave.tokens.append(tok)  # replay the spent state
    with pytest.raises(PaymentConflict) as exc:
        pay(dave, tok, carol, world.network)
    assert isinstance(exc.value.conflict, ConflictingSuccessor)
    assert carol.tokens == [] and carol.incoming == []
    assert len(bob.tokens) == 1


def test_cooling_off(world):
    dave = world.wallets["dave"]
    tok = withdraw(dave, world.banks["bank"], "dave", 100, 5)
    world.network.flush()
    with pytest.raises(CoolingOff):
        start_payment(dave, tok, world.wallets["bob"], cycle=7, cooling_off=3)
    assert dave.spendable(7, 3) == [] and dave.spendable(8, 3) == [tok]


def test_option2_registers_before_delivery(world):
    dave, bob = world.wallets["dave"], world.wallets["bob"]
    tok = withdraw(dave, world.banks["bank"], "dave", 100, 0)
    world.network.flush()
    pif = start_payment(dave, tok, bob, option=2)
    register_payment(pif, world.network)
    assert bob.tokens == [] and len(dave.outstanding()) == 1
    world.network.flush()
    settle(pif, world.network)
    deliver(pif)
    assert len(bob.tokens) == 1 and verify_asset(bob.tokens[0].asset, world.roots).finality == GLOBALLY_FINAL


@pytest.mark.parametrize("hops,max_hops,ok", [(1, 1, True), (2, 1, False), (2, 3, True), (3, 3, True)])
def test_deposit_hop_rules(world, hops, max_hops, ok):
    holder, tok = chain(world, hops)
    bank = world.banks["other"] if holder.holder_id == "carol" else world.banks["bank"]
    bank.rules = ComplianceRule(max_hops=max_hops, require_recipient_commitment=True)
    acct = holder.holder_id
    if ok:
        res = deposit(holder, bank, acct, tok)
        assert res.credited == 100 and bank.accounts[acct].balance >= 100
    else:
        with pytest.raises(ComplianceFailed):
            deposit(holder, bank, acct, tok)
        assert tok in holder.tokens


def test_missing_commitment_names_hop(world):
    holder, tok = chain(world, 1)
    # hop 2 without a commitment, hop 3 with
    pay(holder, tok, world.wallets["bob"], world.network)
    bob = world.wallets["bob"]
    bob_tok = bob.tokens[-1]
    pay(bob, bob_tok, world.wallets["carol"], world.network, recipient_commitment=world.banks["other"].accounts["carol"].commitment)
    rep = check_compliance(world.wallets["carol"].tokens[-1].asset, ComplianceRule(max_hops=3, require_recipient_commitment=True))
    assert rep.verdict == FAIL and rep.failed_hops == [2]
    assert "hop 2" in rep.findings[0][1]


def test_evidence_threshold_and_override(world):
    holder, tok = chain(world, 1)
    bank = world.banks["bank"]
    bank.rules = ComplianceRule(deposit_evidence_threshold=50)
    assert check_compliance(tok.asset, bank.rules).verdict == NEEDS_EVIDENCE
    with pytest.raises(ComplianceFailed):
        deposit(holder, bank, "alice", tok)
    res = deposit(holder, bank, "alice", tok, override=True)
    assert res.overridden and bank.compliance_log[-1][2] == "override"


def test_rule_change_applies_to_next_deposit(world):
    holder, tok = chain(world, 2)
    bank = world.banks["bank"]
    bank.rules = ComplianceRule(max_hops=1)
    with pytest.raises(ComplianceFailed):
        deposit(holder, bank, "bob", tok)
    bank.rules = ComplianceRule(max_hops=2)
    assert deposit(holder, bank, "bob", tok).report.verdict == PASS


def test_change(world):
    bank = world.banks["bank"]
    holder, tok = chain(world, 1)  # alice holds 100
    dave = world.wallets["dave"]
    cert = world.cb.certificates["p10"]
    req, blinded = dave.prepare_withdrawal(cert, world.network["root"].latest, world.cb.root.public)
    res = deposit_with_change(holder, bank, "alice", tok, 90, "p10", blinded)
    assert res.credited == 90 and bank.accounts["alice"].balance == 150 + 90
    change = dave.finish_withdrawal(req, res.change, 1)
    assert change.value == 10


def test_change_value_mismatch(world):
    bank = world.banks["bank"]
    holder, tok = chain(world, 1)
    dave = world.wallets["dave"]
    cert = world.cb.certificates["p10"]
    _, blinded = dave.prepare_withdrawal(cert, world.network["root"].latest, world.cb.root.public)
    with pytest.raises(ValueMismatch):
        deposit_with_change(holder, bank, "alice", tok, 80, "p10", blinded)
    assert tok in holder.tokens and bank.accounts["alice"].balance == 150


def test_vouchers_and_reserves(world):
    cb, bank = world.cb, world.banks["bank"]
    vs = issue_vouchers(cb, bank, 500)
    assert cb.reserves["bank"] == 500 and sum(v.value for v in vs) == 500
    with pytest.raises(InsufficientReserves):
        issue_vouchers(cb, bank, 600)
    assert cb.reserves["bank"] == 500


def test_buy_back_restores_reserves(world):
    holder, tok = chain(world, 1)
    bank = world.banks["bank"]
    before = world.cb.reserves["bank"]
    deposit(holder, bank, "alice", tok)
    world.network.flush()
    bank.settle()
    assert buy_back(world.cb, bank, list(bank.stock)) == 100
    assert world.cb.reserves["bank"] == before + 100
    assert world.system.plates["p100"].in_flight == 0


def test_key_certificate():
    ca = KeyPair.generate(random.Random(1))
    subject = KeyPair.generate(random.Random(2))
    cert = certify_key(ca, "bob", subject.public)
    assert key_certificate_valid(cert, [ca.public])
    assert not key_certificate_valid(cert, [KeyPair.generate().public])


def test_unverified_recipient_refused(world):
    dave = world.wallets["dave"]
    tok = withdraw(dave, world.banks["bank"], "dave", 100, 0)
    world.network.flush()
    ca = KeyPair.generate(random.Random(3))
    forged = certify_key(KeyPair.generate(), "bob", b"k" * 32)
    with pytest.raises(UnverifiedRecipient):
        start_payment(dave, tok, world.wallets["bob"], recipient_certificate=forged, certifiers=[ca.public])
    assert tok in dave.tokens


def test_time_lock_claim(world):
    dave, bob = world.wallets["dave"], world.wallets["bob"]
    tok = withdraw(dave, world.banks["bank"], "dave", 100, 0)
    world.network.flush()
    secret, lock = time_lock(random.Random(4))
    pif = pay(dave, tok, bob, world.network, owner_lock=lock)
    assert verify_asset(pif.asset, world.roots).passed
    assert not claim_ready(pif.asset, None)
    assert not claim_ready(pif.asset, b"wrong")
    assert claim_ready(pif.asset, secret)
    assert bob.spendable(0) == []


def test_seeded_world_is_deterministic():
    a, b = World(small_config(seed=9)), World(small_config(seed=9))
    assert a.roots == b.roots
    ta = withdraw(a.wallets["dave"], a.banks["bank"], "dave", 100, 0)
    tb = withdraw(b.wallets["dave"], b.banks["bank"], "dave", 100, 0)
    assert ta.asset == tb.asset
