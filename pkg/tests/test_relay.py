import hashlib
import random
from dataclasses import replace

import pytest

from usocbdc import instrument, merkle
from usocbdc.codec import encode, selector
from usocbdc.commitments import (
    CycleEntry,
    aggregation_entry,
    commitment_endorsed,
    detect_equivocation,
    proof_matches,
    verify_evidence,
)
from usocbdc.relay import ConfigError, ConflictingSuccessor, NotCommittedYet, Relay, RelayNetwork, validate_topology
from usocbdc.sigs import KeyPair


def entry(i, succ=None):
    return CycleEntry(selector(f"s{i}".encode()), selector(f"n{i}:{succ}".encode()))


def make_relay(rid="r", n=2, quorum=None, parent=None, seed=0):
    rng = random.Random(f"{rid}:{seed}")
    return Relay(rid, [KeyPair.generate(rng) for _ in range(n)], quorum, parent=parent)


def roots_for(*relays):
    return RelayNetwork(list(relays)).trust_roots(b"issuer")


def test_receipt_names_next_cycle():
    r = make_relay()
    n = r.next_sequence
    rec = r.submit(entry(0))
    assert rec.sequence == n and not rec.duplicate
    c = r.commit_cycle()
    assert c.sequence == n and c.n_entries == 1


def test_duplicate_is_idempotent():
    r = make_relay()
    r.submit(entry(0))
    assert r.submit(entry(0)).duplicate
    r.commit_cycle()
    assert r.submit(entry(0)).duplicate
    assert r.pending_count == 0


def test_conflicting_successor():
    r = make_relay()
    r.submit(entry(0, "a"))
    with pytest.raises(ConflictingSuccessor):
        r.submit(entry(0, "b"))
    r.commit_cycle()
    with pytest.raises(ConflictingSuccessor):
        r.submit(entry(0, "b"))


def test_empty_and_singleton_roots():
    r = make_relay()
    assert r.latest.batch_root == merkle.EMPTY_ROOT == hashlib.sha256(b"EMPTY-CYCLE").digest()
    e = entry(0)
    r.submit(e)
    c = r.commit_cycle()
    assert c.batch_root == hashlib.sha256(b"\x00" + encode(e)).digest()


def brute_root(hashes):
    # level-by-level builder written independently of the library
    if not hashes:
        return hashlib.sha256(b"EMPTY-CYCLE").digest()
    level = list(hashes)
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            if i + 1 < len(level):
                nxt.append(hashlib.sha256(b"\x01" + level[i] + level[i + 1]).digest())
            else:
                nxt.append(level[i])
        level = nxt
    return level[0]


def test_seven_entries_match_brute_force():
    r = make_relay()
    es = [entry(i) for i in range(7)]
    for e in es:
        r.submit(e)
    c = r.commit_cycle()
    leaves = sorted(es, key=lambda e: e.state_digest)
    assert c.batch_root == brute_root([hashlib.sha256(b"\x00" + encode(e)).digest() for e in leaves])
    for e in es:
        p = r.prove_inclusion(e)
        assert proof_matches(p, c)


def test_pending_entry_not_committed():
    r = make_relay()
    r.submit(entry(0))
    with pytest.raises(NotCommittedYet):
        r.prove_inclusion(entry(0))


def test_proof_replayed_against_other_cycle():
    r = make_relay()
    for cyc in range(3):
        for i in range(4):
            r.submit(entry(cyc * 10 + i))
        r.commit_cycle()
    p = r.prove_inclusion(entry(11))
    c = r.commitment(p.sequence)
    assert proof_matches(p, c)
    for other in r.commitments:
        if other.sequence != c.sequence:
            assert not proof_matches(p, other)
            assert not proof_matches(replace(p, sequence=other.sequence), other)


def test_aggregation_into_parent():
    root = make_relay("root")
    child = make_relay("child", parent="root")
    net = RelayNetwork([root, child])
    child.submit(entry(0))
    c = net.commit("child")
    nxt = root.next_sequence
    pc = net.commit("root")
    assert pc.sequence == nxt
    p = root.prove_inclusion(aggregation_entry(c))
    assert proof_matches(p, pc)
    assert p.leaf.successor_digest == c.id


def test_cyclic_topology_rejected():
    with pytest.raises(ConfigError):
        validate_topology({"a": "b", "b": "a"})
    with pytest.raises(ConfigError):
        validate_topology({"a": "a"})
    with pytest.raises(ConfigError):
        validate_topology({"a": "ghost"})
    validate_topology({"root": None, "a": "root", "b": "a"})


def test_quorum_and_endorsements():
    r = make_relay(n=3, quorum=2)
    roots = roots_for(r)
    c = r.commit_cycle()
    assert commitment_endorsed(c, roots)
    r.offline = {0}
    c2 = r.commit_cycle()
    assert len(c2.endorsements) == 2 and commitment_endorsed(c2, roots)
    assert not commitment_endorsed(replace(c2, endorsements=c2.endorsements[:1]), roots)


def test_equivocation_examples():
    r = make_relay()
    roots = roots_for(r)
    while r.next_sequence < 12:
        r.commit_cycle()
    r.submit(entry(1))
    honest, forged = r.fork_commit([entry(2)])
    assert honest.sequence == forged.sequence == 12
    ev = detect_equivocation(honest, forged)
    assert ev is not None and verify_evidence(ev, roots)
    # honest consecutive pair, and a duplicated message
    assert detect_equivocation(r.commitments[3], r.commitments[4]) is None
    assert detect_equivocation(honest, honest) is None


def test_relay_state_is_digests_only():
    r = make_relay()
    e = entry(0)
    r.submit(e)
    r.commit_cycle()
    for d in (r._index, r._pending, r._where):
        for k, v in d.items():
            assert isinstance(k, bytes) and len(k) == 32
            assert isinstance(v, (bytes, int, CycleEntry))


def test_proof_soundness_large_cycle():
    r = make_relay()
    es = [entry(i) for i in range(1 << 10)]
    for e in es:
        r.submit(e)
    c = r.commit_cycle()
    rng = random.Random(5)
    for e in rng.sample(es, 64):
        p = r.prove_inclusion(e)
        assert proof_matches(p, c)
        assert len(p.path) == 10
        bad_leaf = replace(p, leaf=entry(99999))
        assert not proof_matches(bad_leaf, c)
        i = rng.randrange(len(p.path))
        steps = list(p.path)
        steps[i] = replace(steps[i], side=1 - steps[i].side)
        assert not proof_matches(replace(p, path=tuple(steps)), c)


def test_submit_is_instrumented():
    r = make_relay()
    instrument.reset()
    r.submit(entry(0))
    assert instrument.total() >= 1
