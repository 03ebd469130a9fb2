"""Relay service: accepts (state, successor) digest pairs, publishes one
endorsed commitment per cycle, hands out inclusion proofs, and feeds its
own commitments into a parent relay.

The relay keeps a first-write-wins index from state digest to successor
digest, so a state can have at most one registered successor.  It never
sees anything other than digests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

from . import instrument, merkle
from .asset import AggregationLink, Asset, ProofStep
from .codec import Digest
from .commitments import (
    ZERO_DIGEST,
    CycleEntry,
    EquivocationEvidence,
    InclusionProof,
    PathStep,
    RelayCommitment,
    RelayTrust,
    TrustRoots,
    aggregation_entry,
    check_chain,
    commitment_endorsed,
    detect_equivocation,
    endorsement_count,
)
from .sigs import KeyPair


class RelayError(Exception):
    pass


class ConflictingSuccessor(RelayError):
    def __init__(self, state_digest: Digest, existing: Digest, attempted: Digest):
        super().__init__(f"state {state_digest.hex()[:16]} already has successor {existing.hex()[:16]}")
        self.state_digest = state_digest
        self.existing = existing
        self.attempted = attempted


class NotCommittedYet(RelayError):
    pass


class UnknownEntry(RelayError):
    pass


class QuorumUnavailable(RelayError):
    pass


class ConfigError(RelayError):
    pass


@dataclass(frozen=True)
class Receipt:
    relay_id: str
    sequence: int  # cycle the entry will appear in
    duplicate: bool = False


def validate_topology(parents: dict[str, str | None]) -> None:
    """Raise ConfigError if the parent map has a cycle or a dangling parent."""
    for start in parents:
        seen = {start}
        cur = parents[start]
        while cur:
            if cur not in parents:
                raise ConfigError(f"relay {start!r}: unknown parent {cur!r}")
            if cur in seen:
                raise ConfigError(f"relay {start!r} is its own ancestor")
            seen.add(cur)
            cur = parents[cur]


class Relay:
    def __init__(
        self,
        relay_id: str,
        endorsers: list[KeyPair],
        quorum: int | None = None,
        period: int = 1,
        parent: str | None = None,
        child_trust: dict[str, RelayTrust] | None = None,
    ):
        if not endorsers:
            raise ConfigError("a relay needs at least one endorser")
        self.relay_id = relay_id
        self.endorsers = list(endorsers)
        self.quorum = len(endorsers) if quorum is None else quorum
        if not 1 <= self.quorum <= len(endorsers):
            raise ConfigError("quorum must be between 1 and the number of endorsers")
        self.period = period
        self.parent = parent
        self.child_trust = dict(child_trust or {})
        self.offline: set[int] = set()  # indices of endorsers currently down

        self._lock = threading.Lock()
        self._index: dict[Digest, Digest] = {}
        self._pending: dict[Digest, CycleEntry] = {}
        self._where: dict[Digest, int] = {}
        self._cycle_leaves: list[list[CycleEntry]] = []
        self._trees: dict[int, list] = {}
        self.commitments: list[RelayCommitment] = []
        self.commit_cycle(timestamp=0)

    # -- configuration ------------------------------------------------------

    def trust(self) -> RelayTrust:
        return RelayTrust(
            self.relay_id,
            tuple(k.public for k in self.endorsers),
            self.quorum,
            self.parent or "",
        )

    @property
    def latest(self) -> RelayCommitment:
        return self.commitments[-1]

    @property
    def next_sequence(self) -> int:
        return len(self.commitments)

    def commitment(self, sequence: int) -> RelayCommitment:
        return self.commitments[sequence]

    def published_entries(self, sequence: int) -> list[CycleEntry]:
        return list(self._cycle_leaves[sequence])

    # -- submissions --------------------------------------------------------

    def submit(self, entry: CycleEntry) -> Receipt:
        instrument.touch("relay")
        with self._lock:
            existing = self._index.get(entry.state_digest)
            if existing is not None:
                if existing != entry.successor_digest:
                    raise ConflictingSuccessor(entry.state_digest, existing, entry.successor_digest)
                seq = self._where.get(entry.state_digest, self.next_sequence)
                return Receipt(self.relay_id, seq, duplicate=True)
            self._index[entry.state_digest] = entry.successor_digest
            self._pending[entry.state_digest] = entry
            return Receipt(self.relay_id, self.next_sequence)

    def successor_of(self, state_digest: Digest) -> Digest | None:
        instrument.touch("relay")
        return self._index.get(state_digest)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    # -- cycles -------------------------------------------------------------

    def _endorse(self, body: RelayCommitment) -> RelayCommitment:
        up = [k for i, k in enumerate(self.endorsers) if i not in self.offline]
        if len(up) < self.quorum:
            raise QuorumUnavailable(
                f"{self.relay_id}: {len(up)} of {len(self.endorsers)} endorsers up, need {self.quorum}"
            )
        msg = body.id
        return RelayCommitment(
            body.relay_id, body.sequence, body.previous, body.batch_root,
            body.timestamp, body.n_entries, tuple(k.sign(msg) for k in up),
        )

    def _build(self, entries: list[CycleEntry], timestamp: int, sequence: int, previous: Digest):
        leaves = sorted(entries, key=lambda e: e.state_digest)
        root = merkle.root([e.leaf() for e in leaves])
        body = RelayCommitment(self.relay_id, sequence, previous, root, timestamp, len(leaves))
        return leaves, self._endorse(body)

    def commit_cycle(self, timestamp: int | None = None) -> RelayCommitment:
        """Publish the queued entries.  Empty cycles still publish."""
        instrument.touch("relay")
        with self._lock:
            seq = self.next_sequence
            prev = self.commitments[-1].id if self.commitments else ZERO_DIGEST
            ts = seq if timestamp is None else timestamp
            leaves, c = self._build(list(self._pending.values()), ts, seq, prev)
            self._pending.clear()
            self._cycle_leaves.append(leaves)
            for e in leaves:
                self._where[e.state_digest] = seq
            self.commitments.append(c)
            return c

    def fork_commit(self, alternate: list[CycleEntry], timestamp: int | None = None):
        """Fault injection: a compromised relay commits the pending batch and,
        at the same sequence, signs a conflicting batch.  Returns
        ``(honest, forged)``; only the honest one enters the local chain."""
        seq = self.next_sequence
        prev = self.commitments[-1].id
        ts = seq if timestamp is None else timestamp
        _, forged = self._build(list(alternate), ts, seq, prev)
        honest = self.commit_cycle(timestamp)
        if forged.id == honest.id:
            raise ValueError("alternate batch does not differ from the honest one")
        return honest, forged

    # -- proofs -------------------------------------------------------------

    def prove_inclusion(self, entry: CycleEntry | Digest) -> InclusionProof:
        instrument.touch("relay")
        state = entry.state_digest if isinstance(entry, CycleEntry) else entry
        if state in self._pending:
            raise NotCommittedYet(state.hex())
        seq = self._where.get(state)
        if seq is None:
            raise UnknownEntry(state.hex())
        leaves = self._cycle_leaves[seq]
        idx = next(i for i, e in enumerate(leaves) if e.state_digest == state)
        if isinstance(entry, CycleEntry) and leaves[idx] != entry:
            raise UnknownEntry("state registered with a different successor")
        tree = self._trees.get(seq)
        if tree is None:
            tree = self._trees[seq] = merkle.levels([e.leaf() for e in leaves])
        steps = tuple(PathStep(s, side) for s, side in merkle.path(tree, idx))
        return InclusionProof(leaves[idx], steps, self.relay_id, seq)

    # -- hierarchy ----------------------------------------------------------

    def aggregate(self, child: RelayCommitment) -> Receipt:
        """Accept a child relay's commitment as a leaf of our next cycle."""
        trust = self.child_trust.get(child.relay_id)
        if trust is None:
            raise ConfigError(f"{child.relay_id!r} is not a child of {self.relay_id!r}")
        if endorsement_count(child, trust) < trust.quorum:
            raise RelayError("child commitment lacks endorsement quorum")
        return self.submit(aggregation_entry(child))

    # -- export -------------------------------------------------------------

    def ledger_lines(self) -> list[str]:
        return [c.ledger_line() for c in self.commitments]

    def verify_own_chain(self, roots) -> bool:
        return check_chain(self.commitments) and all(commitment_endorsed(c, roots) for c in self.commitments)


class RelayNetwork:
    """A tree of relays whose uplinks can be partitioned.

    Child commitments are forwarded to the parent once published; while an
    uplink is partitioned they queue and are delivered on heal.  Every
    commitment that leaves a relay is also posted to a public board, which
    is where equivocation becomes visible.
    """

    def __init__(self, relays: list[Relay]):
        self.relays = {r.relay_id: r for r in relays}
        validate_topology({r.relay_id: r.parent for r in relays})
        for r in relays:
            if r.parent:
                self.relays[r.parent].child_trust[r.relay_id] = r.trust()
        self.partitioned: set[str] = set()
        self.board: dict[tuple[str, int], list[RelayCommitment]] = {}
        self.evidence: list[EquivocationEvidence] = []
        self._forwarded: dict[str, int] = {r.relay_id: 0 for r in relays}
        self._forged: dict[str, dict[int, RelayCommitment]] = {r.relay_id: {} for r in relays}
        for r in relays:
            for c in r.commitments:
                self.publish(c)

    def __getitem__(self, relay_id: str) -> Relay:
        return self.relays[relay_id]

    @property
    def root_id(self) -> str:
        return next(r.relay_id for r in self.relays.values() if not r.parent)

    def depth(self, relay_id: str) -> int:
        d = 0
        r = self.relays[relay_id]
        while r.parent:
            r = self.relays[r.parent]
            d += 1
        return d

    def order(self) -> list[Relay]:
        """Relays ordered children-first."""
        return sorted(self.relays.values(), key=lambda r: (-self.depth(r.relay_id), r.relay_id))

    def trust_roots(self, issuer_root: bytes) -> TrustRoots:
        return TrustRoots(issuer_root, self.root_id, tuple(self.relays[k].trust() for k in sorted(self.relays)))

    # -- publication ---------------------------------------------------------

    def publish(self, c: RelayCommitment) -> EquivocationEvidence | None:
        seen = self.board.setdefault((c.relay_id, c.sequence), [])
        if any(x.id == c.id for x in seen):
            return None
        found = None
        for other in seen:
            ev = detect_equivocation(other, c)
            if ev is not None:
                self.evidence.append(ev)
                found = ev
        seen.append(c)
        return found

    def forward(self, relay_id: str) -> int:
        """Push unsent commitments of ``relay_id`` to its parent.  Returns how
        many were delivered; a partitioned uplink delivers nothing."""
        r = self.relays[relay_id]
        if not r.parent or relay_id in self.partitioned:
            return 0
        parent = self.relays[r.parent]
        pending = r.commitments[self._forwarded[relay_id]:]
        for c in pending:
            c = self._forged[relay_id].pop(c.sequence, c)
            self.publish(c)
            try:
                parent.aggregate(c)
            except ConflictingSuccessor:
                pass  # parent already holds a commitment for this slot; the board has the evidence
        self._forwarded[relay_id] = len(r.commitments)
        return len(pending)

    def commit(self, relay_id: str, timestamp: int | None = None, forward: bool = True) -> RelayCommitment:
        c = self.relays[relay_id].commit_cycle(timestamp)
        self.publish(c)
        if forward:
            self.forward(relay_id)
        return c

    def commit_forked(self, relay_id: str, alternate: list[CycleEntry], timestamp: int | None = None, forward: bool = True):
        """Fault injection: the relay shows ``honest`` locally but sends
        ``forged`` upstream in its place."""
        honest, forged = self.relays[relay_id].fork_commit(alternate, timestamp)
        self.publish(honest)
        self._forged[relay_id][forged.sequence] = forged
        if forward:
            self.forward(relay_id)
        return honest, forged

    def flush(self, timestamp: int | None = None) -> None:
        """Commit every relay children-first so fresh entries reach the root."""
        for r in self.order():
            self.commit(r.relay_id, timestamp)

    # -- proof construction ----------------------------------------------------

    def aggregation_links(self, commitment: RelayCommitment) -> tuple:
        links = []
        cur = commitment
        while True:
            relay = self.relays[cur.relay_id]
            if not relay.parent:
                break
            parent = self.relays[relay.parent]
            try:
                proof = parent.prove_inclusion(aggregation_entry(cur))
            except (NotCommittedYet, UnknownEntry):
                break
            pc = parent.commitment(proof.sequence)
            links.append(AggregationLink(proof, pc))
            cur = pc
        return tuple(links)

    def step_for(self, relay_id: str, entry: CycleEntry) -> ProofStep:
        relay = self.relays[relay_id]
        proof = relay.prove_inclusion(entry)
        c = relay.commitment(proof.sequence)
        return ProofStep(proof, c, self.aggregation_links(c))

    def attach_pending(self, asset: Asset) -> Asset:
        """Add proof steps for every registered-but-unproved update.
        Raises NotCommittedYet if the relay has not published yet."""
        while True:
            entry = asset.pending_entry()
            if entry is None:
                return asset
            asset = asset.with_step(self.step_for(asset.genesis.home_relay, entry))

    def extend(self, asset: Asset) -> Asset:
        """Lengthen aggregation paths of steps that have not reached the root."""
        steps = list(asset.proof.steps)
        changed = False
        for i, st in enumerate(steps):
            links = self.aggregation_links(st.commitment)
            if len(links) > len(st.aggregation):
                steps[i] = replace(st, aggregation=links)
                changed = True
        return asset.with_steps(steps) if changed else asset
