"""Binary Merkle tree over cycle leaves.

Rules: leaves are hashed with a 0x00 prefix, interior nodes with 0x01; at
each level nodes are paired left to right and a trailing odd node is
promoted unchanged.  The root of an empty tree is SHA-256("EMPTY-CYCLE").
"""

from __future__ import annotations

from .codec import Digest, sha256

LEFT = 0  # sibling sits on the left
RIGHT = 1  # sibling sits on the right

EMPTY_ROOT = sha256(b"EMPTY-CYCLE")


def leaf_hash(leaf_bytes: bytes) -> Digest:
    return sha256(b"\x00", leaf_bytes)


def node_hash(left: Digest, right: Digest) -> Digest:
    return sha256(b"\x01", left, right)


def levels(leaf_hashes: list[Digest]) -> list[list[Digest]]:
    """All tree levels, leaves first, root level last."""
    if not leaf_hashes:
        return [[EMPTY_ROOT]]
    out = [list(leaf_hashes)]
    cur = out[0]
    while len(cur) > 1:
        nxt = [node_hash(cur[i], cur[i + 1]) for i in range(0, len(cur) - 1, 2)]
        if len(cur) % 2:
            nxt.append(cur[-1])
        out.append(nxt)
        cur = nxt
    return out


def root(leaf_hashes: list[Digest]) -> Digest:
    return levels(leaf_hashes)[-1][0]


def path(tree: list[list[Digest]], index: int) -> list[tuple[Digest, int]]:
    """Sibling path for leaf ``index``; promoted levels contribute nothing."""
    out = []
    for level in tree[:-1]:
        sib = index ^ 1
        if sib < len(level):
            out.append((level[sib], LEFT if sib < index else RIGHT))
        index //= 2
    return out


def fold(leaf: Digest, steps) -> Digest:
    acc = leaf
    for sibling, side in steps:
        acc = node_hash(sibling, acc) if side == LEFT else node_hash(acc, sibling)
    return acc
