"""Golden test vectors.  Everything derives from fixed seeds, so the output
is stable across runs and platforms.

* codec:    ``hex(encode(x)) hex(selector(x))`` per line
* blindsig: ``message_hex factor_hex signature_hex`` per line, after a
  ``# modulus ... exponent ...`` header
* merkle:   ``n root_hex`` per line, leaves are ``CycleEntry(state-i, succ-i)``
"""

from __future__ import annotations

import random

from . import blindsig, merkle
from .asset import AssetUpdate, GenesisRecord, certify_plate
from .codec import encode, selector
from .commitments import CycleEntry, InclusionProof, PathStep, RelayCommitment
from .sigs import KeyPair


def sample_entry(i: int) -> CycleEntry:
    return CycleEntry(selector(f"state-{i}".encode()), selector(f"succ-{i}".encode()))


def codec_corpus() -> list:
    rng = random.Random("vectors:codec")
    root = KeyPair.generate(rng)
    owner = KeyPair.generate(rng)
    plate = blindsig.generate_keypair("p5", 5, blindsig.TEST_BITS, rng)
    cert = certify_plate(root, "p5", 5, plate.public, 1000)
    g = GenesisRecord(owner.public, "root", bytes(32), cert, 5)
    upd = AssetUpdate(selector(g), None, KeyPair.generate(rng).public, selector(b"acct"))
    c = RelayCommitment("root", 1, bytes(32), bytes(range(32)), 7, 0)
    proof = InclusionProof(sample_entry(1), (PathStep(selector(b"sib"), 0),), "root", 3)
    return [b"", b"abc", sample_entry(0), c, proof, cert, g, upd]


def codec_lines() -> list[str]:
    out = []
    for obj in codec_corpus():
        enc = obj if isinstance(obj, bytes) else encode(obj)
        out.append(f"{enc.hex()} {selector(obj).hex()}")
    return out


def blindsig_lines(bits: int = blindsig.TEST_BITS, count: int = 4) -> list[str]:
    rng = random.Random("vectors:blindsig")
    key = blindsig.generate_keypair("vec", 100, bits, rng)
    out = [f"# modulus {key.public.modulus.hex()} exponent {key.public.exponent}"]
    for i in range(count):
        m = selector(f"genesis-{i}".encode())
        f = blindsig.BlindingFactor.sample(key.public, rng)
        sig = blindsig.unblind(blindsig.sign_blinded(blindsig.blind(m, f, key.public), key), f, key.public)
        out.append(f"{m.hex()} {format(f.r, 'x')} {sig.value.hex()}")
    return out


def merkle_lines(sizes=range(0, 17)) -> list[str]:
    return [f"{n} {merkle.root([sample_entry(i).leaf() for i in range(n)]).hex()}" for n in sizes]


def golden_files(bits: int = blindsig.TEST_BITS) -> dict[str, str]:
    return {
        "codec.vectors": "\n".join(codec_lines()) + "\n",
        "blindsig.vectors": "\n".join(blindsig_lines(bits)) + "\n",
        "merkle.vectors": "\n".join(merkle_lines()) + "\n",
    }
