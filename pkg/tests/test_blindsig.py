import random
from itertools import product

import pytest
from scipy.stats import chisquare

from usocbdc import blindsig
from usocbdc.blindsig import (
    BlindingFactor,
    InvalidFactor,
    blind,
    dump_key,
    load_key,
    sign_blinded,
    unblind,
    verify,
)
from usocbdc.codec import selector


def roundtrip(m, key, rng):
    f = BlindingFactor.sample(key.public, rng)
    return unblind(sign_blinded(blind(m, f, key.public), key), f, key.public)


def test_roundtrip_verifies(plate_key):
    rng = random.Random(1)
    for i in range(50):
        m = selector(f"m{i}".encode())
        assert verify(m, roundtrip(m, plate_key, rng), plate_key.public)


def test_unblinded_signature_is_factor_independent(plate_key):
    # RSA-FDH is deterministic, so two blindings unblind to the same signature
    rng = random.Random(2)
    m = selector(b"same")
    assert roundtrip(m, plate_key, rng) == roundtrip(m, plate_key, rng)


def test_blinded_values_are_randomized(plate_key):
    rng = random.Random(3)
    m = selector(b"same")
    seen = {blind(m, BlindingFactor.sample(plate_key.public, rng), plate_key.public).value for _ in range(20)}
    assert len(seen) == 20


def test_wrong_factor_fails(plate_key):
    rng = random.Random(4)
    m = selector(b"m")
    f = BlindingFactor.sample(plate_key.public, rng)
    g = BlindingFactor.sample(plate_key.public, rng)
    sig = unblind(sign_blinded(blind(m, f, plate_key.public), plate_key), g, plate_key.public)
    assert not verify(m, sig, plate_key.public)


def test_key_separation(plate_key, other_key):
    rng = random.Random(5)
    m = selector(b"m")
    keys = [plate_key, other_key]
    for signer, checker in product(keys, keys):
        sig = roundtrip(m, signer, rng)
        assert verify(m, sig, checker.public) == (signer is checker)


def test_blinded_for_other_key_refused(plate_key, other_key):
    f = BlindingFactor.sample(plate_key.public, random.Random(6))
    b = blind(selector(b"m"), f, plate_key.public)
    with pytest.raises(blindsig.BlindSigError):
        sign_blinded(b, other_key)


def test_signature_not_valid_for_other_message(plate_key):
    sig = roundtrip(selector(b"a"), plate_key, random.Random(7))
    assert not verify(selector(b"b"), sig, plate_key.public)
    assert not verify(selector(b"a"), None, plate_key.public)


@pytest.mark.parametrize("r", [0, 1, "n", "p"])
def test_invalid_factor(plate_key, r):
    r = {"n": plate_key.public.n, "p": plate_key.p}.get(r, r)
    with pytest.raises(InvalidFactor):
        blind(selector(b"m"), BlindingFactor(r), plate_key.public)


def test_key_files_roundtrip(plate_key):
    headers, sk = load_key(dump_key(plate_key, secret=True))
    assert headers["Plate-Id"] == "p100" and headers["Denomination"] == "100"
    assert sk.public == plate_key.public
    assert verify(selector(b"x"), roundtrip(selector(b"x"), sk, random.Random(8)), plate_key.public)
    _, pk = load_key(dump_key(plate_key, secret=False))
    assert pk == plate_key.public
    with pytest.raises(ValueError):
        load_key("garbage")


def test_seeded_keygen_is_deterministic():
    a = blindsig.generate_keypair("x", 5, 512, random.Random("k"))
    b = blindsig.generate_keypair("x", 5, 512, random.Random("k"))
    assert a.public == b.public
    assert a.public.n.bit_length() == 512


def test_blinded_value_distribution_is_flat(plate_key):
    # blinded values of one message fall uniformly across 16 buckets of [0, n)
    rng = random.Random(9)
    m = selector(b"fixed")
    n = plate_key.public.n
    counts = [0] * 16
    for _ in range(1600):
        v = int.from_bytes(blind(m, BlindingFactor.sample(plate_key.public, rng), plate_key.public).value, "big")
        counts[v * 16 // n] += 1
    assert chisquare(counts).pvalue > 0.001
