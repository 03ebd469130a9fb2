import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usocbdc.codec import EMPTY_SHA256, CodecError, decode, encode, selector
from usocbdc.commitments import CycleEntry, InclusionProof, PathStep, RelayCommitment
from usocbdc.sigs import Signature
from usocbdc.asset import AssetUpdate

digests = st.binary(min_size=32, max_size=32)
u64 = st.integers(min_value=0, max_value=2**64 - 1)
names = st.text(max_size=12)

entries = st.builds(CycleEntry, digests, digests)
signatures = st.builds(Signature, st.binary(max_size=80), digests)
commitments = st.builds(
    RelayCommitment, names, u64, digests, digests, u64, u64, st.lists(signatures, max_size=3).map(tuple)
)
proofs = st.builds(
    InclusionProof,
    entries,
    st.lists(st.builds(PathStep, digests, st.sampled_from([0, 1])), max_size=6).map(tuple),
    names,
    u64,
)
updates = st.builds(
    AssetUpdate,
    digests,
    st.none() | signatures,
    st.binary(max_size=40),
    st.none() | digests,
    st.none() | digests,
    st.none() | st.binary(max_size=40),
    st.none() | signatures,
)
objects = st.one_of(entries, commitments, proofs, updates)


def test_empty_bytes_selector():
    assert selector(b"") == EMPTY_SHA256
    assert EMPTY_SHA256.hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_selector_is_sha256_of_encoding():
    e = CycleEntry(bytes(32), bytes([1]) * 32)
    assert selector(e) == hashlib.sha256(encode(e)).digest()


@settings(max_examples=300, deadline=None)
@given(objects)
def test_roundtrip(obj):
    assert decode(encode(obj)) == obj


@settings(max_examples=300, deadline=None)
@given(objects, objects)
def test_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)
        assert selector(a) != selector(b)


@settings(max_examples=200, deadline=None)
@given(objects, st.data())
def test_truncation_rejected(obj, data):
    raw = encode(obj)
    cut = data.draw(st.integers(min_value=0, max_value=len(raw) - 1))
    with pytest.raises(CodecError):
        decode(raw[:cut])


def test_trailing_bytes_rejected():
    raw = encode(CycleEntry(bytes(32), bytes(32)))
    with pytest.raises(CodecError):
        decode(raw + b"\x00")


def test_noncanonical_option_flag_rejected():
    u = AssetUpdate(bytes(32), None, b"k")
    raw = bytearray(encode(u))
    # first optional flag sits right after the 6-byte header and the digest
    assert raw[6 + 32] == 0
    raw[6 + 32] = 2
    with pytest.raises(CodecError):
        decode(bytes(raw))


def test_out_of_range_int_rejected():
    with pytest.raises(CodecError):
        encode(RelayCommitment("r", 2**64, bytes(32), bytes(32), 0, 0))
    with pytest.raises(CodecError):
        encode(CycleEntry(b"short", bytes(32)))


def test_expect_type():
    raw = encode(CycleEntry(bytes(32), bytes(32)))
    with pytest.raises(CodecError):
        decode(raw, expect=RelayCommitment)
