from __future__ import annotations

import random
import struct
from enum import Enum

import pytest
from hypothesis import given
from hypothesis import strategies as st

from naca.authcode import (
    KEY_LENGTH,
    U64_MAX,
    Counter,
    CounterOverflow,
    EncodingError,
    MacKey,
    NonceCollision,
    NonceSource,
    canonical_encode,
    digest,
    mac_compute,
    mac_verify,
    next_counter,
)
from naca.controller.intents import Query
from naca.policy.model import Action

# Independently framed by hand: tag byte, u32 length, payload.
FROZEN_TAG_MESSAGE = (
    "7300000004617070317300000006617070312f316200000020000102030405060708090a0b0c0d0e0f"
    "101112131415161718191a1b1c1d1e1f75000000080000000000000001"
)
FROZEN_TAG = "be0bb9d8a5a0f72c8e5c6106fd246cd7cc3394b5958043e7e160c20616690fbb"


def _frame(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack(">I", len(payload)) + payload


class TestMac:
    def test_rfc4231_case_1(self):
        key = bytes([0x0B] * 20)
        assert mac_compute(key, b"Hi There").hex() == (
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        )

    def test_rfc4231_case_2(self):
        assert mac_compute(b"Jefe", b"what do ya want for nothing?").hex() == (
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        )

    def test_verify_round_trip(self):
        key = MacKey.generate("K", random.Random(1))
        mac = mac_compute(key, b"payload")
        assert mac_verify(key, b"payload", mac)
        assert not mac_verify(key, b"payloae", mac)
        assert not mac_verify(MacKey.generate("K", random.Random(2)), b"payload", mac)

    def test_key_length_enforced(self):
        with pytest.raises(ValueError):
            MacKey("K", b"short")
        assert len(MacKey.generate("K").secret) == KEY_LENGTH

    def test_frozen_tag_vector(self):
        msg = canonical_encode("app1", "app1/1", bytes(range(32)), 1)
        assert msg.hex() == FROZEN_TAG_MESSAGE
        assert mac_compute(bytes([0x0B] * 32), msg).hex() == FROZEN_TAG

    def test_digest_is_sha256(self):
        assert digest(b"abc").hex().startswith("ba7816bf8f01cfea")


class TestCanonicalEncode:
    def test_matches_hand_framing(self):
        got = canonical_encode("ab", b"\x00", 7)
        assert got == _frame(b"s", b"ab") + _frame(b"b", b"\x00") + _frame(b"u", struct.pack(">Q", 7))

    def test_field_boundaries_are_unambiguous(self):
        assert canonical_encode("ab", "c") != canonical_encode("a", "bc")
        assert canonical_encode("1") != canonical_encode(1)
        assert canonical_encode(b"x") != canonical_encode("x")
        assert canonical_encode(("a", "b")) != canonical_encode("a", "b")

    def test_action_sets_are_order_free(self):
        a = canonical_encode(frozenset({Action.READ, Action.CONFIG_MOD}))
        b = canonical_encode({Action.CONFIG_MOD, Action.READ})
        assert a == b

    def test_rejects_bool_and_negative(self):
        with pytest.raises(EncodingError):
            canonical_encode(True)
        with pytest.raises(EncodingError):
            canonical_encode(-1)
        with pytest.raises(EncodingError):
            canonical_encode(U64_MAX + 1)
        with pytest.raises(EncodingError):
            canonical_encode(1.5)

    def test_rejects_non_enum_sets(self):
        with pytest.raises(EncodingError):
            canonical_encode({"a"})

    def test_enum_subclass_of_str(self):
        class Colour(str, Enum):
            RED = "red"

        assert canonical_encode(Colour.RED) == _frame(b"e", b"red")

    def test_memoised_query_encoding_is_stable(self):
        q = Query("a", "a/1", "flow_install", "s1", (("dst_port", 2), ("proto", "UDP")))
        first = canonical_encode(q, b"n")
        assert canonical_encode(q, b"n") == first
        fresh = Query("a", "a/1", "flow_install", "s1", (("dst_port", 2), ("proto", "UDP")))
        assert canonical_encode(fresh, b"n") == first
        other = Query("a", "a/1", "flow_install", "s1", (("dst_port", 3), ("proto", "UDP")))
        assert canonical_encode(other, b"n") != first

    @given(
        st.lists(st.one_of(st.text(max_size=8), st.binary(max_size=8), st.integers(0, U64_MAX)), max_size=5),
        st.lists(st.one_of(st.text(max_size=8), st.binary(max_size=8), st.integers(0, U64_MAX)), max_size=5),
    )
    def test_injective(self, a, b):
        if a != b or [type(x) for x in a] != [type(x) for x in b]:
            assert canonical_encode(*a) != canonical_encode(*b)
        else:
            assert canonical_encode(*a) == canonical_encode(*b)


class TestCounterAndNonce:
    def test_counter_advances(self):
        assert next_counter(Counter()).value == 1
        assert next_counter(Counter(41, "t")) == Counter(42, "t")

    def test_counter_overflow(self):
        with pytest.raises(CounterOverflow):
            next_counter(Counter(U64_MAX))

    def test_nonces_are_seeded_and_unique(self):
        a, b = NonceSource(5), NonceSource(5)
        assert [a.fresh() for _ in range(3)] == [b.fresh() for _ in range(3)]
        src = NonceSource(9)
        seen = {src.fresh() for _ in range(2000)}
        assert len(seen) == 2000
        assert all(len(n) == 16 for n in seen)

    def test_collision_detected(self, monkeypatch):
        src = NonceSource(3)
        first = src.fresh()
        monkeypatch.setattr(src, "_rng", type("R", (), {"randbytes": staticmethod(lambda n: first)})())
        with pytest.raises(NonceCollision):
            src.fresh()
