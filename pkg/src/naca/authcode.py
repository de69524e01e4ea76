"""Keyed MACs, counters, nonces and the canonical field encoding.

Every MAC in the pipeline is computed over ``canonical_encode(...)`` output,
never over ad-hoc string concatenation. The encoding is part of the wire
contract between tagger, monitor and NIB.

Field layout: ``tag (1 byte) | length (4 bytes, big-endian) | payload``.
Nested values (tuples, action sets, mask tuple lists) encode their items
recursively inside the payload.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

KEY_LENGTH = 32
MAC_LENGTH = 32
NONCE_LENGTH = 16
U64_MAX = 2**64 - 1

_TAG_STR = b"s"
_TAG_BYTES = b"b"
_TAG_U64 = b"u"
_TAG_ENUM = b"e"
_TAG_SEQ = b"t"
_TAG_SET = b"S"

_LEN = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class EncodingError(TypeError):
    """A value cannot be expressed in the canonical encoding."""


class CounterOverflow(OverflowError):
    """The 64-bit request counter is exhausted; the scenario must abort."""


class NonceCollision(RuntimeError):
    """A nonce source produced a value it had already issued."""


def _frame(tag: bytes, payload: bytes) -> bytes:
    if len(payload) > 0xFFFFFFFF:
        raise EncodingError("field longer than 2**32-1 bytes")
    return tag + _LEN.pack(len(payload)) + payload


_ENUM_CACHE: dict[Enum, bytes] = {}
_RANK_CACHE: dict[type, dict[Enum, int]] = {}


def _enum_rank(member: Enum) -> int:
    ranks = _RANK_CACHE.get(type(member))
    if ranks is None:
        ranks = _RANK_CACHE[type(member)] = {m: i for i, m in enumerate(type(member))}
    return ranks[member]


def _encode_enum(value: Enum) -> bytes:
    cached = _ENUM_CACHE.get(value)
    if cached is None:
        cached = _ENUM_CACHE[value] = _frame(_TAG_ENUM, str(value.value).encode("utf-8"))
    return cached


def _encode_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _TAG_STR + _LEN.pack(len(raw)) + raw


def _encode_int(value: int) -> bytes:
    if not 0 <= value <= U64_MAX:
        raise EncodingError(f"integer {value} outside u64 range")
    return _TAG_U64 + b"\x00\x00\x00\x08" + _U64.pack(value)


_PLAIN = (str, int, bytes, tuple)


def _encode_tuple(value: tuple | list) -> bytes:
    items = value
    if items and type(items[0]) not in _PLAIN:
        sort_key = getattr(type(items[0]), "canonical_sort_key", None)
        if sort_key is not None:
            items = sorted(items, key=sort_key)
    fast = _FAST
    parts = []
    for item in items:
        enc = fast.get(type(item))
        parts.append(enc(item) if enc is not None else _encode_value(item))
    payload = b"".join(parts)
    return _TAG_SEQ + _LEN.pack(len(payload)) + payload


def _encode_record(value: Any) -> bytes:
    return _frame(_TAG_SEQ, b"".join([_encode_value(i) for i in value.canonical_fields()]))


def _encode_memoised(value: Any) -> bytes:
    # Opt-in for frozen types (``canonical_memo = True``): the encoding is
    # computed once and kept on the instance.
    cached = value.__dict__.get("_canonical")
    if cached is None:
        cached = value.__dict__["_canonical"] = _encode_record(value)
    return cached


# Exact-type fast paths; subclasses fall through to the general checks.
_FAST = {bytes: lambda v: _frame(_TAG_BYTES, v), str: _encode_str, int: _encode_int, tuple: _encode_tuple, list: _encode_tuple}


def _encode_value(value: Any) -> bytes:
    fast = _FAST.get(type(value))
    if fast is not None:
        return fast(value)
    # bool is an int subclass; refuse it rather than silently encoding 0/1.
    if isinstance(value, bool):
        raise EncodingError("booleans have no canonical encoding")
    if isinstance(value, Enum):
        return _encode_enum(value)
    if isinstance(value, str):
        return _encode_str(value)
    if isinstance(value, (bytes, bytearray, memoryview)):
        return _frame(_TAG_BYTES, bytes(value))
    if isinstance(value, int):
        return _encode_int(value)
    if isinstance(value, (set, frozenset)):
        items = list(value)
        if not all(isinstance(i, Enum) for i in items):
            raise EncodingError("only sets of enum members (action sets) are encodable")
        items.sort(key=_enum_rank)
        return _frame(_TAG_SET, b"".join([_encode_value(i) for i in items]))
    canonical = getattr(value, "canonical_fields", None)
    if callable(canonical):
        if getattr(type(value), "canonical_memo", False):
            _FAST[type(value)] = _encode_memoised
            return _encode_memoised(value)
        return _encode_record(value)
    if isinstance(value, (tuple, list)):
        return _encode_tuple(value)
    raise EncodingError(f"unencodable field type {type(value).__name__}")


def canonical_encode(*fields: Any) -> bytes:
    """Encode ``fields`` in declared order into an injective byte string.

    Supported field types: ``str``, ``bytes``, non-negative ``int`` (u64),
    enum members, sets of enum members (sorted by enum declaration order),
    tuples/lists (order kept unless the item type defines
    ``canonical_sort_key``), and objects exposing ``canonical_fields()``.
    """
    return b"".join([_encode_value(f) for f in fields])


@dataclass(frozen=True)
class MacKey:
    key_id: str
    secret: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.secret) != KEY_LENGTH:
            raise ValueError(f"MAC key {self.key_id!r} must be {KEY_LENGTH} bytes, got {len(self.secret)}")

    @classmethod
    def from_hex(cls, key_id: str, hex_secret: str) -> "MacKey":
        return cls(key_id, bytes.fromhex(hex_secret))

    @classmethod
    def generate(cls, key_id: str, rng: random.Random | None = None) -> "MacKey":
        secret = rng.randbytes(KEY_LENGTH) if rng is not None else secrets.token_bytes(KEY_LENGTH)
        return cls(key_id, secret)


def mac_compute(key: MacKey | bytes, message: bytes) -> bytes:
    """HMAC-SHA-256 of ``message``. Raw ``bytes`` keys of any length are
    accepted so published test vectors can be checked directly."""
    secret = key.secret if isinstance(key, MacKey) else bytes(key)
    return hmac.digest(secret, message, "sha256")


def mac_verify(key: MacKey | bytes, message: bytes, mac: bytes) -> bool:
    return hmac.compare_digest(mac_compute(key, message), bytes(mac))


def digest(message: bytes) -> bytes:
    return hashlib.sha256(message).digest()


@dataclass(frozen=True)
class Counter:
    value: int = 0
    owner: str = "tagger"


def next_counter(c: Counter) -> Counter:
    if c.value >= U64_MAX:
        raise CounterOverflow(f"counter of {c.owner} exhausted")
    return Counter(c.value + 1, c.owner)


class NonceSource:
    """Issues 16-byte nonces, refusing to hand out the same value twice.

    With a seed the sequence is reproducible (scenario runs must produce
    byte-identical audit trails); without one it draws from ``secrets``.
    """

    def __init__(self, seed: int | None = None) -> None:
        self._rng = random.Random(seed) if seed is not None else None
        self._issued: set[bytes] = set()

    def fresh(self) -> bytes:
        value = self._rng.randbytes(NONCE_LENGTH) if self._rng is not None else secrets.token_bytes(NONCE_LENGTH)
        if value in self._issued:
            raise NonceCollision(value.hex())
        self._issued.add(value)
        return value

    def __len__(self) -> int:
        return len(self._issued)

