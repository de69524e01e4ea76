"""Request tagger: authenticates requests and MAC-binds them to a mask.

Processing order for each request: credential check, mask lookup, request-id
assignment, tag computation. A request that fails any check is dropped
before a counter value is consumed, so the monitor's window never sees a gap
caused by a rejected request.
"""

from __future__ import annotations

import hmac
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable

from naca.audit import AuditLog
from naca.authcode import MAC_LENGTH, Counter, MacKey, canonical_encode, mac_compute, next_counter
from naca.controller.intents import Intent
from naca.policy.model import AccessMask

logger = logging.getLogger(__name__)


class TaggerError(RuntimeError):
    pass


class RequestDropped(TaggerError):
    def __init__(self, app_id: str, reason: str) -> None:
        self.app_id = app_id
        self.reason = reason
        super().__init__(f"request from {app_id!r} dropped: {reason}")


class TagRecordFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AppRequest:
    app_id: str
    credential: str
    intent: Intent
    requested_resources: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.requested_resources is None:
            object.__setattr__(self, "requested_resources", self.intent.resources)
        else:
            object.__setattr__(self, "requested_resources", frozenset(self.requested_resources))


def tag_message(app_id: str, request_id: str, mask_digest: bytes, counter: int) -> bytes:
    return canonical_encode(app_id, request_id, mask_digest, counter)


def compute_tag(key: MacKey, app_id: str, request_id: str, mask_digest: bytes, counter: int) -> bytes:
    return mac_compute(key, tag_message(app_id, request_id, mask_digest, counter))


_HDR = struct.Struct(">H")
_U64 = struct.Struct(">Q")


@dataclass(frozen=True)
class TagRecord:
    app_id: str
    request_id: str
    mask_digest: bytes
    counter: int
    mac: bytes

    def to_bytes(self) -> bytes:
        """Wire form used on the tagger-to-monitor channel."""
        a = self.app_id.encode()
        r = self.request_id.encode()
        return _HDR.pack(len(a)) + a + _HDR.pack(len(r)) + r + self.mask_digest + _U64.pack(self.counter) + self.mac

    @classmethod
    def from_bytes(cls, data: bytes) -> "TagRecord":
        try:
            pos = 0
            (n,) = _HDR.unpack_from(data, pos)
            pos += 2
            app_id = data[pos : pos + n].decode()
            pos += n
            (n,) = _HDR.unpack_from(data, pos)
            pos += 2
            request_id = data[pos : pos + n].decode()
            pos += n
            mask_digest = data[pos : pos + 32]
            pos += 32
            (counter,) = _U64.unpack_from(data, pos)
            pos += 8
            mac = data[pos:]
        except (struct.error, UnicodeDecodeError) as exc:
            raise TagRecordFormatError(str(exc)) from None
        if len(mask_digest) != 32 or len(mac) != MAC_LENGTH:
            raise TagRecordFormatError("truncated tag record")
        return cls(app_id, request_id, mask_digest, counter, mac)


@dataclass(frozen=True)
class ForwardedRequest:
    """What the controller receives: the untouched request plus its mask."""

    app_id: str
    request_id: str
    intent: Intent
    requested_resources: frozenset[str]
    mask: AccessMask


@dataclass
class IssuedTag:
    app_id: str
    request_id: str
    counter: int
    intent_bytes: bytes = field(repr=False)


class RequestTagger:
    def __init__(self, key: MacKey | None = None, audit: AuditLog | None = None, owner: str = "tagger") -> None:
        self._key = key
        self.audit = audit if audit is not None else AuditLog()
        self._credentials: dict[str, str] = {}
        self._masks: dict[str, AccessMask] = {}
        self._blocked: dict[str, str] = {}
        self._counter = Counter(0, owner)
        self.issued: list[IssuedTag] = []
        self._to_monitor: list[Callable[[TagRecord], None]] = []

    def provision_key(self, key: MacKey) -> None:
        self._key = key

    def connect_monitor(self, sink: Callable[[TagRecord], None]) -> None:
        self._to_monitor.append(sink)

    @property
    def counter(self) -> int:
        return self._counter.value

    def register_credential(self, app_id: str, credential: str) -> None:
        self._credentials[app_id] = credential

    def register_mask(self, mask: AccessMask) -> None:
        if mask.app_id in self._masks:
            raise TaggerError(f"mask for {mask.app_id!r} already registered; masks are immutable")
        self._masks[mask.app_id] = mask

    def mask_for(self, app_id: str) -> AccessMask | None:
        return self._masks.get(app_id)

    def block(self, app_id: str, reason: str) -> None:
        """Stop accepting requests from ``app_id`` (quarantine or termination)."""
        self._blocked.setdefault(app_id, reason)

    def revoke(self, app_id: str) -> None:
        self._masks.pop(app_id, None)
        self.block(app_id, "revoked")

    def is_blocked(self, app_id: str) -> bool:
        return app_id in self._blocked

    def _drop(self, req: AppRequest, reason: str) -> RequestDropped:
        logger.info("tagger dropped request from %s: %s", req.app_id, reason)
        self.audit.record("tagger", "dropped", app_id=req.app_id, reason=reason)
        return RequestDropped(req.app_id, reason)

    def tag_request(self, req: AppRequest) -> tuple[TagRecord, ForwardedRequest]:
        if self._key is None:
            raise TaggerError("tagger has no key; provision keys first")
        expected = self._credentials.get(req.app_id)
        if expected is None or not hmac.compare_digest(expected.encode(), req.credential.encode()):
            raise self._drop(req, "authentication failed")
        if req.app_id in self._blocked:
            raise self._drop(req, self._blocked[req.app_id])
        mask = self._masks.get(req.app_id)
        if mask is None:
            raise self._drop(req, "no access mask")
        outside = sorted(set(req.requested_resources) - set(mask.resources))
        if outside:
            raise self._drop(req, f"resources outside manifest: {','.join(outside)}")
        undeclared = sorted(req.intent.resources - set(req.requested_resources))
        if undeclared:
            raise self._drop(req, f"intent needs undeclared resources: {','.join(undeclared)}")

        self._counter = next_counter(self._counter)
        n = self._counter.value
        request_id = f"{req.app_id}/{n}"
        mac = compute_tag(self._key, req.app_id, request_id, mask.mask_digest, n)
        record = TagRecord(req.app_id, request_id, mask.mask_digest, n, mac)
        self.issued.append(IssuedTag(req.app_id, request_id, n, req.intent.to_bytes()))
        self.audit.record("tagger", "tagged", app_id=req.app_id, request_id=request_id, counter=n)
        for sink in self._to_monitor:
            sink(record)
        forwarded = ForwardedRequest(req.app_id, request_id, req.intent, req.requested_resources, mask)
        return record, forwarded
