"""Reference monitor: the last check between the controller and the NIB.

For each batch of compiled queries the monitor locates the tag record the
tagger sent for the claimed request, recomputes the tag from the mask
registered by MANO (never the copy the controller relays), runs the sliding
window, and checks every query against the mask. Only batches that pass all
of it are sealed with ``K_NIB`` and forwarded.
"""

from __future__ import annotations

import hmac
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Sequence

from naca.audit import AuditLog
from naca.authcode import MacKey, NonceSource
from naca.controller.intents import OP_ACCESS, Query, QueryOp
from naca.monitor.window import DEFAULT_WINDOW, SlidingWindow, WindowOutcome
from naca.nib import SealedQuery, seal
from naca.policy.model import AccessMask, Action, Attribute
from naca.tagger import TagRecord, TagRecordFormatError, compute_tag

logger = logging.getLogger(__name__)


class Decision(Enum):
    ACCEPT = "accept"
    HELD = "held"
    REJECT_MAC = "reject_mac"
    REJECT_STALE = "reject_stale"
    REJECT_WINDOW = "reject_window"
    REJECT_MASK_RESOURCE = "reject_mask_resource"
    REJECT_MASK_ACTION = "reject_mask_action"
    REJECT_MASK_ATTRIBUTE = "reject_mask_attribute"

    @property
    def rejected(self) -> bool:
        return self not in (Decision.ACCEPT, Decision.HELD)


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    app_id: str
    request_id: str
    counter: int | None = None
    reason: str = ""
    index: int | None = None


# Scope arguments the monitor owns on whole-topology reads. Whatever the
# controller put there is replaced by the mask's allowed values.
SCOPE_ARGS = {Attribute.JURISDICTION: "scope_jurisdiction", Attribute.PLACEMENT: "scope_placement"}
_WILDCARD_OPS = frozenset({QueryOp.TOPO_READ, QueryOp.SUBSCRIBE})


def modification_type(action: Action) -> str:
    return "modify" if action is Action.CONFIG_MOD else "read"


def check_query(
    mask: AccessMask, q: Query, resolve: Callable[[str], dict[str, str] | None]
) -> tuple[Decision | None, str, Query]:
    """Check one query against a mask. Returns ``(None, "", rewritten)`` on
    success, otherwise the reject decision and reason."""
    access = OP_ACCESS.get(q.op)
    if access is None:
        return Decision.REJECT_MASK_RESOURCE, f"unknown op {q.op!r}", q
    resource, action = access
    tup = mask.tuple_for(resource)
    if tup is None:
        return Decision.REJECT_MASK_RESOURCE, f"{resource} not in mask", q
    if action not in tup.actions:
        return Decision.REJECT_MASK_ACTION, f"{action.value} on {resource} not permitted", q
    allowed_mod = tup.allowed_values(Attribute.MODIFICATION_TYPE)
    if allowed_mod is not None and modification_type(action) not in allowed_mod:
        return Decision.REJECT_MASK_ATTRIBUTE, f"modification_type={modification_type(action)} not allowed", q
    if q.op in _WILDCARD_OPS:
        if q.target != "*":
            return Decision.REJECT_MASK_RESOURCE, f"{q.op.value} target must be '*'", q
        scope = {}
        for attribute, arg in SCOPE_ARGS.items():
            allowed = tup.allowed_values(attribute)
            if allowed is not None:
                scope[arg] = ",".join(sorted(allowed))
        args = {k: v for k, v in q.args if k not in SCOPE_ARGS.values()}
        args.update(scope)
        return None, "", Query(q.app_id, q.request_id, q.op, q.target, tuple(sorted(args.items())))
    attrs = resolve(q.target)
    if attrs is None:
        return Decision.REJECT_MASK_RESOURCE, f"unknown target {q.target!r}", q
    for attribute in SCOPE_ARGS:
        allowed = tup.allowed_values(attribute)
        if allowed is not None and attrs.get(attribute.value) not in allowed:
            return (
                Decision.REJECT_MASK_ATTRIBUTE,
                f"{q.target} has {attribute.value}={attrs.get(attribute.value)}, mask allows {sorted(allowed)}",
                q,
            )
    return None, "", q


@dataclass
class _Pending:
    record: TagRecord
    # None once the batch has been rejected while held.
    queries: list[Query] | None


class ReferenceMonitor:
    def __init__(
        self,
        key: MacKey | None = None,
        nib_key: MacKey | None = None,
        resolver: Callable[[str], dict[str, str] | None] | None = None,
        window: int = DEFAULT_WINDOW,
        nonce_seed: int | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        self._key = key
        self._nib_key = nib_key
        self._resolver = resolver
        self.audit = audit if audit is not None else AuditLog()
        self._nonces = NonceSource(nonce_seed)
        self._masks: dict[str, AccessMask] = {}
        self._blocked: dict[str, str] = {}
        self._by_request: dict[str, TagRecord] = {}
        self._by_counter: dict[int, TagRecord] = {}
        self.window: SlidingWindow[_Pending] = SlidingWindow(self._owner_of, window)
        self._emit: list[Callable[[SealedQuery], Any]] = []
        self._on_result: list[Callable[[str, list[Any]], None]] = []
        self._on_verdict: list[Callable[[Verdict], None]] = []
        self._on_reject: list[Callable[[Verdict], None]] = []
        self.verdicts: list[Verdict] = []

    # -- provisioning -------------------------------------------------------

    def provision_keys(self, key: MacKey, nib_key: MacKey) -> None:
        self._key = key
        self._nib_key = nib_key

    def connect_nib(self, execute: Callable[[SealedQuery], Any], resolver: Callable[[str], dict[str, str] | None]) -> None:
        self._emit.append(execute)
        self._resolver = resolver

    def on_result(self, callback: Callable[[str, list[Any]], None]) -> None:
        self._on_result.append(callback)

    def on_verdict(self, callback: Callable[[Verdict], None]) -> None:
        self._on_verdict.append(callback)

    def on_reject(self, callback: Callable[[Verdict], None]) -> None:
        """MANO notification hook; called for every rejected batch."""
        self._on_reject.append(callback)

    def register_mask(self, mask: AccessMask) -> None:
        if mask.app_id in self._masks:
            raise ValueError(f"mask for {mask.app_id!r} already registered")
        self._masks[mask.app_id] = mask

    def revoke(self, app_id: str) -> None:
        self._masks.pop(app_id, None)
        self.block(app_id, "revoked")

    def block(self, app_id: str, reason: str) -> None:
        self._blocked.setdefault(app_id, reason)

    def _owner_of(self, counter: int) -> str | None:
        rec = self._by_counter.get(counter)
        return rec.app_id if rec is not None else None

    # -- tagger channel -----------------------------------------------------

    def receive_tag_record(self, record: TagRecord | bytes) -> bool:
        if isinstance(record, (bytes, bytearray)):
            try:
                record = TagRecord.from_bytes(bytes(record))
            except TagRecordFormatError as exc:
                self.audit.record("monitor", "malformed_record", reason=str(exc))
                return False
        if record.counter in self._by_counter or record.request_id in self._by_request:
            logger.warning("replayed tag record %s/%d", record.request_id, record.counter)
            self.audit.record(
                "monitor", "replay", app_id=record.app_id, request_id=record.request_id, counter=record.counter
            )
            return False
        self._by_counter[record.counter] = record
        self._by_request[record.request_id] = record
        return True

    # -- controller channel -------------------------------------------------

    def verify_batch(self, batch: Sequence[Query], claimed_app: str, claimed_request: str) -> list[Verdict]:
        """Judge one batch. Returns every verdict finalised by this arrival:
        the batch's own verdict first, then any held batches it released or
        invalidated."""
        out: list[Verdict] = []
        record = self._by_request.get(claimed_request)
        if record is None:
            return self._finish(out, Verdict(Decision.REJECT_MAC, claimed_app, claimed_request, None, "no tag record"))
        reason = self._tag_failure(record, claimed_app, claimed_request)
        if reason:
            return self._finish(out, Verdict(Decision.REJECT_MAC, claimed_app, claimed_request, record.counter, reason))

        pending = _Pending(record, list(batch))
        res = self.window.check(record.counter, claimed_app, pending)
        n = record.counter
        if res.outcome is WindowOutcome.STALE:
            return self._finish(out, Verdict(Decision.REJECT_STALE, claimed_app, claimed_request, n, "counter already consumed"))
        if res.outcome is WindowOutcome.INVALIDATED:
            return self._finish(out, Verdict(Decision.REJECT_WINDOW, claimed_app, claimed_request, n, "skipped by an earlier invalidation"))
        if res.outcome is WindowOutcome.INVALIDATE:
            for c, held in res.victims:
                if held.queries is not None:
                    self._finish(out, Verdict(Decision.REJECT_WINDOW, held.record.app_id, held.record.request_id, c, f"invalidated by arrival of counter {n}"))
            return self._finish(out, Verdict(Decision.REJECT_WINDOW, claimed_app, claimed_request, n, "out-of-window arrival"))

        verdict, rewritten = self._check_mask(record, batch)
        if res.outcome is WindowOutcome.HELD:
            if verdict is not None:
                pending.queries = None
                return self._finish(out, verdict)
            pending.queries = rewritten
            self._finish(out, Verdict(Decision.HELD, claimed_app, claimed_request, n, "waiting for earlier counters"))
            return out
        if verdict is not None:
            self._finish(out, verdict)
        else:
            self._accept(out, record, rewritten)
        for c, held in res.released:
            if held.queries is None:
                continue  # rejected on arrival; already reported
            late = self._blocked_reason(held.record.app_id)
            if late:
                self._finish(out, Verdict(Decision.REJECT_MASK_RESOURCE, held.record.app_id, held.record.request_id, c, late))
            else:
                self._accept(out, held.record, held.queries)
        return out

    def flush(self) -> list[Verdict]:
        out: list[Verdict] = []
        for c, held in self.window.flush():
            if held.queries is not None:
                self._finish(out, Verdict(Decision.REJECT_WINDOW, held.record.app_id, held.record.request_id, c, "gap never closed"))
        return out

    # -- internals ----------------------------------------------------------

    def _tag_failure(self, record: TagRecord, claimed_app: str, claimed_request: str) -> str:
        if self._key is None:
            return "monitor has no tag key"
        if record.app_id != claimed_app or record.request_id != claimed_request:
            return "tag record does not match the claimed request"
        mask = self._masks.get(claimed_app)
        expected_digest = mask.mask_digest if mask is not None else record.mask_digest
        if record.mask_digest != expected_digest:
            return "mask digest differs from the registered mask"
        mu = compute_tag(self._key, claimed_app, claimed_request, expected_digest, record.counter)
        if not hmac.compare_digest(mu, record.mac):
            return "tag MAC mismatch"
        return ""

    def _blocked_reason(self, app_id: str) -> str:
        if app_id not in self._masks:
            return "application has no registered mask"
        if app_id in self._blocked:
            return f"application {self._blocked[app_id]}"
        return ""

    def _check_mask(self, record: TagRecord, batch: Sequence[Query]) -> tuple[Verdict | None, list[Query]]:
        app_id, request_id, n = record.app_id, record.request_id, record.counter
        blocked = self._blocked_reason(app_id)
        if blocked:
            return Verdict(Decision.REJECT_MASK_RESOURCE, app_id, request_id, n, blocked), []
        mask = self._masks[app_id]
        cache: dict[str, dict[str, str] | None] = {}

        def resolve(target: str) -> dict[str, str] | None:
            if target not in cache:
                cache[target] = self._resolver(target) if self._resolver is not None else None
            return cache[target]

        rewritten = []
        for i, q in enumerate(batch):
            if not isinstance(q, Query):
                return Verdict(Decision.REJECT_MASK_RESOURCE, app_id, request_id, n, "malformed query", i), []
            if q.app_id != app_id or q.request_id != request_id:
                return Verdict(Decision.REJECT_MAC, app_id, request_id, n, "query attributed to another request", i), []
            decision, reason, q2 = check_query(mask, q, resolve)
            if decision is not None:
                return Verdict(decision, app_id, request_id, n, f"query {i}: {reason}", i), []
            rewritten.append(q2)
        return None, rewritten

    def _accept(self, out: list[Verdict], record: TagRecord, queries: list[Query]) -> None:
        assert self._nib_key is not None
        results = []
        for q in queries:
            sealed = seal(self._nib_key, q, self._nonces.fresh())
            for emit in self._emit:
                results.append(emit(sealed))
        self._finish(out, Verdict(Decision.ACCEPT, record.app_id, record.request_id, record.counter, f"{len(queries)} queries"))
        for cb in self._on_result:
            cb(record.request_id, results)

    def _finish(self, out: list[Verdict], verdict: Verdict) -> list[Verdict]:
        out.append(verdict)
        self.verdicts.append(verdict)
        fields = dict(
            app_id=verdict.app_id,
            request_id=verdict.request_id,
            counter=verdict.counter,
            verdict=verdict.decision.value,
            reason=verdict.reason,
        )
        self.audit.record("monitor", "verdict", **fields)
        for cb in self._on_verdict:
            cb(verdict)
        if verdict.decision.rejected:
            for cb in self._on_reject:
                cb(verdict)
        return out
