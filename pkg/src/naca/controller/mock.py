"""An untrusted mock controller with a harness-only fault channel.

The controller has no handle on the NIB other than a read-only snapshot
provider; every batch it produces leaves through ``outbox`` towards the
reference monitor. Faults queued with :meth:`MockController.inject_fault`
apply to the next compiled request(s) and model a compromised controller.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from naca.audit import AuditLog
from naca.controller.compiler import CompileError, compile_intent
from naca.controller.intents import IntentKind, Query, QueryOp
from naca.controller.states import IllegalTransition, IntentEvent, IntentLifecycle, IntentState
from naca.nib import NibSnapshot
from naca.policy.model import AccessMask
from naca.tagger import ForwardedRequest

logger = logging.getLogger(__name__)

Batch = tuple[str, str, list[Query]]


class FaultKind(Enum):
    DELAY = "delay"
    REORDER = "reorder"
    FORGE_EXTRA = "forge_extra"
    DROP_BATCH = "drop_batch"
    SWAP_MASK = "swap_mask"
    REWRITE = "rewrite"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    k: int = 0
    perm: tuple[int, ...] = ()
    queries: tuple[dict[str, Any], ...] = ()
    app_id: str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", FaultKind(self.kind))
        if self.kind is FaultKind.DELAY and self.k < 1:
            raise ValueError("delay needs k >= 1")
        if self.kind is FaultKind.REORDER and sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"{self.perm} is not a permutation")
        if self.kind is FaultKind.FORGE_EXTRA and not self.queries:
            raise ValueError("forge_extra needs at least one query")

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> "Fault":
        raw = dict(raw)
        mode = raw.pop("mode")
        if "query" in raw:
            raw["queries"] = [raw.pop("query")]
        return cls(
            FaultKind(mode.replace("-", "_")),
            k=int(raw.get("k", 0)),
            perm=tuple(raw.get("perm", ())),
            queries=tuple(raw.get("queries", ())),
            app_id=raw.get("app_id"),
        )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"mode": self.kind.value}
        if self.k:
            out["k"] = self.k
        if self.perm:
            out["perm"] = list(self.perm)
        if self.queries:
            out["queries"] = list(self.queries)
        if self.app_id:
            out["app_id"] = self.app_id
        return out


def _forged(spec: dict[str, Any], app_id: str, request_id: str) -> Query:
    return Query(
        spec.get("app_id", app_id),
        spec.get("request_id", request_id),
        spec["op"],
        str(spec.get("target", "*")),
        tuple(sorted(spec.get("args", {}).items())),
    )


@dataclass
class _Tracked:
    request: ForwardedRequest
    lifecycle: IntentLifecycle
    batch: list[Query] = field(default_factory=list)


class MockController:
    def __init__(
        self,
        view: Callable[[], NibSnapshot],
        audit: AuditLog | None = None,
        max_retries: int = 3,
        topology_version: Callable[[], int] | None = None,
    ) -> None:
        self._view_provider = view
        self._version_provider = topology_version
        self._view: NibSnapshot | None = None
        self._view_version: int | None = None
        self.audit = audit if audit is not None else AuditLog()
        self.max_retries = max_retries
        self.intents: dict[str, _Tracked] = {}
        self._admitted: deque[str] = deque()
        self._faults: deque[Fault] = deque()
        self._delayed: list[list[Any]] = []
        self._reorder: tuple[tuple[int, ...], list[Batch]] | None = None
        self.outbox: deque[Batch] = deque()
        self.masks_seen: dict[str, AccessMask] = {}
        self.installed_flows: dict[str, list[tuple[str, str]]] = {}

    # -- inbound ------------------------------------------------------------

    def submit(self, fwd: ForwardedRequest) -> IntentState:
        lc = IntentLifecycle(self.max_retries)
        lc.fire(IntentEvent.APPLICATION_REQUEST)
        lc.fire(IntentEvent.TAGGED_QUERY_REQUEST)
        self.intents[fwd.request_id] = _Tracked(fwd, lc)
        self.masks_seen[fwd.app_id] = fwd.mask
        self._admitted.append(fwd.request_id)
        return lc.state

    def inject_fault(self, fault: Fault) -> None:
        self.audit.record("controller", "fault_injected", **fault.to_json())
        self._faults.append(fault)

    def state_of(self, request_id: str) -> IntentState | None:
        tracked = self.intents.get(request_id)
        return tracked.lifecycle.state if tracked else None

    # -- compilation --------------------------------------------------------

    def view(self) -> NibSnapshot:
        version = self._version_provider() if self._version_provider else None
        if self._view is None or version is None or version != self._view_version:
            self._view = self._view_provider()
            self._view_version = version
        return self._view

    def process(self) -> None:
        """Compile every admitted request in FIFO order."""
        while self._admitted:
            self._process_one(self._admitted.popleft())

    def _compile(self, tracked: _Tracked, mask: AccessMask | None) -> list[Query]:
        fwd = tracked.request
        return compile_intent(fwd.intent, fwd.app_id, fwd.request_id, mask, self.view(), self.installed_flows)

    def _process_one(self, request_id: str) -> None:
        tracked = self.intents[request_id]
        fwd, lc = tracked.request, tracked.lifecycle
        fault = self._faults.popleft() if self._faults else None
        mask: AccessMask | None = fwd.mask
        if fault is not None and fault.kind is FaultKind.SWAP_MASK:
            mask = self.masks_seen.get(fault.app_id) if fault.app_id else None
        lc.fire(IntentEvent.SUBMIT_FOR_COMPILATION)
        batch: list[Query] | None = None
        while batch is None:
            try:
                batch = self._compile(tracked, mask)
                if fwd.intent.kind is IntentKind.WITHDRAW:
                    self._start_withdrawal(str(fwd.intent.param("request_id")))
            except (CompileError, IllegalTransition) as exc:
                lc.fire(IntentEvent.COMPILE_FAILED)
                self.audit.record("controller", "compile_failed", request_id=request_id, reason=str(exc))
                if not lc.can_retry():
                    batch = []
                    break
                lc.fire(IntentEvent.RETRY_COMPILE)
                batch = None
        if lc.state is IntentState.COMPILING:
            lc.fire(IntentEvent.COMPILE_SUCCEEDED)
            lc.fire(IntentEvent.INSTALL_SUCCEEDED)
        if fault is not None and fault.kind is FaultKind.FORGE_EXTRA:
            batch = batch + [_forged(s, fwd.app_id, request_id) for s in fault.queries]
        elif fault is not None and fault.kind is FaultKind.REWRITE:
            batch = [_forged(s, fwd.app_id, request_id) for s in fault.queries]
        tracked.batch = batch
        item: Batch = (fwd.app_id, request_id, batch)
        if fault is not None and fault.kind is FaultKind.DROP_BATCH:
            self.audit.record("controller", "batch_dropped", request_id=request_id)
            return
        if fault is not None and fault.kind is FaultKind.DELAY:
            self._delayed.append([fault.k, item])
            return
        if fault is not None and fault.kind is FaultKind.REORDER and self._reorder is None:
            self._reorder = (fault.perm, [])
        if self._reorder is not None:
            perm, collected = self._reorder
            collected.append(item)
            if len(collected) == len(perm):
                self._reorder = None
                for i in perm:
                    self._release(collected[i])
            return
        self._release(item)

    def _start_withdrawal(self, target: str) -> None:
        tracked = self.intents.get(target)
        if tracked is None:
            raise CompileError(f"unknown request {target}")
        tracked.lifecycle.fire(IntentEvent.WITHDRAWAL_INSTALLED_REQUEST)

    def _release(self, item: Batch) -> None:
        self.outbox.append(item)
        due = []
        for entry in self._delayed:
            entry[0] -= 1
            if entry[0] <= 0:
                due.append(entry)
        for entry in due:
            self._delayed.remove(entry)
            self.outbox.append(entry[1])

    def flush(self) -> None:
        """Emit everything still held back by delay or reorder faults."""
        if self._reorder is not None:
            _, collected = self._reorder
            self._reorder = None
            for item in collected:
                self.outbox.append(item)
        for _, item in self._delayed:
            self.outbox.append(item)
        self._delayed.clear()

    # -- feedback from the monitor -----------------------------------------

    def on_verdict(self, request_id: str, accepted: bool | None) -> None:
        """``accepted`` is ``None`` while the monitor holds the batch."""
        tracked = self.intents.get(request_id)
        if tracked is None or accepted is None:
            return
        lc = tracked.lifecycle
        if lc.state is not IntentState.REF_MONITOR:
            return
        if accepted:
            lc.fire(IntentEvent.VERIFY_ACCESS_COMPLIANCE)
            intent = tracked.request.intent
            if intent.kind is IntentKind.WITHDRAW:
                target = str(intent.param("request_id"))
                self.installed_flows.pop(target, None)
                done = self.intents.get(target)
                if done is not None and done.lifecycle.state is IntentState.WITHDRAWING:
                    done.lifecycle.fire(IntentEvent.WITHDRAW_DONE)
        else:
            lc.fire(IntentEvent.REFERENCE_MONITOR_REJECTED)

    def on_result(self, request_id: str, results: list[Any]) -> None:
        tracked = self.intents.get(request_id)
        if tracked is None:
            return
        flows = [
            (q.target, r["flow_id"])
            for q, r in zip(tracked.batch, results)
            if q.op is QueryOp.FLOW_INSTALL and isinstance(r, dict) and "flow_id" in r
        ]
        if flows:
            self.installed_flows[request_id] = flows

    def withdraw_failed(self, request_id: str) -> IntentState:
        return self.intents[request_id].lifecycle.fire(IntentEvent.WITHDRAWAL_OF_FAILED_REQUESTS)
