"""Single-threaded, deterministic wiring of MANO, tagger, controller,
monitor and NIB.

Channels are in-process calls and ordered queues; the audit clock advances
once per externally driven step, so a given sequence of calls always yields
the same audit trail.
"""

from __future__ import annotations

import logging
from typing import Any, Callable, Iterable, Mapping

from naca.audit import AuditLog
from naca.controller.intents import Intent, Query
from naca.controller.mock import Fault, MockController
from naca.mano import AppRecord, Mano
from naca.monitor.monitor import Decision, ReferenceMonitor, Verdict
from naca.monitor.window import DEFAULT_WINDOW
from naca.nib import Nib, NibSnapshot, load_topology
from naca.policy.model import AccessModel, ResourceAccessRule
from naca.tagger import AppRequest, RequestDropped, RequestTagger, TagRecord

logger = logging.getLogger(__name__)

BatchTap = Callable[[str, str, list[Query]], Iterable[tuple[str, str, list[Query]]]]
RecordTap = Callable[[TagRecord], Any]


class Pipeline:
    def __init__(
        self,
        topology: str | Mapping[str, Any] | NibSnapshot = "mesh5",
        seed: int = 0,
        window: int = DEFAULT_WINDOW,
        mitigation: str = "quarantine",
        key_hex: str | None = None,
        nib_key_hex: str | None = None,
        operator_rules: Iterable[ResourceAccessRule] = (),
        max_retries: int = 3,
    ) -> None:
        self.audit = AuditLog()
        snapshot = topology if isinstance(topology, NibSnapshot) else load_topology(topology)
        self.nib = Nib(snapshot, audit=self.audit)
        self.tagger = RequestTagger(audit=self.audit)
        self.monitor = ReferenceMonitor(window=window, nonce_seed=seed, audit=self.audit)
        self.monitor.connect_nib(self.nib.execute, self.nib.node_attributes)
        self.controller = MockController(
            self.nib.read_view, self.audit, max_retries=max_retries, topology_version=lambda: self.nib.topology_version
        )
        self.mano = Mano(
            self.tagger, self.monitor, self.nib, self.audit,
            operator_rules=operator_rules, mitigation=mitigation, seed=seed,
        )
        # Harness-only interception points for tampering experiments.
        self.record_tap: RecordTap | None = None
        self.batch_tap: BatchTap | None = None
        self.tagger.connect_monitor(self._deliver_record)
        self.monitor.on_reject(self.mano.handle_mitigation)
        self.monitor.on_verdict(self._on_verdict)
        self.monitor.on_result(self._on_result)
        self.results: dict[str, list[Any]] = {}
        self.final_verdicts: list[Verdict] = []
        self.delivered: list[tuple[str, str, list[Query]]] = []
        self.mano.provision_keys(key_hex, nib_key_hex)

    # -- channels -----------------------------------------------------------

    def _deliver_record(self, record: TagRecord) -> None:
        payload = self.record_tap(record) if self.record_tap is not None else record
        if payload is not None:
            self.monitor.receive_tag_record(payload)

    def _on_verdict(self, verdict: Verdict) -> None:
        if verdict.decision is not Decision.HELD:
            self.final_verdicts.append(verdict)
        accepted = None if verdict.decision is Decision.HELD else verdict.decision is Decision.ACCEPT
        self.controller.on_verdict(verdict.request_id, accepted)

    def _on_result(self, request_id: str, results: list[Any]) -> None:
        self.results[request_id] = results
        self.controller.on_result(request_id, results)

    def pump(self) -> list[Verdict]:
        """Move every batch waiting in the controller's outbox to the monitor."""
        out: list[Verdict] = []
        while self.controller.outbox:
            app_id, request_id, batch = self.controller.outbox.popleft()
            deliveries = [(app_id, request_id, batch)]
            if self.batch_tap is not None:
                deliveries = list(self.batch_tap(app_id, request_id, batch))
            for claimed_app, claimed_request, queries in deliveries:
                self.delivered.append((claimed_app, claimed_request, list(queries)))
                out.extend(self.monitor.verify_batch(queries, claimed_app, claimed_request))
        return out

    # -- driver API ---------------------------------------------------------

    def tick(self) -> None:
        self.audit.clock += 1

    def enroll(self, app_id: str, manifest: Any, model: AccessModel, rules: Any = None) -> AppRecord:
        self.tick()
        return self.mano.enroll(manifest, model, app_id=app_id, rules=rules)

    def credential(self, app_id: str) -> str:
        return self.mano.credentials.get(app_id, "")

    def request(
        self,
        app_id: str,
        intent: Intent,
        requested_resources: Iterable[str] | None = None,
        credential: str | None = None,
    ) -> str | None:
        """Submit a request; returns its request id, or ``None`` if the tagger
        dropped it."""
        self.tick()
        req = AppRequest(
            app_id,
            self.credential(app_id) if credential is None else credential,
            intent,
            None if requested_resources is None else frozenset(requested_resources),
        )
        try:
            _, forwarded = self.tagger.tag_request(req)
        except RequestDropped:
            return None
        self.controller.submit(forwarded)
        self.controller.process()
        self.pump()
        return forwarded.request_id

    def fault(self, fault: Fault) -> None:
        self.tick()
        self.controller.inject_fault(fault)

    def flush(self) -> list[Verdict]:
        self.tick()
        self.controller.flush()
        out = self.pump()
        out.extend(self.monitor.flush())
        return out

    def terminate(self, app_id: str) -> list[str]:
        self.tick()
        return self.mano.terminate(app_id)

    def delegate(self, from_app: str, to_app: str, subset: Iterable[int]) -> Any:
        self.tick()
        self.mano.register_identity(to_app)
        return self.mano.delegate(from_app, to_app, subset)

    def verdict_for(self, request_id: str) -> Decision | None:
        for v in reversed(self.final_verdicts):
            if v.request_id == request_id:
                return v.decision
        return None
