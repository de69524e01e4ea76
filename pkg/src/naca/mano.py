"""Management and orchestration: enrollment, keys, the mask dictionary,
termination and mitigation.

Enrollment is all-or-nothing. The manifest is parsed, checked against the
resource catalogue, turned into a mask and gated on conflict detection; only
a clean candidate is registered at the tagger and the monitor.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

from naca.audit import AuditLog
from naca.authcode import MacKey
from naca.controller.intents import RESOURCE_CATALOGUE
from naca.policy.access_models import (
    Admission,
    DelegationError,
    UnknownApplication,
    admit_under_model,
    delegation_children,
    derive_delegated_mask,
    revocation_set,
)
from naca.policy.algebra import build_operator_policy_set, compute_access_mask, detect_conflicts, validate_requested_resources
from naca.policy.grammar import parse_manifest, parse_rules
from naca.policy.model import AccessMask, AccessModel, ConflictReport, DeploymentManifest, PolicyError, ResourceAccessRule

logger = logging.getLogger(__name__)


class AppStatus(Enum):
    CANDIDATE = "candidate"
    INSTALLED = "installed"
    QUARANTINED = "quarantined"
    TERMINATED = "terminated"


class EnrollmentError(PolicyError):
    pass


class CatalogueViolation(EnrollmentError):
    def __init__(self, missing: list[str]) -> None:
        self.missing = missing
        super().__init__(f"manifest requests resources outside the catalogue: {missing}")


class EnrollmentRejected(EnrollmentError):
    def __init__(self, app_id: str, report: ConflictReport) -> None:
        self.report = report
        pairs = ", ".join(f"{c.app_b}@{c.resource} ({c.reason})" for c in report.pairs)
        super().__init__(f"{app_id} conflicts with installed applications: {pairs}")


@dataclass
class AppRecord:
    app_id: str
    manifest: DeploymentManifest | None
    mask: AccessMask
    model: AccessModel
    status: AppStatus = AppStatus.INSTALLED
    parent: str | None = None
    children: list[str] = field(default_factory=list)


class Mano:
    def __init__(
        self,
        tagger: Any,
        monitor: Any,
        nib: Any = None,
        audit: AuditLog | None = None,
        catalogue: Iterable[str] = RESOURCE_CATALOGUE,
        operator_rules: Iterable[ResourceAccessRule] = (),
        mitigation: str | Callable[["Mano", Any], str] = "quarantine",
        seed: int | None = None,
    ) -> None:
        self.tagger = tagger
        self.monitor = monitor
        self.nib = nib
        self.audit = audit if audit is not None else AuditLog()
        self.catalogue = frozenset(catalogue)
        self.operator_rules: list[ResourceAccessRule] = list(operator_rules)
        self.apps: dict[str, AppRecord] = {}
        self.credentials: dict[str, str] = {}
        self._rng = random.Random(seed)
        self._mitigation = mitigation
        self.mitigations: list[dict[str, Any]] = []

    # -- keys and identities ------------------------------------------------

    def provision_keys(self, key_hex: str | None = None, nib_key_hex: str | None = None) -> tuple[MacKey, MacKey]:
        k = MacKey.from_hex("K", key_hex) if key_hex else MacKey.generate("K", self._rng)
        k_nib = MacKey.from_hex("K_NIB", nib_key_hex) if nib_key_hex else MacKey.generate("K_NIB", self._rng)
        self.tagger.provision_key(k)
        self.monitor.provision_keys(k, k_nib)
        if self.nib is not None:
            self.nib.provision_key(k_nib)
        self.audit.record("mano", "keys_provisioned", key_ids=["K", "K_NIB"])
        return k, k_nib

    def register_identity(self, app_id: str) -> str:
        """Issue a credential for ``app_id`` (stands in for certificate-based
        application authentication)."""
        if app_id not in self.credentials:
            token = self._rng.randbytes(16).hex()
            self.credentials[app_id] = token
            self.tagger.register_credential(app_id, token)
        return self.credentials[app_id]

    # -- enrollment ---------------------------------------------------------

    @property
    def masks(self) -> dict[str, AccessMask]:
        """The dictionary of masks held by live (installed or quarantined) apps."""
        return {a: r.mask for a, r in self.apps.items() if r.status is not AppStatus.TERMINATED}

    def enroll(
        self,
        manifest: Any,
        model: AccessModel,
        app_id: str | None = None,
        rules: Iterable[ResourceAccessRule] | Any | None = None,
    ) -> AppRecord:
        dm = manifest if isinstance(manifest, DeploymentManifest) else parse_manifest(manifest, app_id=app_id)
        if app_id is not None and dm.app_id != app_id:
            dm = DeploymentManifest(app_id, dm.entries)
        if dm.app_id in self.apps:
            raise EnrollmentError(f"{dm.app_id} is already enrolled")
        if rules is None:
            rule_list = self.operator_rules
        elif isinstance(rules, (list, tuple)) and all(isinstance(r, ResourceAccessRule) for r in rules):
            rule_list = list(rules)
        else:
            rule_list = parse_rules(rules)
        missing = validate_requested_resources(dm, self.catalogue)
        if missing:
            self.audit.record("mano", "enroll_rejected", app_id=dm.app_id, reason="catalogue", missing=missing)
            raise CatalogueViolation(missing)
        op = build_operator_policy_set(rule_list, dm)
        mask = compute_access_mask(op, dm, model)
        report = detect_conflicts(mask, self.masks)
        if report:
            self.audit.record(
                "mano", "enroll_rejected", app_id=dm.app_id, reason="conflict",
                conflicts=[[c.app_b, c.resource, c.reason] for c in report.pairs],
            )
            raise EnrollmentRejected(dm.app_id, report)
        self.register_identity(dm.app_id)
        self._install(mask)
        record = AppRecord(dm.app_id, dm, mask, model)
        self.apps[dm.app_id] = record
        self.audit.record(
            "mano", "enrolled", app_id=dm.app_id, model=model.variant.value, mask_digest=mask.mask_digest,
            resources=list(mask.resources),
        )
        return record

    def _install(self, mask: AccessMask) -> None:
        self.tagger.register_mask(mask)
        self.monitor.register_mask(mask)

    # -- delegation and termination ----------------------------------------

    def delegate(self, from_app: str, to_app: str, subset: Iterable[int]) -> AccessMask:
        parent = self.apps.get(from_app)
        if parent is None or parent.status is not AppStatus.INSTALLED:
            raise UnknownApplication(from_app)
        if to_app not in self.credentials:
            raise DelegationError(f"{to_app} has no registered identity")
        if to_app in self.apps:
            raise DelegationError(f"{to_app} already holds a mask")
        derived = derive_delegated_mask(parent.mask, to_app, subset)
        self._install(derived)
        self.apps[to_app] = AppRecord(to_app, None, derived, derived.model, parent=from_app)
        parent.children.append(to_app)
        self.audit.record("mano", "delegated", app_id=to_app, parent=from_app, resources=list(derived.resources))
        return derived

    def terminate(self, app_id: str) -> list[str]:
        record = self.apps.get(app_id)
        if record is None:
            raise UnknownApplication(app_id)
        revoked = revocation_set(delegation_children(self.masks), app_id)
        for target in [app_id, *revoked]:
            rec = self.apps[target]
            rec.status = AppStatus.TERMINATED
            self.tagger.revoke(target)
            self.monitor.revoke(target)
        self.audit.record("mano", "terminated", app_id=app_id, revoked=revoked)
        return revoked

    def admit(self, resource: str, app_id: str, contenders: Iterable[str] = ()) -> Admission:
        return admit_under_model(self.masks, resource, app_id, contenders)

    # -- mitigation ---------------------------------------------------------

    def handle_mitigation(self, event: Any) -> dict[str, Any]:
        """React to a monitor reject. The default policy quarantines the
        application the rejected batch was attributed to."""
        app_id = getattr(event, "app_id", None) or event.get("app_id")
        decision = getattr(getattr(event, "decision", None), "value", None) or event.get("verdict")
        if callable(self._mitigation):
            action = self._mitigation(self, event)
        elif self._mitigation == "quarantine":
            action = self.quarantine(app_id, f"quarantined after {decision}")
        elif self._mitigation == "log":
            action = "logged"
        else:
            raise ValueError(f"unknown mitigation policy {self._mitigation!r}")
        entry = {"app_id": app_id, "verdict": decision, "action": action}
        self.mitigations.append(entry)
        self.audit.record("mano", "mitigation", **entry)
        return entry

    def quarantine(self, app_id: str, reason: str = "quarantined") -> str:
        record = self.apps.get(app_id)
        if record is None or record.status is not AppStatus.INSTALLED:
            return "none"
        record.status = AppStatus.QUARANTINED
        self.tagger.block(app_id, reason)
        self.monitor.block(app_id, reason)
        return "quarantine"
